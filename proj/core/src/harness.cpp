#include "mhe/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

namespace mhe {

std::string format_number(double value) {
    if (std::isnan(value)) {
        return "nan";
    }
    if (std::isinf(value)) {
        return value > 0 ? "inf" : "-inf";
    }
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", value);
    return buf;
}

// ---------------------------------------------------------------------------
// Scenario parsing

namespace {

// Round-trip precision for metrics.txt.
std::string exact_number(double value) {
    if (!std::isfinite(value)) {
        return format_number(value);
    }
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
}

struct KeySpec {
    std::string_view section;
    std::string_view key;
    bool required;
};

constexpr KeySpec kSchema[] = {
    {"scenario", "name", true},        {"scenario", "family", false},      {"scenario", "seed", false},
    {"scenario", "t0", true},          {"scenario", "tf", true},           {"scenario", "Ts", true},
    {"model", "kind", true},           {"model", "provenance", false},     {"truth", "x0", true},
    {"truth", "method", false},        {"truth", "substeps", false},       {"input", "kind", false},
    {"input", "value", false},         {"input", "table", false},          {"noise", "amplitude", false},
    {"integrator", "method", false},   {"integrator", "substeps", false},  {"estimator", "mode", true},
    {"estimator", "N", true},          {"estimator", "N_Ts", true},        {"estimator", "K", true},
    {"estimator", "optimizer", false}, {"estimator", "step_size", false},  {"estimator", "damping", false},
    {"estimator", "fd_step", false},   {"estimator", "hessian_fd_step", false},
    {"estimator", "early_exit", false}, {"estimator", "guess", true},      {"estimator", "delta_min", false},
    {"estimator", "d_min", false},     {"estimator", "N_max", false},      {"estimator", "raw_weight", false},
    {"estimator", "filtered_weight", false}, {"filters", "bank", false},   {"filters", "dirty_pole", false},
    {"filters", "leak", false},
};

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

double parse_double(const std::string& key, const std::string& text) {
    const std::string t = trim(text);
    char* end = nullptr;
    const double v = std::strtod(t.c_str(), &end);
    if (t.empty() || end != t.c_str() + t.size() || std::isnan(v)) {
        throw ConfigError(key + ": '" + text + "' is not a number");
    }
    return v;
}

std::size_t parse_count(const std::string& key, const std::string& text, bool allow_infinite = false) {
    const double v = parse_double(key, text);
    if (allow_infinite && std::isinf(v) && v > 0) {
        return unlimited_spacing;
    }
    if (!std::isfinite(v) || v < 0 || v != std::floor(v)) {
        throw ConfigError(key + ": '" + text + "' is not a nonnegative integer");
    }
    return static_cast<std::size_t>(v);
}

std::vector<double> parse_list(const std::string& key, const std::string& text) {
    std::vector<double> values;
    std::string normalized = text;
    std::replace(normalized.begin(), normalized.end(), ',', ' ');
    std::istringstream in(normalized);
    std::string token;
    while (in >> token) {
        values.push_back(parse_double(key, token));
    }
    return values;
}

Vector parse_vector(const std::string& key, const std::string& text) {
    const auto values = parse_list(key, text);
    return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

/// Rows separated by ';', entries by whitespace or ','.
Matrix parse_matrix(const std::string& key, const std::string& text) {
    std::vector<std::vector<double>> rows;
    std::istringstream in(text);
    std::string row;
    while (std::getline(in, row, ';')) {
        rows.push_back(parse_list(key, row));
    }
    if (rows.empty()) {
        throw ConfigError(key + ": empty value");
    }
    const std::size_t cols = rows.front().size();
    Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != cols) {
            throw ConfigError(key + ": ragged matrix rows");
        }
        for (std::size_t j = 0; j < cols; ++j) {
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
        }
    }
    return m;
}

IntegrationMethod parse_method(const std::string& key, const std::string& text) {
    if (text == "rk4") {
        return IntegrationMethod::rk4;
    }
    if (text == "euler") {
        return IntegrationMethod::euler;
    }
    throw ConfigError(key + ": unknown integration method '" + text + "'");
}

class KeyValues {
public:
    explicit KeyValues(std::map<std::string, std::string> values) : values_(std::move(values)) {}

    [[nodiscard]] bool has(const std::string& key) const { return values_.contains(key); }
    [[nodiscard]] const std::string& get(const std::string& key) const { return values_.at(key); }
    [[nodiscard]] std::string get_or(const std::string& key, const std::string& fallback) const {
        return has(key) ? get(key) : fallback;
    }
    [[nodiscard]] double number(const std::string& key) const { return parse_double(key, get(key)); }
    [[nodiscard]] double number_or(const std::string& key, double fallback) const {
        return has(key) ? number(key) : fallback;
    }
    [[nodiscard]] const std::map<std::string, std::string>& all() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

}  // namespace

Scenario parse_scenario(const std::string& text, const ScenarioOverrides& overrides) {
    std::map<std::string, std::string> values;
    std::vector<std::string> order;
    std::istringstream in(text);
    std::string line;
    std::string section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) {
            line.erase(hash);
        }
        const std::string content = trim(line);
        if (content.empty()) {
            continue;
        }
        if (content.front() == '[') {
            if (content.back() != ']') {
                throw ConfigError("line " + std::to_string(line_no) + ": malformed section header");
            }
            section = trim(std::string_view(content).substr(1, content.size() - 2));
            continue;
        }
        const auto eq = content.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
        }
        if (section.empty()) {
            throw ConfigError("line " + std::to_string(line_no) + ": key outside of a section");
        }
        const std::string key = section + "." + trim(std::string_view(content).substr(0, eq));
        if (values.contains(key)) {
            throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
        }
        values[key] = trim(std::string_view(content).substr(eq + 1));
        order.push_back(key);
    }
    for (const auto& [key, value] : overrides) {
        if (!values.contains(key)) {
            order.push_back(key);
        }
        values[key] = value;
    }

    // Strict key check. Model coefficients are validated against the model catalog.
    std::vector<std::string> unknown;
    for (const auto& [key, value] : values) {
        if (key.rfind("model.", 0) == 0) {
            continue;
        }
        const bool known = std::any_of(std::begin(kSchema), std::end(kSchema), [&](const KeySpec& entry) {
            return key == std::string(entry.section) + "." + std::string(entry.key);
        });
        if (!known) {
            unknown.push_back(key);
        }
    }
    if (!unknown.empty()) {
        std::string msg = "unknown scenario key(s):";
        for (const auto& k : unknown) {
            msg += " " + k;
        }
        throw ConfigError(msg);
    }
    std::vector<std::string> missing;
    for (const auto& entry : kSchema) {
        const std::string key = std::string(entry.section) + "." + std::string(entry.key);
        if (entry.required && !values.contains(key)) {
            missing.push_back(key);
        }
    }
    if (!missing.empty()) {
        std::string msg = "missing required scenario key(s):";
        for (const auto& k : missing) {
            msg += " " + k;
        }
        throw ConfigError(msg);
    }

    const KeyValues kv(values);
    Scenario sc;
    for (const auto& key : order) {
        sc.echo.emplace_back(key, values.at(key));
    }

    sc.name = kv.get("scenario.name");
    sc.family = kv.get_or("scenario.family", sc.name);
    sc.seed = kv.has("scenario.seed") ? parse_count("scenario.seed", kv.get("scenario.seed")) : 0;
    sc.t0 = kv.number("scenario.t0");
    sc.tf = kv.number("scenario.tf");
    sc.base_period = kv.number("scenario.Ts");
    if (!(sc.tf > sc.t0)) {
        throw ConfigError("scenario: tf must be greater than t0");
    }
    if (!(sc.base_period > 0.0) || !std::isfinite(sc.base_period)) {
        throw ConfigError("scenario: Ts must be positive");
    }

    sc.model_kind = parse_model_kind(kv.get("model.kind"));
    sc.provenance = kv.get_or("model.provenance", "");
    for (const auto& [key, value] : values) {
        if (key.rfind("model.", 0) == 0 && key != "model.kind" && key != "model.provenance") {
            sc.params[key.substr(6)] = parse_matrix(key, value);
        }
    }
    const ContinuousModel model = make_model(sc.model_kind, sc.params);

    sc.x0 = parse_vector("truth.x0", kv.get("truth.x0"));
    if (static_cast<std::size_t>(sc.x0.size()) != model.n) {
        throw ConfigError("truth.x0: expected " + std::to_string(model.n) + " components");
    }

    IntegratorConfig integrator;
    integrator.method = parse_method("integrator.method", kv.get_or("integrator.method", "rk4"));
    integrator.substeps_per_period =
        static_cast<int>(parse_count("integrator.substeps", kv.get_or("integrator.substeps", "10")));
    sc.truth_integrator.method = parse_method("truth.method", kv.get_or("truth.method", kv.get_or("integrator.method", "rk4")));
    sc.truth_integrator.substeps_per_period = kv.has("truth.substeps")
                                                  ? static_cast<int>(parse_count("truth.substeps", kv.get("truth.substeps")))
                                                  : integrator.substeps_per_period;
    if (integrator.substeps_per_period < 1 || sc.truth_integrator.substeps_per_period < 1) {
        throw ConfigError("integrator: substeps must be >= 1");
    }

    const std::string input_kind = kv.get_or("input.kind", "constant");
    if (input_kind == "constant") {
        Vector value = kv.has("input.value") ? parse_vector("input.value", kv.get("input.value"))
                                             : Vector::Zero(static_cast<Eigen::Index>(model.m));
        sc.input.breakpoints.emplace_back(sc.t0, std::move(value));
    } else if (input_kind == "table") {
        if (!kv.has("input.table")) {
            throw ConfigError("input.table: required when input.kind = table");
        }
        std::istringstream rows(kv.get("input.table"));
        std::string entry;
        while (std::getline(rows, entry, ';')) {
            const auto colon = entry.find(':');
            if (colon == std::string::npos) {
                throw ConfigError("input.table: entries must look like 'time: values'");
            }
            sc.input.breakpoints.emplace_back(parse_double("input.table", entry.substr(0, colon)),
                                              parse_vector("input.table", entry.substr(colon + 1)));
        }
        if (sc.input.breakpoints.empty() || sc.input.breakpoints.front().first > sc.t0) {
            throw ConfigError("input.table: the first breakpoint must be at or before t0");
        }
        for (std::size_t i = 1; i < sc.input.breakpoints.size(); ++i) {
            if (!(sc.input.breakpoints[i].first > sc.input.breakpoints[i - 1].first)) {
                throw ConfigError("input.table: breakpoint times must increase");
            }
        }
    } else {
        throw ConfigError("input.kind: unknown input kind '" + input_kind + "'");
    }
    for (const auto& [time, value] : sc.input.breakpoints) {
        if (static_cast<std::size_t>(value.size()) != model.m) {
            throw ConfigError("input: expected " + std::to_string(model.m) + " components per value");
        }
    }

    sc.noise_amplitude = kv.number_or("noise.amplitude", 0.0);
    if (!(sc.noise_amplitude >= 0.0)) {
        throw ConfigError("noise.amplitude must be nonnegative");
    }

    MheConfig& cfg = sc.estimator;
    cfg.base_period = sc.base_period;
    cfg.integrator = integrator;
    cfg.mode = parse_estimator_mode(kv.get("estimator.mode"));
    cfg.window = parse_count("estimator.N", kv.get("estimator.N"));
    cfg.downsample = parse_count("estimator.N_Ts", kv.get("estimator.N_Ts"));
    cfg.optimizer.iterations = static_cast<int>(parse_count("estimator.K", kv.get("estimator.K")));
    cfg.optimizer.kind = parse_optimizer_kind(kv.get_or("estimator.optimizer", "gauss_newton"));
    cfg.optimizer.step_size = kv.number_or("estimator.step_size", cfg.optimizer.step_size);
    cfg.optimizer.damping = kv.number_or("estimator.damping", cfg.optimizer.damping);
    cfg.optimizer.fd_step = kv.number_or("estimator.fd_step", cfg.optimizer.fd_step);
    cfg.optimizer.hessian_fd_step = kv.number_or("estimator.hessian_fd_step", cfg.optimizer.hessian_fd_step);
    cfg.optimizer.early_exit_tolerance = kv.number_or("estimator.early_exit", 0.0);
    cfg.delta_min = kv.number_or("estimator.delta_min", 0.0);
    cfg.d_min = kv.number_or("estimator.d_min", 0.0);
    cfg.max_spacing = kv.has("estimator.N_max") ? parse_count("estimator.N_max", kv.get("estimator.N_max"), true)
                                                 : unlimited_spacing;
    cfg.raw_weight = kv.number_or("estimator.raw_weight", 1.0);
    cfg.filtered_weight = kv.number_or("estimator.filtered_weight", 1.0);
    sc.initial_guess = parse_vector("estimator.guess", kv.get("estimator.guess"));
    if (static_cast<std::size_t>(sc.initial_guess.size()) != model.n) {
        throw ConfigError("estimator.guess: expected " + std::to_string(model.n) + " components");
    }

    if (kv.has("filters.bank")) {
        std::istringstream names(kv.get("filters.bank"));
        std::string name;
        while (names >> name) {
            sc.filter_spec.kinds.push_back(parse_filter_kind(name));
        }
    }
    sc.filter_spec.dirty_pole = kv.number_or("filters.dirty_pole", sc.filter_spec.dirty_pole);
    sc.filter_spec.leak = kv.number_or("filters.leak", sc.filter_spec.leak);
    const bool filtered_mode = cfg.mode == EstimatorMode::filtered || cfg.mode == EstimatorMode::filtered_adaptive;
    if (filtered_mode && cfg.downsample >= 1) {
        std::vector<DiscreteFilter> filters;
        const double period = cfg.candidate_period();
        for (const auto kind : sc.filter_spec.kinds) {
            filters.push_back(kind == FilterKind::dirty_derivative
                                  ? DiscreteFilter::dirty_derivative(sc.filter_spec.dirty_pole, period)
                                  : DiscreteFilter::lossy_integrator(sc.filter_spec.leak, period));
        }
        cfg.filters = FilterBank(std::move(filters));
    }
    cfg.validate(model);
    return sc;
}

Scenario load_scenario(const std::filesystem::path& path, const ScenarioOverrides& overrides) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open scenario file '" + path.string() + "'");
    }
    std::ostringstream text;
    text << in.rdbuf();
    return parse_scenario(text.str(), overrides);
}

// ---------------------------------------------------------------------------
// Run

std::string csv_header(std::size_t n, std::size_t filtered_columns) {
    std::string header = "t,accepted,delta,d_V,cost_pre,cost_post,err_norm";
    for (std::size_t i = 1; i <= n; ++i) {
        header += ",xhat_" + std::to_string(i);
    }
    for (std::size_t i = 1; i <= n; ++i) {
        header += ",x_" + std::to_string(i);
    }
    header += ",integ_steps,opt_iters";
    for (std::size_t i = 1; i <= filtered_columns; ++i) {
        header += ",yf_" + std::to_string(i);
    }
    return header + "\n";
}

namespace {

const Vector& input_at(const InputSpec& input, double t, double tol) {
    const auto& bps = input.breakpoints;
    auto it = std::upper_bound(bps.begin(), bps.end(), t + tol,
                               [](double time, const auto& bp) { return time < bp.first; });
    if (it == bps.begin()) {
        return bps.front().second;
    }
    return std::prev(it)->second;
}

/// Uniform in [-1, 1] from the raw engine output, independent of the standard
/// library's distribution implementation.
double symmetric_unit(std::mt19937_64& rng) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return 2.0 * u - 1.0;
}

}  // namespace

RunResult run(const Scenario& sc) {
    const auto wall_start = std::chrono::steady_clock::now();
    RunResult result;
    RunMetrics& metrics = result.metrics;
    metrics.scenario = sc.name;
    metrics.family = sc.family;
    metrics.mode = std::string(to_string(sc.estimator.mode));

    const ContinuousModel model = make_model(sc.model_kind, sc.params);
    const MheConfig& cfg = sc.estimator;
    const std::size_t filtered_columns = cfg.filtered() ? cfg.filters.size() : 0;
    std::string& csv = result.csv;
    csv = csv_header(model.n, filtered_columns);

    if (!(sc.tf > sc.t0)) {
        return result;
    }

    result.log.push_back("scenario " + sc.name + " (family " + sc.family + ", mode " + metrics.mode + ")");
    if (!sc.provenance.empty()) {
        result.log.push_back("model parameters: " + sc.provenance);
    }
    for (const auto& [key, value] : sc.echo) {
        result.log.push_back("  " + key + " = " + value);
    }
    for (const auto& warning : model.warnings) {
        result.log.push_back("warning: " + warning);
    }

    const double ts = sc.base_period;
    const auto instants = static_cast<std::size_t>(std::floor((sc.tf - sc.t0) / ts + 1e-9)) + 1;
    ControlSignal controls(ts, model.m);
    for (std::size_t b = 0; b < instants; ++b) {
        const double t = sc.t0 + static_cast<double>(b) * ts;
        controls.append(t, input_at(sc.input, t, 1e-9 * ts));
    }

    result.truth = simulate(model, sc.x0, controls, sc.t0, sc.t0 + static_cast<double>(instants - 1) * ts, ts,
                            sc.truth_integrator);
    std::vector<Vector> measured = result.truth.outputs;
    if (sc.noise_amplitude > 0.0) {
        std::mt19937_64 rng(sc.seed);
        for (auto& y : measured) {
            for (Eigen::Index i = 0; i < y.size(); ++i) {
                y(i) += sc.noise_amplitude * symmetric_unit(rng);
            }
        }
    }

    EstimatorState st = make_estimator(model, cfg, sc.initial_guess, sc.t0);
    WorkCounters intersample;
    Vector filtered_values = Vector::Zero(static_cast<Eigen::Index>(filtered_columns));
    double sum_sq = 0.0;

    for (std::size_t b = 0; b < instants; ++b) {
        const double t = result.truth.times[b];
        const Vector& u = controls.at(t);
        StepRecord rec;
        rec.time = t;
        Vector xhat;
        if (b % cfg.downsample == 0) {
            rec = estimator_step(st, cfg, measured[b], u, t, model);
            xhat = st.x_now;
            if (filtered_columns > 0) {
                filtered_values = st.history.back().row.tail(static_cast<Eigen::Index>(filtered_columns));
            }
            if (rec.estimated) {
                result.accepted_times.push_back(t);
            }
        } else {
            // One base period from the previous logged estimate; identical to
            // propagating from t_now because flow splits at grid points.
            record_control(st, t, u);
            try {
                xhat = flow(model, result.estimates.back(), st.buffer.controls(), result.truth.times[b - 1], t,
                            cfg.integrator, &intersample);
            } catch (const NumericalError& e) {
                result.log.push_back("t=" + format_number(t) + ": inter-sample propagation failed: " + e.what());
                xhat = result.estimates.back();
            }
        }
        const double err = (xhat - result.truth.states[b]).norm();
        metrics.errors.push_back(err);
        sum_sq += err * err;
        result.estimates.push_back(xhat);

        std::string row = format_number(t);
        row += rec.estimated ? ",1," : ",0,";
        row += format_number(rec.delta) + "," + format_number(rec.d_v) + "," + format_number(rec.cost_pre) + "," +
               format_number(rec.cost_post) + "," + format_number(err);
        for (Eigen::Index i = 0; i < xhat.size(); ++i) {
            row += "," + format_number(xhat(i));
        }
        for (Eigen::Index i = 0; i < xhat.size(); ++i) {
            row += "," + format_number(result.truth.states[b](i));
        }
        row += "," + std::to_string(st.counters.integration_substeps + intersample.integration_substeps);
        row += "," + std::to_string(st.counters.optimizer_iterations);
        for (Eigen::Index i = 0; i < filtered_values.size(); ++i) {
            row += "," + format_number(filtered_values(i));
        }
        csv += row + "\n";
    }

    metrics.grid_instants = instants;
    metrics.candidates = st.stats.candidates;
    metrics.fill_substeps = st.stats.fill_substeps;
    metrics.estimation_substeps = st.stats.estimation_substeps;
    metrics.propagation_substeps = st.stats.propagation_substeps + intersample.integration_substeps;
    metrics.integration_substeps = st.counters.integration_substeps + intersample.integration_substeps;
    metrics.optimizer_iterations = st.counters.optimizer_iterations;
    metrics.estimations_performed = st.stats.estimations_performed;
    metrics.samples_skipped = st.stats.samples_skipped;
    metrics.reinitialisations = st.stats.reinitialisations;
    metrics.failures = st.stats.failures;
    metrics.final_error = metrics.errors.back();
    metrics.rmse = std::sqrt(sum_sq / static_cast<double>(instants));
    for (const auto& event : st.events) {
        result.log.push_back(event);
    }
    metrics.wall_time =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
    return result;
}

// ---------------------------------------------------------------------------
// Metrics files

std::string format_metrics(const RunMetrics& m) {
    std::ostringstream out;
    out << "scenario=" << m.scenario << "\n"
        << "family=" << m.family << "\n"
        << "mode=" << m.mode << "\n"
        << "grid_instants=" << m.grid_instants << "\n"
        << "candidates=" << m.candidates << "\n"
        << "integration_substeps=" << m.integration_substeps << "\n"
        << "fill_substeps=" << m.fill_substeps << "\n"
        << "estimation_substeps=" << m.estimation_substeps << "\n"
        << "propagation_substeps=" << m.propagation_substeps << "\n"
        << "optimizer_iterations=" << m.optimizer_iterations << "\n"
        << "estimations_performed=" << m.estimations_performed << "\n"
        << "samples_skipped=" << m.samples_skipped << "\n"
        << "reinitialisations=" << m.reinitialisations << "\n"
        << "failures=" << m.failures << "\n"
        << "final_error=" << exact_number(m.final_error) << "\n"
        << "rmse=" << exact_number(m.rmse) << "\n"
        << "wall_time=" << exact_number(m.wall_time) << "\n";
    return out.str();
}

RunMetrics parse_metrics(const std::string& text) {
    RunMetrics m;
    std::istringstream in(text);
    std::string line;
    std::set<std::string> seen;
    while (std::getline(in, line)) {
        const std::string content = trim(line);
        if (content.empty() || content.front() == '#') {
            continue;
        }
        const auto eq = content.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("metrics: malformed line '" + content + "'");
        }
        const std::string key = content.substr(0, eq);
        const std::string value = content.substr(eq + 1);
        seen.insert(key);
        auto count = [&](std::uint64_t& field) { field = parse_count("metrics." + key, value); };
        if (key == "scenario") m.scenario = value;
        else if (key == "family") m.family = value;
        else if (key == "mode") m.mode = value;
        else if (key == "grid_instants") count(m.grid_instants);
        else if (key == "candidates") count(m.candidates);
        else if (key == "integration_substeps") count(m.integration_substeps);
        else if (key == "fill_substeps") count(m.fill_substeps);
        else if (key == "estimation_substeps") count(m.estimation_substeps);
        else if (key == "propagation_substeps") count(m.propagation_substeps);
        else if (key == "optimizer_iterations") count(m.optimizer_iterations);
        else if (key == "estimations_performed") count(m.estimations_performed);
        else if (key == "samples_skipped") count(m.samples_skipped);
        else if (key == "reinitialisations") count(m.reinitialisations);
        else if (key == "failures") count(m.failures);
        else if (key == "final_error") m.final_error = value == "nan" ? NAN : parse_double(key, value);
        else if (key == "rmse") m.rmse = value == "nan" ? NAN : parse_double(key, value);
        else if (key == "wall_time") m.wall_time = parse_double(key, value);
        // Unknown keys are ignored so newer files stay readable.
    }
    if (!seen.contains("family") || !seen.contains("integration_substeps")) {
        throw ConfigError("metrics: not a run metrics file");
    }
    return m;
}

std::string format_summary(const RunMetrics& m) {
    std::ostringstream out;
    out << "scenario              " << m.scenario << " [" << m.mode << "]\n"
        << "grid instants         " << m.grid_instants << " (" << m.candidates << " estimation instants)\n"
        << "estimations performed " << m.estimations_performed << ", skipped " << m.samples_skipped
        << ", re-initialised " << m.reinitialisations << ", failures " << m.failures << "\n"
        << "optimizer iterations  " << m.optimizer_iterations << "\n"
        << "integration substeps  " << m.integration_substeps << " (fill " << m.fill_substeps << ", estimation "
        << m.estimation_substeps << ", propagation " << m.propagation_substeps << ")\n"
        << "final error           " << format_number(m.final_error) << "\n"
        << "rmse                  " << format_number(m.rmse) << "\n"
        << "wall time [s]         " << format_number(m.wall_time) << " (informational)\n";
    return out.str();
}

void write_run(const RunResult& result, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    auto write = [&](const std::string& name, const std::string& content) {
        std::ofstream out(dir / name, std::ios::binary);
        if (!out) {
            throw std::runtime_error("cannot write " + (dir / name).string());
        }
        out << content;
    };
    write("trace.csv", result.csv);
    write("metrics.txt", format_metrics(result.metrics));
    write("summary.txt", format_summary(result.metrics));
    std::string log;
    for (const auto& line : result.log) {
        log += line + "\n";
    }
    write("run.log", log);
}

// ---------------------------------------------------------------------------
// Comparison

namespace {

double reduction(double base, double value) {
    if (base == 0.0) {
        return 0.0;
    }
    return 100.0 * (1.0 - value / base);
}

std::string pad(const std::string& s, std::size_t width) {
    return s.size() >= width ? s + " " : s + std::string(width - s.size(), ' ');
}

}  // namespace

ComparisonReport compare(const std::vector<std::pair<std::string, RunMetrics>>& runs) {
    if (runs.size() < 2) {
        throw UsageError("compare: need at least two runs");
    }
    const std::string& family = runs.front().second.family;
    for (const auto& [label, m] : runs) {
        if (m.family != family) {
            throw UsageError("compare: run '" + label + "' belongs to family '" + m.family + "', expected '" +
                             family + "'");
        }
    }
    ComparisonReport report;
    const RunMetrics& base = runs.front().second;
    for (const auto& [label, m] : runs) {
        ComparisonRow row{label, m, 0.0, 0.0, 0.0, 0.0};
        row.iteration_reduction = reduction(static_cast<double>(base.optimizer_iterations),
                                            static_cast<double>(m.optimizer_iterations));
        row.substep_reduction = reduction(static_cast<double>(base.integration_substeps),
                                          static_cast<double>(m.integration_substeps));
        row.work_reduction = reduction(static_cast<double>(base.total_work()), static_cast<double>(m.total_work()));
        row.estimation_reduction = reduction(static_cast<double>(base.estimations_performed),
                                             static_cast<double>(m.estimations_performed));
        report.rows.push_back(std::move(row));
    }

    const auto brief = [](double value, const char* format) {
        if (!std::isfinite(value)) {
            return format_number(value);
        }
        char buf[32];
        std::snprintf(buf, sizeof(buf), format, value);
        return std::string(buf);
    };
    std::ostringstream out;
    out << "family " << family << ", baseline " << runs.front().first << "\n";
    out << pad("run", 24) << pad("mode", 18) << pad("estim", 8) << pad("skipped", 9) << pad("opt_iters", 11)
        << pad("substeps", 12) << pad("final_err", 14) << pad("rmse", 14) << pad("d_iters%", 10)
        << pad("d_substeps%", 12) << pad("d_work%", 10) << "\n";
    for (const auto& row : report.rows) {
        const auto& m = row.metrics;
        out << pad(row.label, 24) << pad(m.mode, 18) << pad(std::to_string(m.estimations_performed), 8)
            << pad(std::to_string(m.samples_skipped), 9) << pad(std::to_string(m.optimizer_iterations), 11)
            << pad(std::to_string(m.integration_substeps), 12) << pad(brief(m.final_error, "%.4g"), 14)
            << pad(brief(m.rmse, "%.4g"), 14) << pad(brief(row.iteration_reduction, "%.1f"), 10)
            << pad(brief(row.substep_reduction, "%.1f"), 12) << pad(brief(row.work_reduction, "%.1f"), 10) << "\n";
    }
    report.text = out.str();
    return report;
}

}  // namespace mhe

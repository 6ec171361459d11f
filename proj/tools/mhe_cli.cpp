#include "mhe/harness.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

mhe::ScenarioOverrides parse_overrides(const std::vector<std::string>& items) {
    mhe::ScenarioOverrides overrides;
    for (const auto& item : items) {
        const auto eq = item.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw mhe::ConfigError("--set expects section.key=value, got '" + item + "'");
        }
        overrides.emplace_back(item.substr(0, eq), item.substr(eq + 1));
    }
    return overrides;
}

int run_command(const std::string& file, const std::string& out_dir, const std::vector<std::string>& sets,
                const std::string& seed) {
    auto overrides = parse_overrides(sets);
    if (!seed.empty()) {
        overrides.emplace_back("scenario.seed", seed);
    }
    const mhe::Scenario scenario = mhe::load_scenario(file, overrides);
    const mhe::RunResult result = mhe::run(scenario);
    const std::filesystem::path dir = out_dir.empty() ? std::filesystem::path("runs") / scenario.name : std::filesystem::path(out_dir);
    mhe::write_run(result, dir);
    std::cout << mhe::format_summary(result.metrics);
    if (result.metrics.failures > 0) {
        std::cout << "note: " << result.metrics.failures << " estimator failure(s) flagged, see run.log\n";
    }
    std::cout << "wrote " << dir.string() << "\n";
    return 0;
}

int compare_command(const std::vector<std::string>& dirs) {
    std::vector<std::pair<std::string, mhe::RunMetrics>> runs;
    for (const auto& dir : dirs) {
        const auto path = std::filesystem::path(dir) / "metrics.txt";
        std::ifstream in(path);
        if (!in) {
            throw mhe::ConfigError("cannot open " + path.string());
        }
        std::ostringstream text;
        text << in.rdbuf();
        runs.emplace_back(std::filesystem::path(dir).filename().string(), mhe::parse_metrics(text.str()));
    }
    std::cout << mhe::compare(runs).text;
    return 0;
}

int list_models_command() {
    for (const auto& info : mhe::model_catalog()) {
        std::cout << info.name << "  params:";
        for (const auto& key : info.required) {
            std::cout << " " << key;
        }
        for (const auto& key : info.optional) {
            std::cout << " [" << key << "]";
        }
        std::cout << "\n    " << info.summary << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Moving horizon estimation scenario runner"};
    app.require_subcommand(1);

    std::string file;
    std::string out_dir;
    std::string seed;
    std::vector<std::string> sets;
    auto* run = app.add_subcommand("run", "Run a scenario file");
    run->add_option("scenario", file, "Scenario file")->required()->check(CLI::ExistingFile);
    run->add_option("--out", out_dir, "Output directory (default runs/<name>)");
    run->add_option("--seed", seed, "Override the scenario seed");
    run->add_option("--set", sets, "Override a key, e.g. --set estimator.K=5")->take_all();

    std::vector<std::string> dirs;
    auto* cmp = app.add_subcommand("compare", "Compare run directories; the first is the baseline");
    cmp->add_option("runs", dirs, "Run directories")->required()->expected(2, -1);

    auto* list = app.add_subcommand("list-models", "List the model catalog");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (run->parsed()) {
            return run_command(file, out_dir, sets, seed);
        }
        if (cmp->parsed()) {
            return compare_command(dirs);
        }
        if (list->parsed()) {
            return list_models_command();
        }
    } catch (const mhe::ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const mhe::UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

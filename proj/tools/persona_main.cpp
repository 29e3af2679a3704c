// persona — hybrid text-tabular persona classification pipeline.
//
// Subcommands map 1:1 onto pipeline stages; every stage reads one config
// file and talks to the others only through files in the workdir.
//
// Exit codes: 0 ok, 2 invalid config, 3 missing predecessor artifact,
// 4 runtime failure.

#include <functional>
#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"

#include "persona/pipeline.hpp"

namespace {

int run_validate(const std::string& config_path) {
    persona::PipelineConfig cfg = persona::PipelineConfig::parse_file(config_path);
    auto violations = cfg.validate();
    if (violations.empty()) {
        std::cout << "config ok (hash " << cfg.hash() << ")\n";
        return 0;
    }
    for (const auto& v : violations) std::cout << "violation: " << v << "\n";
    return 2;
}

int run_stage(const std::string& config_path,
              const std::function<void(const persona::PipelineConfig&)>& stage,
              bool check_config = true) {
    persona::PipelineConfig cfg = persona::PipelineConfig::parse_file(config_path);
    if (check_config) {
        auto violations = cfg.validate();
        if (!violations.empty()) {
            for (const auto& v : violations) std::cerr << "violation: " << v << "\n";
            return 2;
        }
    }
    stage(cfg);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hybrid text-tabular persona classification pipeline"};
    app.require_subcommand(1);
    app.fallthrough();  // "persona synth -c cfg": -c belongs to the parent

    std::string config_path;
    app.add_option("-c,--config", config_path, "pipeline config file")->required();

    struct Command {
        const char* name;
        const char* description;
        std::function<void(const persona::PipelineConfig&)> stage;
        bool check_config;
    };
    // synth runs before the corpus file exists, so it skips path validation.
    std::vector<Command> commands = {
        {"synth", "generate a seeded synthetic corpus", persona::stage_synth, false},
        {"ingest", "parse, filter, balance, and split the corpus", persona::stage_ingest, true},
        {"featurize", "build profile stores, rows, and the fitted transform",
         persona::stage_featurize, true},
        {"train", "train the hybrid classifier", persona::stage_train, true},
        {"eval", "evaluate on the test split and write persona annotations",
         persona::stage_eval, true},
        {"explain", "Shapley attributions, global summary, correlation matrix",
         persona::stage_explain, true},
        {"ablate", "run the ablation plan over seeds", persona::stage_ablate, true},
        {"report", "merge artifact summaries into one JSON", persona::stage_report, true},
    };

    CLI::App* validate_cmd = app.add_subcommand("validate", "check the config and exit");
    std::map<std::string, Command*> by_name;
    for (auto& cmd : commands) {
        app.add_subcommand(cmd.name, cmd.description);
        by_name[cmd.name] = &cmd;
    }

    CLI11_PARSE(app, argc, argv);

    try {
        if (validate_cmd->parsed()) return run_validate(config_path);
        for (auto& [name, cmd] : by_name) {
            if (app.get_subcommand(name)->parsed())
                return run_stage(config_path, cmd->stage, cmd->check_config);
        }
        std::cerr << "no subcommand given\n";
        return 4;
    } catch (const persona::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const persona::MissingArtifactError& e) {
        std::cerr << "missing artifact: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
}

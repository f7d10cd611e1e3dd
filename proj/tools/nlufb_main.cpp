// nlufb: mines implicit feedback (dissatisfaction + rephrases) from
// conversational session logs to curate supervision data and train an NLU
// re-ranker, verified end-to-end against a built-in traffic simulator.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "nlufb/pipeline/pipeline.hpp"

namespace {

struct GlobalArgs {
    std::string config_path;
    std::string out_dir = "out";
    std::optional<uint64_t> seed;
    bool verbose = false;
};

void add_global_flags(CLI::App* cmd, GlobalArgs& args) {
    cmd->add_option("--config", args.config_path, "pipeline config file")->required();
    cmd->add_option("--out", args.out_dir, "output directory");
    cmd->add_option("--seed", args.seed, "master seed override (remaps all stage seeds)");
    cmd->add_flag("--verbose", args.verbose, "log stage progress to stderr");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"implicit-feedback NLU curation pipeline"};
    app.require_subcommand(1);

    GlobalArgs args;
    double lambda_override = -1.0;
    double epsilon_override = -1.0;
    std::string resume_from;

    for (const std::string& stage : nlufb::pipeline::stage_names()) {
        CLI::App* cmd = app.add_subcommand(stage, "run the " + stage + " stage");
        add_global_flags(cmd, args);
        if (stage == "select-targets") {
            cmd->add_option("--lambda", lambda_override, "prediction-accuracy floor (default 0.9)");
            cmd->add_option("--epsilon", epsilon_override, "search interval tolerance (default 0.01)");
        }
    }
    CLI::App* run_all = app.add_subcommand("run-all", "run every stage in order");
    add_global_flags(run_all, args);
    CLI::App* resume = app.add_subcommand("resume", "re-run from a stage onward");
    add_global_flags(resume, args);
    resume->add_option("--from", resume_from, "stage to resume from")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    using namespace nlufb::pipeline;
    RunOptions opts;
    opts.seed_override = args.seed;
    opts.verbose = args.verbose;

    try {
        if (run_all->parsed()) {
            run_pipeline(args.config_path, args.out_dir, opts);
            std::cout << "run complete; manifest at " << args.out_dir << "/manifest.json\n";
            return 0;
        }
        if (resume->parsed()) {
            stage_resume(args.config_path, args.out_dir, resume_from, opts);
            std::cout << "resume complete; manifest at " << args.out_dir << "/manifest.json\n";
            return 0;
        }
        for (const std::string& stage : stage_names()) {
            CLI::App* cmd = app.get_subcommand(stage);
            if (!cmd->parsed()) continue;
            PipelineConfig cfg = load_pipeline_config(args.config_path, args.seed);
            if (stage == "select-targets") {
                if (lambda_override > 0) cfg.lambda = lambda_override;
                if (epsilon_override > 0) cfg.epsilon = epsilon_override;
            }
            run_single_stage(stage, cfg, args.out_dir, args.verbose);
            std::cout << stage << " complete\n";
            return 0;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const StageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const ResumeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

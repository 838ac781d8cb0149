// Operator surface over the mtdrive C API. Every artifact-producing command
// writes a manifest (command, merged config, seeds, input hashes, outputs)
// alongside its outputs.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mtdrive.h"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

struct GlobalOpts {
    std::string config_path;
    std::uint64_t seed = 1;
    int jobs = 1;
    std::string out;
};

int exit_with(mtd_status status) {
    if (status != MTD_OK) {
        std::cerr << "error: " << mtd_last_error() << "\n";
    }
    return static_cast<int>(status);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open config file: " + path);
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// Base config file plus CLI overrides; later lines win.
std::string merged_config(const GlobalOpts& opts, const std::vector<std::string>& overrides) {
    std::string text;
    if (!opts.config_path.empty()) {
        text = read_file(opts.config_path);
        if (!text.empty() && text.back() != '\n') {
            text += '\n';
        }
    }
    for (const std::string& line : overrides) {
        text += line;
        text += '\n';
    }
    return text;
}

std::string file_hash(const std::string& path) {
    char hex[17] = {0};
    if (mtd_hash_file(path.c_str(), hex) != MTD_OK) {
        return "";
    }
    return hex;
}

void write_manifest(const std::string& out_base, const std::string& command,
                    const GlobalOpts& opts, const std::string& config_text,
                    const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs) {
    ordered_json j;
    j["command"] = command;
    j["seed"] = opts.seed;
    j["jobs"] = opts.jobs;
    j["config"] = config_text;
    ordered_json in_hashes = ordered_json::object();
    for (const std::string& path : inputs) {
        in_hashes[path] = file_hash(path);
    }
    j["inputs"] = in_hashes;
    ordered_json outs = ordered_json::array();
    for (const std::string& path : outputs) {
        outs.push_back(path);
    }
    j["outputs"] = outs;
    const std::string path = out_base + ".manifest.json";
    std::ofstream out(path, std::ios::binary);
    out << j.dump(2) << '\n';
}

struct CorpusHandle {
    mtd_corpus* ptr = nullptr;
    ~CorpusHandle() { mtd_corpus_free(ptr); }
};

struct PolicyHandle {
    mtd_policy* ptr = nullptr;
    ~PolicyHandle() { mtd_policy_free(ptr); }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mtdrive: multi-turn trajectory refinement laboratory"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalOpts opts;
    app.add_option("--config", opts.config_path, "flat key = value config file");
    app.add_option("--seed", opts.seed, "master seed");
    app.add_option("--jobs", opts.jobs, "worker cap for parallel sections");
    app.add_option("--out", opts.out, "output file or directory");

    // gen
    auto* gen = app.add_subcommand("gen", "generate a procedural scenario corpus");
    int gen_count = 100;
    std::string gen_families;
    gen->add_option("--count", gen_count, "number of scenarios");
    gen->add_option("--families", gen_families, "comma-separated family subset");

    // score
    auto* score = app.add_subcommand("score", "score a trajectory file against a corpus");
    std::string score_corpus;
    std::string score_traj;
    std::string score_perception;
    score->add_option("--corpus", score_corpus, "corpus JSONL")->required();
    score->add_option("--traj", score_traj, "trajectory JSONL")->required();
    score->add_option("--perception", score_perception, "kinematic | gt_oracle");

    // train
    auto* train = app.add_subcommand("train", "mtGRPO training");
    std::string train_corpus;
    std::string train_init;
    std::string train_mode;
    bool train_no_warm = false;
    train->add_option("--corpus", train_corpus, "corpus JSONL")->required();
    train->add_option("--init", train_init, "resume from this checkpoint (skips warm start)");
    train->add_option("--mode", train_mode, "seq_grpo | per_turn | pooled_group");
    train->add_flag("--no-warm-start", train_no_warm, "skip the behavior-cloning cold start");

    // eval
    auto* eval = app.add_subcommand("eval", "multi-turn evaluation with plots");
    std::string eval_corpus;
    std::string eval_ckpt;
    std::string eval_perception;
    int eval_episodes = 0;
    bool eval_no_plots = false;
    eval->add_option("--corpus", eval_corpus, "corpus JSONL")->required();
    eval->add_option("--checkpoint", eval_ckpt, "policy checkpoint")->required();
    eval->add_option("--perception", eval_perception, "kinematic | gt_oracle");
    eval->add_option("--episodes", eval_episodes, "episodes per scenario");
    eval->add_flag("--no-plots", eval_no_plots, "skip SVG plots");

    // ablate
    auto* ablate = app.add_subcommand("ablate", "train and compare all advantage modes");
    std::string ablate_corpus;
    ablate->add_option("--corpus", ablate_corpus, "corpus JSONL")->required();

    // curate
    auto* curate = app.add_subcommand("curate", "data curation pipelines");
    std::string curate_task;
    std::string curate_corpus;
    std::string curate_ckpt;
    curate->add_option("task", curate_task, "bootstrap | constvel | mock | qa | filter")
        ->required();
    curate->add_option("--corpus", curate_corpus, "corpus JSONL")->required();
    curate->add_option("--checkpoint", curate_ckpt, "policy checkpoint (bootstrap/mock/filter)");

    // bench
    auto* bench = app.add_subcommand("bench", "rollout data-plane benchmark");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) {
            if (opts.out.empty()) {
                std::cerr << "error: gen needs --out <corpus.jsonl>\n";
                return 2;
            }
            CorpusHandle corpus;
            mtd_status s =
                mtd_corpus_generate(opts.seed, gen_count, gen_families.c_str(), &corpus.ptr);
            if (s != MTD_OK) {
                return exit_with(s);
            }
            s = mtd_corpus_save(corpus.ptr, opts.out.c_str());
            if (s != MTD_OK) {
                return exit_with(s);
            }
            const std::string config = merged_config(opts, {"count = " + std::to_string(gen_count),
                                                            "families = " + gen_families});
            write_manifest(opts.out, "gen", opts, config, {}, {opts.out});
            std::printf("wrote %d scenarios to %s\n", mtd_corpus_size(corpus.ptr),
                        opts.out.c_str());
            return 0;
        }

        if (score->parsed()) {
            if (opts.out.empty()) {
                std::cerr << "error: score needs --out <table.csv>\n";
                return 2;
            }
            std::vector<std::string> overrides;
            if (!score_perception.empty()) {
                overrides.push_back("perception = " + score_perception);
            }
            const std::string config = merged_config(opts, overrides);
            CorpusHandle corpus;
            mtd_status s = mtd_corpus_load(score_corpus.c_str(), &corpus.ptr);
            if (s != MTD_OK) {
                return exit_with(s);
            }
            double mean_pdms = 0.0;
            s = mtd_score_file(corpus.ptr, score_traj.c_str(), config.c_str(), opts.out.c_str(),
                               &mean_pdms);
            if (s != MTD_OK) {
                return exit_with(s);
            }
            write_manifest(opts.out, "score", opts, config, {score_corpus, score_traj},
                           {opts.out});
            std::printf("mean_pdms %.6f\n", mean_pdms);
            return 0;
        }

        if (train->parsed()) {
            if (opts.out.empty()) {
                std::cerr << "error: train needs --out <dir>\n";
                return 2;
            }
            std::vector<std::string> overrides;
            if (!train_mode.empty()) {
                overrides.push_back("advantage_mode = " + train_mode);
            }
            const std::string config = merged_config(opts, overrides);
            CorpusHandle corpus;
            mtd_status s = mtd_corpus_load(train_corpus.c_str(), &corpus.ptr);
            if (s != MTD_OK) {
                return exit_with(s);
            }
            PolicyHandle policy;
            bool warm = !train_no_warm;
            if (!train_init.empty()) {
                s = mtd_policy_load(train_init.c_str(), &policy.ptr);
                warm = false;
            } else {
                s = mtd_policy_init(config.c_str(), opts.seed, &policy.ptr);
            }
            if (s != MTD_OK) {
                return exit_with(s);
            }
            s = mtd_train(policy.ptr, corpus.ptr, config.c_str(), opts.seed, opts.jobs,
                          warm ? 1 : 0, opts.out.c_str());
            if (s != MTD_OK) {
                return exit_with(s);
            }
            std::vector<std::string> inputs{train_corpus};
            if (!train_init.empty()) {
                inputs.push_back(train_init);
            }
            write_manifest((fs::path(opts.out) / "train").string(), "train", opts, config, inputs,
                           {(fs::path(opts.out) / "policy_final.ckpt").string(),
                            (fs::path(opts.out) / "train_log.csv").string()});
            std::printf("training complete; artifacts in %s\n", opts.out.c_str());
            return 0;
        }

        if (eval->parsed()) {
            if (opts.out.empty()) {
                std::cerr << "error: eval needs --out <dir>\n";
                return 2;
            }
            std::vector<std::string> overrides;
            if (!eval_perception.empty()) {
                overrides.push_back("perception = " + eval_perception);
            }
            if (eval_episodes > 0) {
                overrides.push_back("eval_episodes = " + std::to_string(eval_episodes));
            }
            if (eval_no_plots) {
                overrides.push_back("eval_plots = false");
            }
            const std::string config = merged_config(opts, overrides);
            CorpusHandle corpus;
            mtd_status s = mtd_corpus_load(eval_corpus.c_str(), &corpus.ptr);
            if (s != MTD_OK) {
                return exit_with(s);
            }
            PolicyHandle policy;
            s = mtd_policy_load(eval_ckpt.c_str(), &policy.ptr);
            if (s != MTD_OK) {
                return exit_with(s);
            }
            double curve[64] = {0};
            double mean_pdms = 0.0;
            s = mtd_eval(policy.ptr, corpus.ptr, config.c_str(), opts.seed, opts.jobs,
                         opts.out.c_str(), curve, 64, &mean_pdms);
            if (s != MTD_OK) {
                return exit_with(s);
            }
            write_manifest((fs::path(opts.out) / "eval").string(), "eval", opts, config,
                           {eval_corpus, eval_ckpt},
                           {(fs::path(opts.out) / "per_turn.csv").string(),
                            (fs::path(opts.out) / "final_table.csv").string(),
                            (fs::path(opts.out) / "trajectories.jsonl").string()});
            std::printf("mean_pdms %.6f\n", mean_pdms);
            for (int b = 0; b < 64 && curve[b] > 0.0; ++b) {
                std::printf("turn_budget %d: %.6f\n", b + 1, curve[b]);
            }
            return 0;
        }

        if (ablate->parsed()) {
            if (opts.out.empty()) {
                std::cerr << "error: ablate needs --out <dir>\n";
                return 2;
            }
            const std::string config = merged_config(opts, {});
            CorpusHandle corpus;
            mtd_status s = mtd_corpus_load(ablate_corpus.c_str(), &corpus.ptr);
            if (s != MTD_OK) {
                return exit_with(s);
            }
            s = mtd_ablate(corpus.ptr, config.c_str(), opts.seed, opts.jobs, opts.out.c_str());
            if (s != MTD_OK) {
                return exit_with(s);
            }
            write_manifest((fs::path(opts.out) / "ablate").string(), "ablate", opts, config,
                           {ablate_corpus}, {(fs::path(opts.out) / "ablate.csv").string()});
            std::ifstream table(fs::path(opts.out) / "ablate.csv");
            std::cout << table.rdbuf();
            return 0;
        }

        if (curate->parsed()) {
            if (opts.out.empty()) {
                std::cerr << "error: curate needs --out <file.jsonl>\n";
                return 2;
            }
            const std::string config = merged_config(opts, {});
            CorpusHandle corpus;
            mtd_status s = mtd_corpus_load(curate_corpus.c_str(), &corpus.ptr);
            if (s != MTD_OK) {
                return exit_with(s);
            }
            PolicyHandle policy;
            if (!curate_ckpt.empty()) {
                s = mtd_policy_load(curate_ckpt.c_str(), &policy.ptr);
                if (s != MTD_OK) {
                    return exit_with(s);
                }
            }
            s = mtd_curate(policy.ptr, corpus.ptr, curate_task.c_str(), config.c_str(), opts.seed,
                           opts.out.c_str());
            if (s != MTD_OK) {
                return exit_with(s);
            }
            std::vector<std::string> inputs{curate_corpus};
            if (!curate_ckpt.empty()) {
                inputs.push_back(curate_ckpt);
            }
            write_manifest(opts.out, "curate " + curate_task, opts, config, inputs, {opts.out});
            std::printf("wrote %s\n", opts.out.c_str());
            return 0;
        }

        if (bench->parsed()) {
            if (opts.out.empty()) {
                std::cerr << "error: bench needs --out <dir>\n";
                return 2;
            }
            fs::create_directories(opts.out);
            const std::string config = merged_config(opts, {});
            const std::string csv = (fs::path(opts.out) / "bench.csv").string();
            const std::string report = (fs::path(opts.out) / "bench_report.txt").string();
            const mtd_status s = mtd_bench(config.c_str(), csv.c_str(), report.c_str());
            if (s != MTD_OK) {
                return exit_with(s);
            }
            write_manifest((fs::path(opts.out) / "bench").string(), "bench", opts, config, {},
                           {csv, report});
            std::ifstream rep(report);
            std::cout << rep.rdbuf();
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

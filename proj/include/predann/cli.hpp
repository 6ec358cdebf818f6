#pragma once

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "predann/pipeline.hpp"

namespace predann::cli {

namespace fs = std::filesystem;

inline PipelineConfig load_config(const std::string& path) {
    if (!fs::exists(path)) throw ConfigError("config file not found: " + path);
    return parse_config(io::read_json(path));
}

// Accepts a run name under <workdir>/runs or a filesystem path.
inline fs::path resolve_run(const Pipeline& pipe, const std::string& arg) {
    if (fs::exists(fs::path(arg) / "checkpoint.json")) return arg;
    const fs::path named = pipe.root() / "runs" / arg;
    if (fs::exists(named / "checkpoint.json")) return named;
    throw DataError("no checkpoint under '" + arg + "'");
}

// Accepts a cache tag under <workdir>/eval or a filesystem path.
inline fs::path resolve_cache(const Pipeline& pipe, const std::string& arg) {
    if (fs::exists(arg)) return arg;
    const fs::path tagged = pipe.cache_path(arg);
    if (fs::exists(tagged)) return tagged;
    throw DataError("no prediction cache '" + arg + "'");
}

inline int run(std::vector<std::string> args) {
    CLI::App app{"PredANN++ pipeline: masked teacher-prediction pretraining for EEG song-ID decoding"};
    app.require_subcommand(1);

    std::string config_path;
    std::string teacher = "surprisal";
    std::string run_name, tag = "model";
    std::vector<std::string> cache_args;
    std::vector<std::string> pair_args;
    std::uint64_t seed = 42;
    bool seed_given = false;
    std::int64_t mc_b = -1, mc_c = -1;

    auto add_config = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "pipeline configuration file (JSON)")->required();
    };

    CLI::App* synth = app.add_subcommand("synth", "generate synthetic recordings, token chains and embeddings");
    add_config(synth);
    CLI::App* prep = app.add_subcommand("prep", "truncate, excerpt and split the recordings");
    add_config(prep);
    CLI::App* features = app.add_subcommand("features", "fit discretizers and write teacher sequences");
    add_config(features);

    CLI::App* pretrain = app.add_subcommand("pretrain", "multitask masked-teacher pretraining");
    add_config(pretrain);
    pretrain->add_option("--teacher", teacher, "teacher kind: muq | surprisal | entropy");
    pretrain->add_option("--seed", seed, "random seed")->each([&](const std::string&) { seed_given = true; });

    CLI::App* finetune = app.add_subcommand("finetune", "classification-only fine-tuning from a checkpoint");
    add_config(finetune);
    finetune->add_option("--teacher", teacher, "teacher kind of the pretraining run");
    finetune->add_option("--seed", seed, "random seed")->each([&](const std::string&) { seed_given = true; });

    CLI::App* fullscratch = app.add_subcommand("fullscratch", "train the classifier from scratch");
    add_config(fullscratch);
    fullscratch->add_option("--seed", seed, "random seed");

    CLI::App* evaluate = app.add_subcommand("evaluate", "cache per-sample validation logits for one model");
    add_config(evaluate);
    evaluate->add_option("--run", run_name, "run name under <workdir>/runs or a path")->required();
    evaluate->add_option("--tag", tag, "cache tag")->required();

    CLI::App* ens = app.add_subcommand("ensemble", "average class probabilities across cached models");
    add_config(ens);
    ens->add_option("--caches", cache_args, "cache tags or paths")->required()->expected(-2);
    ens->add_option("--tag", tag, "output cache tag")->required();

    CLI::App* mcnemar = app.add_subcommand("mcnemar", "exact two-sided McNemar test / comparison report");
    add_config(mcnemar);
    mcnemar->add_option("--b", mc_b, "discordant count: A correct, B wrong");
    mcnemar->add_option("--c", mc_c, "discordant count: B correct, A wrong");
    mcnemar->add_option("--caches", cache_args, "cache tags or paths to compare");
    mcnemar->add_option("--pairs", pair_args, "explicit index pairs i:j (default: all vs all)");

    try {
        std::vector<const char*> argv{"predann"};
        for (const auto& a : args) argv.push_back(a.c_str());
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        // the bare-counts form needs no pipeline state
        if (mcnemar->parsed() && mc_b >= 0 && mc_c >= 0) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%g", mcnemar_exact(mc_b, mc_c));
            std::cout << buf << "\n";
            return 0;
        }

        Pipeline pipe(load_config(config_path));

        if (synth->parsed()) {
            pipe.synth();
        } else if (prep->parsed()) {
            pipe.prep();
        } else if (features->parsed()) {
            pipe.features();
        } else if (pretrain->parsed()) {
            const auto dir = pipe.pretrain(teacher_kind_from(teacher),
                                           seed_given ? seed : pipe.config().train.pretrain_seed);
            std::cout << dir.string() << "\n";
        } else if (finetune->parsed()) {
            const auto dir = pipe.finetune(teacher_kind_from(teacher),
                                           seed_given ? seed : pipe.config().train.pretrain_seed);
            std::cout << dir.string() << "\n";
        } else if (fullscratch->parsed()) {
            std::cout << pipe.fullscratch(seed).string() << "\n";
        } else if (evaluate->parsed()) {
            std::cout << pipe.evaluate(resolve_run(pipe, run_name), tag).string() << "\n";
        } else if (ens->parsed()) {
            std::vector<fs::path> caches;
            for (const auto& c : cache_args) caches.push_back(resolve_cache(pipe, c));
            std::cout << pipe.ensemble_from_files(caches, tag).string() << "\n";
        } else if (mcnemar->parsed()) {
            if (cache_args.size() < 2) throw ConfigError("mcnemar: need --b/--c or at least two --caches");
            std::vector<fs::path> caches;
            for (const auto& c : cache_args) caches.push_back(resolve_cache(pipe, c));
            std::vector<std::pair<std::size_t, std::size_t>> pairs;
            for (const auto& p : pair_args) {
                const auto colon = p.find(':');
                if (colon == std::string::npos) throw ConfigError("mcnemar: bad pair '" + p + "'");
                pairs.push_back({std::stoul(p.substr(0, colon)), std::stoul(p.substr(colon + 1))});
            }
            pipe.report_from_files(caches, pairs);
            std::ifstream report(pipe.root() / "eval" / "report.txt");
            std::cout << report.rdbuf();
        }
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace predann::cli

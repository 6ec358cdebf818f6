#pragma once

#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "predann/config.hpp"
#include "predann/io.hpp"
#include "predann/synth.hpp"
#include "predann/train.hpp"

namespace predann {

namespace fs = std::filesystem;

// Stage drivers over one working directory. Every stage writes its outputs
// plus a manifest carrying the stage name, the full configuration echo and
// the relative paths involved, so a run can be reproduced bit-identically
// from the manifest alone.
class Pipeline {
public:
    explicit Pipeline(PipelineConfig cfg) : cfg_(std::move(cfg)), root_(cfg_.workdir) { cfg_.validate(); }

    const PipelineConfig& config() const { return cfg_; }
    const fs::path& root() const { return root_; }

    // identifies the experiment configuration; the working directory is
    // location, not configuration
    std::string config_hash_hex() const {
        json j = to_json(cfg_);
        j.erase("workdir");
        return io::hash_hex(io::config_hash(j));
    }

    // ---- stage: synth ----------------------------------------------------

    void synth() {
        SyntheticDataset ds = generate_synthetic(cfg_.synthetic, cfg_.root_seed, cfg_.signal.delay_ms);
        for (const auto& rec : ds.recordings) io::write_recording(recording_stem(rec.subject_id, rec.song_id), rec);
        for (const auto& song : ds.songs) {
            const fs::path stem = stimulus_stem(song.song_id);
            {
                auto f = io::open_out(fs::path(stem).concat(".tokens.i32"));
                std::vector<std::int32_t> buf(song.tokens.begin(), song.tokens.end());
                io::write_raw(f, buf.data(), buf.size());
            }
            {
                auto f = io::open_out(fs::path(stem).concat(".transition.f32"));
                std::vector<float> buf(song.transition.begin(), song.transition.end());
                io::write_raw(f, buf.data(), buf.size());
            }
            {
                auto f = io::open_out(fs::path(stem).concat(".emb.f32"));
                std::vector<float> buf(song.embeddings.begin(), song.embeddings.end());
                io::write_raw(f, buf.data(), buf.size());
            }
            io::write_json(fs::path(stem).concat(".json"),
                           json{{"song_id", song.song_id},
                                {"vocab", song.vocab},
                                {"frames_50hz", song.tokens.size()},
                                {"frames_25hz", song.embeddings.size() / cfg_.synthetic.embedding_dim},
                                {"embedding_dim", cfg_.synthetic.embedding_dim}});
        }
        write_manifest(root_ / "data", "synth",
                       json{{"recordings", ds.recordings.size()}, {"songs", ds.songs.size()}});
    }

    // ---- stage: prep -----------------------------------------------------

    void prep() {
        std::vector<ExcerptRef> refs;
        for (const auto& stem : recording_stems()) {
            Recording rec = truncate_recording(io::read_recording(stem), cfg_.signal.max_duration_s);
            for (const Excerpt& ex : make_excerpts(rec, cfg_.signal.excerpt_s)) {
                const ExcerptRef ref{ex.song_id, ex.excerpt_index};
                if (std::find(refs.begin(), refs.end(), ref) == refs.end()) refs.push_back(ref);
            }
        }
        if (refs.empty()) throw DataError("prep: no recordings under " + (root_ / "data").string());
        SplitAssignment split = stratified_split(refs, cfg_.signal.split_ratio, cfg_.signal.split_seed);
        io::write_split(root_ / "prep" / "split.json", split, cfg_.signal.split_ratio);
        write_manifest(root_ / "prep", "prep",
                       json{{"excerpts", refs.size()},
                            {"train", split.train.size()},
                            {"val", split.val.size()},
                            {"split", "prep/split.json"}});
    }

    // ---- stage: features ---------------------------------------------------

    void features() {
        const bool want_muq = wants_teacher(TeacherKind::muq);
        const bool want_pred = wants_teacher(TeacherKind::surprisal) || wants_teacher(TeacherKind::entropy);
        const int n_songs = cfg_.synthetic.songs;
        const std::int64_t chunk50 = round_half_away(cfg_.signal.excerpt_s * 50.0);
        const std::int64_t chunk25 = round_half_away(cfg_.signal.excerpt_s * 25.0);
        const std::int64_t usable50 = usable_frames(50);

        if (want_muq) {
            // pool every frame across songs and chunks, then fit one codebook
            std::vector<double> pooled;
            std::vector<std::vector<double>> song_emb(static_cast<std::size_t>(n_songs));
            const int dim = cfg_.synthetic.embedding_dim;
            for (int s = 0; s < n_songs; ++s) {
                song_emb[static_cast<std::size_t>(s)] = read_embeddings(s);
                const auto& e = song_emb[static_cast<std::size_t>(s)];
                const std::int64_t frames = std::min<std::int64_t>(
                    static_cast<std::int64_t>(e.size()) / dim, usable_frames(25));
                pooled.insert(pooled.end(), e.begin(), e.begin() + static_cast<std::ptrdiff_t>(frames * dim));
            }
            KMeansCodebook cb = fit_kmeans(pooled, static_cast<int>(pooled.size()) / dim, dim,
                                           cfg_.teacher.clusters, cfg_.teacher.kmeans_seed,
                                           cfg_.teacher.kmeans_restarts);
            io::write_codebook(root_ / "features" / "codebook", cb);
            for (int s = 0; s < n_songs; ++s) {
                const auto& e = song_emb[static_cast<std::size_t>(s)];
                MuqTeacher teacher = discretize_muq(e, static_cast<std::int64_t>(e.size()) / dim, dim, cb, chunk25);
                for (std::int64_t c = 0; c < teacher.chunks(); ++c)
                    io::write_muq_excerpt(muq_stem(s, c), teacher, c, cfg_.teacher.clusters);
            }
        }

        if (want_pred) {
            std::vector<PredictiveTeacher> teachers;
            for (int s = 0; s < n_songs; ++s) {
                auto [tokens, transition, vocab] = read_stimulus(s);
                tokens.resize(static_cast<std::size_t>(std::min<std::int64_t>(
                    static_cast<std::int64_t>(tokens.size()), usable50)));
                MarkovLogitSource src(transition, vocab);
                teachers.push_back(cfg_.teacher.chunk_mode
                                       ? chunk_predictive_features(tokens, src, chunk50)
                                       : sliding_predictive_features(tokens, src, cfg_.teacher.context_window_s));
            }
            std::vector<const PredictiveTeacher*> ptrs;
            for (const auto& t : teachers) ptrs.push_back(&t);
            auto [s_pool, h_pool] = pooled_values(ptrs);
            QuantileBins s_bins = fit_quantile_bins(std::move(s_pool), cfg_.teacher.bins, "surprisal");
            QuantileBins h_bins = fit_quantile_bins(std::move(h_pool), cfg_.teacher.bins, "entropy");
            io::write_bins(root_ / "features" / "bins_surprisal", s_bins);
            io::write_bins(root_ / "features" / "bins_entropy", h_bins);
            for (int s = 0; s < n_songs; ++s) {
                apply_bins(teachers[static_cast<std::size_t>(s)], s_bins, h_bins);
                const std::int64_t chunks = usable50 / chunk50;
                for (std::int64_t c = 0; c < chunks; ++c)
                    io::write_predictive_excerpt(predictive_stem(s, c), teachers[static_cast<std::size_t>(s)], c,
                                                 chunk50);
            }
        }
        write_manifest(root_ / "features", "features",
                       json{{"muq", want_muq}, {"predictive", want_pred},
                            {"context", cfg_.teacher.chunk_mode ? "chunk" : std::to_string(cfg_.teacher.context_window_s)}});
    }

    // ---- training stages ---------------------------------------------------

    fs::path pretrain(TeacherKind kind, std::uint64_t seed) {
        DataView data = load_dataview(&kind);
        ModelConfig mc = bind_model_config(cfg_, kind);
        Rng init = derive_rng(seed, "init");
        PredannModel<float> model(mc, init);
        TrainPlan plan{TrainPlan::Stage::pretrain, cfg_.train.pretrain_epochs, cfg_.train.batch_size,
                       cfg_.train.lr, seed, kind};
        return run_stage(model, data, plan, run_dir("pretrain", &kind, seed));
    }

    fs::path finetune(TeacherKind kind, std::uint64_t seed) {
        DataView data = load_dataview(nullptr);
        const fs::path src = run_dir("pretrain", &kind, seed);
        PredannModel<float> model = load_model(src);
        if (!model.has_decoder) throw DataError("finetune: " + src.string() + " is not a pretraining checkpoint");
        PredannModel<float> stripped = strip_decoder(model);
        TrainPlan plan{TrainPlan::Stage::finetune, cfg_.train.finetune_epochs, cfg_.train.batch_size,
                       cfg_.train.lr, seed, kind};
        return run_stage(stripped, data, plan, run_dir("finetune", &kind, seed));
    }

    fs::path fullscratch(std::uint64_t seed) {
        DataView data = load_dataview(nullptr);
        ModelConfig mc = bind_model_config(cfg_, TeacherKind::surprisal);
        Rng init = derive_rng(seed, "init");
        PredannModel<float> model(mc, init);
        PredannModel<float> stripped = strip_decoder(model);
        TrainPlan plan{TrainPlan::Stage::fullscratch, cfg_.train.fullscratch_epochs, cfg_.train.batch_size,
                       cfg_.train.lr, seed, TeacherKind::surprisal};
        return run_stage(stripped, data, plan, run_dir("fullscratch", nullptr, seed));
    }

    // ---- evaluation ----------------------------------------------------------

    fs::path evaluate(const fs::path& run, const std::string& tag) {
        PredannModel<float> model = load_model(run);
        DataView data = load_dataview(nullptr);
        PredictionCache cache = evaluate_model(model, data, tag, config_hash_hex());
        const fs::path out = cache_path(tag);
        io::write_cache(out, cache);
        return out;
    }

    fs::path ensemble_from_files(const std::vector<fs::path>& cache_files, const std::string& tag) {
        std::vector<PredictionCache> caches;
        for (const auto& p : cache_files) caches.push_back(io::read_cache(p));
        std::vector<const PredictionCache*> ptrs;
        for (const auto& c : caches) ptrs.push_back(&c);
        PredictionCache ens = ensemble(ptrs, tag);
        const fs::path out = cache_path(tag);
        io::write_cache(out, ens);
        return out;
    }

    // Pairwise report over cache files; pairs default to all-vs-all.
    json report_from_files(const std::vector<fs::path>& cache_files,
                           std::vector<std::pair<std::size_t, std::size_t>> pairs = {}) {
        std::vector<PredictionCache> caches;
        for (const auto& p : cache_files) caches.push_back(io::read_cache(p));
        if (pairs.empty())
            for (std::size_t i = 0; i < caches.size(); ++i)
                for (std::size_t j = i + 1; j < caches.size(); ++j) pairs.push_back({i, j});
        std::vector<const PredictionCache*> ptrs;
        for (const auto& c : caches) ptrs.push_back(&c);
        const auto rows = comparison_report(ptrs, pairs);

        json jrows = json::array();
        std::ostringstream text;
        text << std::left << std::setw(28) << "pair" << std::right << std::setw(9) << "acc_a" << std::setw(9)
             << "acc_b" << std::setw(9) << "delta" << std::setw(6) << "b" << std::setw(6) << "c" << std::setw(13)
             << "p" << "  sig\n";
        for (const auto& r : rows) {
            jrows.push_back(json{{"a", r.tag_a},
                                 {"b", r.tag_b},
                                 {"acc_a", r.acc_a},
                                 {"acc_b", r.acc_b},
                                 {"table", {{"a", r.table.a}, {"b", r.table.b}, {"c", r.table.c}, {"d", r.table.d}}},
                                 {"p", r.p},
                                 {"stars", r.stars}});
            std::ostringstream pair;
            pair << r.tag_a << " vs " << r.tag_b;
            text << std::left << std::setw(28) << pair.str() << std::right << std::fixed << std::setprecision(4)
                 << std::setw(9) << r.acc_a << std::setw(9) << r.acc_b << std::showpos << std::setw(9)
                 << (r.acc_a - r.acc_b) << std::noshowpos << std::setw(6) << r.table.b << std::setw(6)
                 << r.table.c << std::scientific << std::setprecision(3) << std::setw(13) << r.p
                 << std::defaultfloat << "  " << r.stars << '\n';
        }
        json out{{"config_hash", config_hash_hex()}, {"rows", jrows}};
        io::write_json(root_ / "eval" / "report.json", out);
        auto f = io::open_out(root_ / "eval" / "report.txt");
        f << text.str();
        return out;
    }

    // ---- shared helpers ------------------------------------------------------

    fs::path run_dir(const std::string& stage, const TeacherKind* kind, std::uint64_t seed) const {
        std::string name = stage;
        if (kind) name += "_" + teacher_kind_name(*kind);
        name += "_s" + std::to_string(seed);
        return root_ / "runs" / name;
    }

    fs::path cache_path(const std::string& tag) const { return root_ / "eval" / ("cache_" + tag + ".jsonl"); }

    DataView load_dataview(const TeacherKind* teacher) const {
        DataView data;
        data.signal = cfg_.signal;
        for (const auto& stem : recording_stems())
            data.recordings.push_back(truncate_recording(io::read_recording(stem), cfg_.signal.max_duration_s));
        if (data.recordings.empty()) throw DataError("no recordings; run `synth` first");
        data.split = io::read_split(root_ / "prep" / "split.json");
        if (teacher) {
            const std::int64_t chunks = usable_frames(50) / round_half_away(cfg_.signal.excerpt_s * 50.0);
            if (*teacher == TeacherKind::muq) {
                for (int s = 0; s < cfg_.synthetic.songs; ++s) {
                    std::vector<fs::path> stems;
                    for (std::int64_t c = 0; c < chunks; ++c) stems.push_back(muq_stem(s, c));
                    data.muq.push_back(io::read_muq_excerpts(stems));
                }
            } else {
                for (int s = 0; s < cfg_.synthetic.songs; ++s) {
                    std::vector<fs::path> stems;
                    for (std::int64_t c = 0; c < chunks; ++c) stems.push_back(predictive_stem(s, c));
                    data.predictive.push_back(io::read_predictive_excerpts(stems));
                }
            }
        }
        data.build_items();
        return data;
    }

    PredannModel<float> load_model(const fs::path& run) const {
        const json meta = io::read_json(run / "checkpoint.json");
        ModelConfig mc = model_config_from_json(meta.at("model"));
        Rng init(0);  // placeholder values, overwritten by the checkpoint
        PredannModel<float> model(mc, init);
        model.has_decoder = meta.at("has_decoder").get<bool>();
        ParamList<float> tensors;
        model.collect(tensors);
        model.collect_buffers(tensors);
        io::load_named_tensors(run / "checkpoint.ckpt", tensors);
        return model;
    }

private:
    bool wants_teacher(TeacherKind k) const {
        for (const auto& name : cfg_.teacher.kinds)
            if (teacher_kind_from(name) == k) return true;
        return false;
    }

    // frames of teacher material the EEG side can actually use: whole
    // excerpts of the truncated common duration
    std::int64_t usable_frames(int rate) const {
        const double dur = std::min(cfg_.synthetic.duration_s, cfg_.signal.max_duration_s);
        const auto excerpts = static_cast<std::int64_t>(dur / cfg_.signal.excerpt_s);
        return excerpts * round_half_away(cfg_.signal.excerpt_s * static_cast<double>(rate));
    }

    fs::path recording_stem(int subject, int song) const {
        return root_ / "data" / "recordings" / ("sub" + std::to_string(subject) + "_song" + std::to_string(song));
    }

    std::vector<fs::path> recording_stems() const {
        std::vector<fs::path> stems;
        for (int u = 0; u < cfg_.synthetic.subjects; ++u)
            for (int s = 0; s < cfg_.synthetic.songs; ++s) {
                const fs::path stem = recording_stem(u, s);
                if (fs::exists(fs::path(stem).concat(".json"))) stems.push_back(stem);
            }
        return stems;
    }

    fs::path stimulus_stem(int song) const { return root_ / "data" / "stimulus" / ("song" + std::to_string(song)); }

    fs::path muq_stem(int song, std::int64_t chunk) const {
        return root_ / "features" / "muq" / ("song" + std::to_string(song) + "_ex" + std::to_string(chunk));
    }

    fs::path predictive_stem(int song, std::int64_t chunk) const {
        return root_ / "features" / "predictive" / ("song" + std::to_string(song) + "_ex" + std::to_string(chunk));
    }

    std::vector<double> read_embeddings(int song) const {
        const fs::path stem = stimulus_stem(song);
        const json meta = io::read_json(fs::path(stem).concat(".json"));
        const auto frames = meta.at("frames_25hz").get<std::int64_t>();
        const int dim = meta.at("embedding_dim").get<int>();
        std::vector<float> buf(static_cast<std::size_t>(frames) * dim);
        auto f = io::open_in(fs::path(stem).concat(".emb.f32"));
        io::read_raw(f, buf.data(), buf.size());
        return {buf.begin(), buf.end()};
    }

    std::tuple<std::vector<int>, std::vector<double>, int> read_stimulus(int song) const {
        const fs::path stem = stimulus_stem(song);
        const json meta = io::read_json(fs::path(stem).concat(".json"));
        const auto frames = meta.at("frames_50hz").get<std::int64_t>();
        const int vocab = meta.at("vocab").get<int>();
        std::vector<std::int32_t> tok(static_cast<std::size_t>(frames));
        {
            auto f = io::open_in(fs::path(stem).concat(".tokens.i32"));
            io::read_raw(f, tok.data(), tok.size());
        }
        std::vector<float> trans(static_cast<std::size_t>(vocab) * vocab);
        {
            auto f = io::open_in(fs::path(stem).concat(".transition.f32"));
            io::read_raw(f, trans.data(), trans.size());
        }
        // renormalize rows: f32 storage rounds the exact row sums
        std::vector<double> transition(trans.begin(), trans.end());
        for (int i = 0; i < vocab; ++i) {
            double sum = 0.0;
            for (int j = 0; j < vocab; ++j) sum += transition[static_cast<std::size_t>(i) * vocab + j];
            for (int j = 0; j < vocab; ++j) transition[static_cast<std::size_t>(i) * vocab + j] /= sum;
        }
        return {std::vector<int>(tok.begin(), tok.end()), std::move(transition), vocab};
    }

    fs::path run_stage(PredannModel<float>& model, const DataView& data, const TrainPlan& plan,
                       const fs::path& dir) {
        if (data.train_items.empty()) throw DataError("no training windows; check prep outputs");
        fs::create_directories(dir);
        const fs::path metrics = dir / "metrics.jsonl";
        if (fs::exists(metrics)) fs::remove(metrics);

        TrainLoop loop(model, data, plan);
        loop.run([&](const EpochLog& log) {
            io::append_jsonl(metrics, json{{"epoch", log.epoch},
                                           {"loss", log.loss},
                                           {"loss_classify", log.loss_classify},
                                           {"loss_masked", log.loss_masked},
                                           {"wall_ms", log.wall_ms},
                                           {"skipped_batches", log.skipped_batches}});
        });

        ParamList<float> tensors;
        model.collect(tensors);
        model.collect_buffers(tensors);
        io::save_named_tensors(dir / "checkpoint.ckpt", tensors);
        Rng final_dropout = derive_rng(plan.seed, "train/dropout/" + std::to_string(plan.epochs - 1));
        json rng_words = json::array();
        for (auto w : final_dropout.serialize()) rng_words.push_back(io::hash_hex(w));
        io::write_json(dir / "checkpoint.json",
                       json{{"stage", plan.stage_name()},
                            {"teacher", teacher_kind_name(plan.teacher)},
                            {"seed", plan.seed},
                            {"epochs", plan.epochs},
                            {"optimizer_steps", loop.optimizer().step_count},
                            {"rng_state", rng_words},
                            {"has_decoder", model.has_decoder},
                            {"model", model_config_to_json(model.cfg)}});
        write_manifest(dir, plan.stage_name(),
                       json{{"seed", plan.seed},
                            {"teacher", teacher_kind_name(plan.teacher)},
                            {"epochs", plan.epochs},
                            {"metrics", "metrics.jsonl"},
                            {"checkpoint", "checkpoint.ckpt"}});
        return dir;
    }

    void write_manifest(const fs::path& dir, const std::string& stage, json extra) const {
        extra["stage"] = stage;
        extra["config_hash"] = config_hash_hex();
        extra["config"] = to_json(cfg_);
        io::write_json(dir / "manifest.json", extra);
    }

    PipelineConfig cfg_;
    fs::path root_;
};

}  // namespace predann

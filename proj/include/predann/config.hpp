#pragma once

#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "predann/model.hpp"
#include "predann/signal.hpp"

namespace predann {

using nlohmann::json;

// exit-code classes: 1 usage/schema, 2 data, 3 numeric
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SyntheticSpec {
    int songs = 10;
    int subjects = 2;
    int channels = 128;
    double sample_rate = 125.0;
    double duration_s = 240.0;
    int embedding_dim = 1024;  // continuous acoustic feature width
    int vocab = 2048;          // audio token vocabulary
    int latents = 3;
    double coupling = 0.8;  // teacher-to-EEG coupling strength in [0, 1]
    double noise = 1.0;

    void validate() const {
        if (songs < 2) throw ConfigError("synthetic.songs must be >= 2");
        if (subjects < 1) throw ConfigError("synthetic.subjects must be >= 1");
        if (coupling < 0.0 || coupling > 1.0) throw ConfigError("synthetic.coupling must lie in [0, 1]");
        if (duration_s < 30.0) throw ConfigError("synthetic.duration_s must cover one excerpt");
    }
};

struct TeacherSettings {
    std::vector<std::string> kinds = {"muq", "surprisal", "entropy"};
    int context_window_s = 16;
    bool chunk_mode = false;
    int bins = 128;
    int clusters = 128;
    std::uint64_t kmeans_seed = 0;
    int kmeans_restarts = 10;

    void validate() const {
        if (!chunk_mode && context_window_s != 8 && context_window_s != 16 && context_window_s != 32)
            throw ConfigError("teacher.context_window_s must be 8, 16 or 32 (or use chunk mode)");
        for (const auto& k : kinds) teacher_kind_from(k);
        if (bins < 2 || clusters < 1) throw ConfigError("teacher.bins/clusters out of range");
    }
};

struct TrainSettings {
    int pretrain_epochs = 10000;
    int finetune_epochs = 3500;
    int fullscratch_epochs = 3500;
    int batch_size = 48;
    double lr = 0.003;
    std::uint64_t pretrain_seed = 42;
    std::vector<std::uint64_t> seeds = {0, 1, 42};

    void validate() const {
        if (pretrain_epochs <= 0 || finetune_epochs <= 0 || fullscratch_epochs <= 0)
            throw ConfigError("train.*_epochs must be positive");
        if (batch_size < 1) throw ConfigError("train.batch_size must be positive");
        if (lr <= 0.0) throw ConfigError("train.lr must be positive");
        if (seeds.empty()) throw ConfigError("train.seeds must not be empty");
    }
};

struct PipelineConfig {
    std::string workdir = "runs/predann";
    std::uint64_t root_seed = 42;
    SyntheticSpec synthetic;
    SignalParams signal;
    TeacherSettings teacher;
    ModelConfig model;
    TrainSettings train;

    void validate() const {
        synthetic.validate();
        teacher.validate();
        train.validate();
        if (signal.split_ratio <= 0.0 || signal.split_ratio >= 1.0)
            throw ConfigError("signal.split_ratio must lie in (0, 1)");
    }
};

namespace detail {

inline void reject_unknown_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [key, value] : j.items())
        if (allowed.find(key) == allowed.end()) throw ConfigError(where + ": unknown key '" + key + "'");
}

template <class T>
void maybe(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline void apply_json(SyntheticSpec& s, const json& j) {
    detail::reject_unknown_keys(j,
                                {"songs", "subjects", "channels", "sample_rate", "duration_s", "embedding_dim",
                                 "vocab", "latents", "coupling", "noise"},
                                "synthetic");
    detail::maybe(j, "songs", s.songs);
    detail::maybe(j, "subjects", s.subjects);
    detail::maybe(j, "channels", s.channels);
    detail::maybe(j, "sample_rate", s.sample_rate);
    detail::maybe(j, "duration_s", s.duration_s);
    detail::maybe(j, "embedding_dim", s.embedding_dim);
    detail::maybe(j, "vocab", s.vocab);
    detail::maybe(j, "latents", s.latents);
    detail::maybe(j, "coupling", s.coupling);
    detail::maybe(j, "noise", s.noise);
}

inline void apply_json(SignalParams& s, const json& j) {
    detail::reject_unknown_keys(j,
                                {"max_duration_s", "excerpt_s", "window_s", "stride_s", "segment_s", "delay_ms",
                                 "clamp", "split_ratio", "split_seed"},
                                "signal");
    detail::maybe(j, "max_duration_s", s.max_duration_s);
    detail::maybe(j, "excerpt_s", s.excerpt_s);
    detail::maybe(j, "window_s", s.window_s);
    detail::maybe(j, "stride_s", s.stride_s);
    detail::maybe(j, "segment_s", s.segment_s);
    detail::maybe(j, "delay_ms", s.delay_ms);
    detail::maybe(j, "clamp", s.clamp);
    detail::maybe(j, "split_ratio", s.split_ratio);
    detail::maybe(j, "split_seed", s.split_seed);
}

inline void apply_json(TeacherSettings& t, const json& j) {
    detail::reject_unknown_keys(
        j, {"kinds", "context_window_s", "chunk_mode", "bins", "clusters", "kmeans_seed", "kmeans_restarts"},
        "teacher");
    detail::maybe(j, "kinds", t.kinds);
    detail::maybe(j, "context_window_s", t.context_window_s);
    detail::maybe(j, "chunk_mode", t.chunk_mode);
    detail::maybe(j, "bins", t.bins);
    detail::maybe(j, "clusters", t.clusters);
    detail::maybe(j, "kmeans_seed", t.kmeans_seed);
    detail::maybe(j, "kmeans_restarts", t.kmeans_restarts);
}

inline void apply_json(ModelConfig& m, const json& j) {
    detail::reject_unknown_keys(j,
                                {"patch_dim", "embed_dim", "encoder_layers", "decoder_layers", "heads",
                                 "mlp_ratio", "mask_ratio", "w_classify", "w_masked", "dropout", "norm_groups"},
                                "model");
    detail::maybe(j, "patch_dim", m.patch_dim);
    detail::maybe(j, "embed_dim", m.embed_dim);
    detail::maybe(j, "encoder_layers", m.encoder_layers);
    detail::maybe(j, "decoder_layers", m.decoder_layers);
    detail::maybe(j, "heads", m.heads);
    detail::maybe(j, "mlp_ratio", m.mlp_ratio);
    detail::maybe(j, "mask_ratio", m.mask_ratio);
    detail::maybe(j, "w_classify", m.w_classify);
    detail::maybe(j, "w_masked", m.w_masked);
    detail::maybe(j, "dropout", m.dropout);
    detail::maybe(j, "norm_groups", m.norm_groups);
}

inline void apply_json(TrainSettings& t, const json& j) {
    detail::reject_unknown_keys(j,
                                {"pretrain_epochs", "finetune_epochs", "fullscratch_epochs", "batch_size", "lr",
                                 "pretrain_seed", "seeds"},
                                "train");
    detail::maybe(j, "pretrain_epochs", t.pretrain_epochs);
    detail::maybe(j, "finetune_epochs", t.finetune_epochs);
    detail::maybe(j, "fullscratch_epochs", t.fullscratch_epochs);
    detail::maybe(j, "batch_size", t.batch_size);
    detail::maybe(j, "lr", t.lr);
    detail::maybe(j, "pretrain_seed", t.pretrain_seed);
    detail::maybe(j, "seeds", t.seeds);
}

inline PipelineConfig parse_config(const json& j) {
    detail::reject_unknown_keys(
        j, {"workdir", "root_seed", "synthetic", "signal", "teacher", "model", "train"}, "config");
    PipelineConfig cfg;
    detail::maybe(j, "workdir", cfg.workdir);
    detail::maybe(j, "root_seed", cfg.root_seed);
    if (j.contains("synthetic")) apply_json(cfg.synthetic, j.at("synthetic"));
    if (j.contains("signal")) apply_json(cfg.signal, j.at("signal"));
    if (j.contains("teacher")) apply_json(cfg.teacher, j.at("teacher"));
    if (j.contains("model")) apply_json(cfg.model, j.at("model"));
    if (j.contains("train")) apply_json(cfg.train, j.at("train"));
    cfg.validate();
    return cfg;
}

inline json to_json(const PipelineConfig& c) {
    return json{
        {"workdir", c.workdir},
        {"root_seed", c.root_seed},
        {"synthetic",
         {{"songs", c.synthetic.songs},
          {"subjects", c.synthetic.subjects},
          {"channels", c.synthetic.channels},
          {"sample_rate", c.synthetic.sample_rate},
          {"duration_s", c.synthetic.duration_s},
          {"embedding_dim", c.synthetic.embedding_dim},
          {"vocab", c.synthetic.vocab},
          {"latents", c.synthetic.latents},
          {"coupling", c.synthetic.coupling},
          {"noise", c.synthetic.noise}}},
        {"signal",
         {{"max_duration_s", c.signal.max_duration_s},
          {"excerpt_s", c.signal.excerpt_s},
          {"window_s", c.signal.window_s},
          {"stride_s", c.signal.stride_s},
          {"segment_s", c.signal.segment_s},
          {"delay_ms", c.signal.delay_ms},
          {"clamp", c.signal.clamp},
          {"split_ratio", c.signal.split_ratio},
          {"split_seed", c.signal.split_seed}}},
        {"teacher",
         {{"kinds", c.teacher.kinds},
          {"context_window_s", c.teacher.context_window_s},
          {"chunk_mode", c.teacher.chunk_mode},
          {"bins", c.teacher.bins},
          {"clusters", c.teacher.clusters},
          {"kmeans_seed", c.teacher.kmeans_seed},
          {"kmeans_restarts", c.teacher.kmeans_restarts}}},
        {"model",
         {{"patch_dim", c.model.patch_dim},
          {"embed_dim", c.model.embed_dim},
          {"encoder_layers", c.model.encoder_layers},
          {"decoder_layers", c.model.decoder_layers},
          {"heads", c.model.heads},
          {"mlp_ratio", c.model.mlp_ratio},
          {"mask_ratio", c.model.mask_ratio},
          {"w_classify", c.model.w_classify},
          {"w_masked", c.model.w_masked},
          {"dropout", c.model.dropout},
          {"norm_groups", c.model.norm_groups}}},
        {"train",
         {{"pretrain_epochs", c.train.pretrain_epochs},
          {"finetune_epochs", c.train.finetune_epochs},
          {"fullscratch_epochs", c.train.fullscratch_epochs},
          {"batch_size", c.train.batch_size},
          {"lr", c.train.lr},
          {"pretrain_seed", c.train.pretrain_seed},
          {"seeds", c.train.seeds}}}};
}

// Full model geometry as stored in checkpoints.
inline json model_config_to_json(const ModelConfig& m) {
    return json{{"channels", m.channels},
                {"seconds", m.seconds},
                {"rate", m.rate},
                {"patch_dim", m.patch_dim},
                {"embed_dim", m.embed_dim},
                {"encoder_layers", m.encoder_layers},
                {"decoder_layers", m.decoder_layers},
                {"heads", m.heads},
                {"mlp_ratio", m.mlp_ratio},
                {"classes", m.classes},
                {"vocab", m.vocab},
                {"mask_ratio", m.mask_ratio},
                {"w_classify", m.w_classify},
                {"w_masked", m.w_masked},
                {"dropout", m.dropout},
                {"norm_groups", m.norm_groups},
                {"teacher", teacher_kind_name(m.teacher)},
                {"teacher_len", m.teacher_len},
                {"teacher_dim", m.teacher_dim}};
}

inline ModelConfig model_config_from_json(const json& j) {
    ModelConfig m;
    m.channels = j.at("channels").get<int>();
    m.seconds = j.at("seconds").get<int>();
    m.rate = j.at("rate").get<int>();
    m.patch_dim = j.at("patch_dim").get<int>();
    m.embed_dim = j.at("embed_dim").get<int>();
    m.encoder_layers = j.at("encoder_layers").get<int>();
    m.decoder_layers = j.at("decoder_layers").get<int>();
    m.heads = j.at("heads").get<int>();
    m.mlp_ratio = j.at("mlp_ratio").get<double>();
    m.classes = j.at("classes").get<int>();
    m.vocab = j.at("vocab").get<int>();
    m.mask_ratio = j.at("mask_ratio").get<double>();
    m.w_classify = j.at("w_classify").get<double>();
    m.w_masked = j.at("w_masked").get<double>();
    m.dropout = j.at("dropout").get<double>();
    m.norm_groups = j.at("norm_groups").get<int>();
    m.teacher = teacher_kind_from(j.at("teacher").get<std::string>());
    m.teacher_len = j.at("teacher_len").get<int>();
    m.teacher_dim = j.at("teacher_dim").get<int>();
    return m;
}

// Model geometry bound to the data and the chosen teacher: channels/rate
// come from the recordings, classes from the song count, teacher length and
// raw width from the teacher kind.
inline ModelConfig bind_model_config(const PipelineConfig& cfg, TeacherKind kind) {
    ModelConfig m = cfg.model;
    m.channels = cfg.synthetic.channels;
    m.rate = static_cast<int>(cfg.synthetic.sample_rate);
    m.seconds = static_cast<int>(cfg.signal.segment_s);
    m.classes = cfg.synthetic.songs;
    m.vocab = cfg.teacher.bins;
    m.teacher = kind;
    if (kind == TeacherKind::muq) {
        m.teacher_len = static_cast<int>(round_half_away(cfg.signal.segment_s * 25.0));
        m.teacher_dim = cfg.synthetic.embedding_dim;
        m.vocab = cfg.teacher.clusters;
    } else {
        m.teacher_len = static_cast<int>(round_half_away(cfg.signal.segment_s * 50.0));
        m.teacher_dim = 1;
    }
    return m;
}

}  // namespace predann

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "predann/eval.hpp"
#include "predann/nn.hpp"
#include "predann/signal.hpp"
#include "predann/teacher.hpp"

namespace predann::io {

using nlohmann::json;
namespace fs = std::filesystem;

// All binary payloads are little-endian; this code targets little-endian
// hosts and writes native byte order.

inline void ensure_parent(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

inline std::ofstream open_out(const fs::path& p) {
    ensure_parent(p);
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for writing: " + p.string());
    return f;
}

inline std::ifstream open_in(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for reading: " + p.string());
    return f;
}

template <class T>
void write_raw(std::ofstream& f, const T* data, std::size_t count) {
    f.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * sizeof(T)));
}

template <class T>
void read_raw(std::ifstream& f, T* data, std::size_t count) {
    f.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(count * sizeof(T)));
    if (f.gcount() != static_cast<std::streamsize>(count * sizeof(T)))
        throw std::runtime_error("unexpected end of file");
}

inline void write_json(const fs::path& p, const json& j) {
    auto f = open_out(p);
    f << j.dump(2) << '\n';
}

inline json read_json(const fs::path& p) {
    auto f = open_in(p);
    json j;
    f >> j;
    return j;
}

inline std::uint64_t config_hash(const json& j) { return fnv1a64(j.dump()); }

inline std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---------------------------------------------------------------------------
// recordings: flat channel-major f32 plus a JSON sidecar
// ---------------------------------------------------------------------------

inline void write_recording(const fs::path& stem, const Recording& rec) {
    auto f = open_out(fs::path(stem).concat(".f32"));
    write_raw(f, rec.samples.data(), rec.samples.size());
    write_json(fs::path(stem).concat(".json"), json{{"channels", rec.channels},
                                                    {"sample_rate", rec.sample_rate},
                                                    {"song_id", rec.song_id},
                                                    {"subject_id", rec.subject_id}});
}

inline Recording read_recording(const fs::path& stem) {
    const json meta = read_json(fs::path(stem).concat(".json"));
    Recording rec;
    rec.channels = meta.at("channels").get<int>();
    rec.sample_rate = meta.at("sample_rate").get<double>();
    rec.song_id = meta.at("song_id").get<int>();
    rec.subject_id = meta.at("subject_id").get<int>();
    const auto bin = fs::path(stem).concat(".f32");
    const auto bytes = fs::file_size(bin);
    if (bytes % sizeof(float) != 0) throw std::runtime_error("recording size not a float multiple: " + bin.string());
    rec.samples.resize(bytes / sizeof(float));
    auto f = open_in(bin);
    read_raw(f, rec.samples.data(), rec.samples.size());
    rec.validate();
    return rec;
}

// ---------------------------------------------------------------------------
// split assignment
// ---------------------------------------------------------------------------

inline void write_split(const fs::path& p, const SplitAssignment& split, double ratio) {
    json train = json::array(), val = json::array();
    for (const auto& r : split.train) train.push_back({r.song_id, r.excerpt_index});
    for (const auto& r : split.val) val.push_back({r.song_id, r.excerpt_index});
    write_json(p, json{{"seed", split.seed}, {"ratio", ratio}, {"train", train}, {"val", val}});
}

inline SplitAssignment read_split(const fs::path& p) {
    const json j = read_json(p);
    SplitAssignment split;
    split.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& r : j.at("train")) split.train.insert({r.at(0).get<int>(), r.at(1).get<int>()});
    for (const auto& r : j.at("val")) split.val.insert({r.at(0).get<int>(), r.at(1).get<int>()});
    return split;
}

// ---------------------------------------------------------------------------
// teacher stores
// ---------------------------------------------------------------------------

// Predictive excerpt block: per segment, raw surprisal f32, raw entropy f32,
// then the two token rows as u8.
inline void write_predictive_excerpt(const fs::path& stem, const PredictiveTeacher& teacher,
                                     std::int64_t chunk_index, std::int64_t chunk_frames = 1500) {
    const std::int64_t c0 = chunk_index * chunk_frames;
    const std::int64_t c1 = c0 + chunk_frames;
    json starts = json::array();
    auto f = open_out(fs::path(stem).concat(".bin"));
    std::vector<float> raw(static_cast<std::size_t>(teacher.seg_len));
    for (const auto& seg : teacher.segments) {
        if (seg.start_frame < c0 || seg.start_frame + teacher.seg_len > c1) continue;
        if (seg.surprisal_disc.empty()) throw std::logic_error("write_predictive_excerpt: not discretized");
        starts.push_back(seg.start_s(teacher.frame_rate));
        for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = static_cast<float>(seg.surprisal[i]);
        write_raw(f, raw.data(), raw.size());
        for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = static_cast<float>(seg.entropy[i]);
        write_raw(f, raw.data(), raw.size());
        write_raw(f, seg.surprisal_disc.data(), seg.surprisal_disc.size());
        write_raw(f, seg.entropy_disc.data(), seg.entropy_disc.size());
    }
    write_json(fs::path(stem).concat(".json"),
               json{{"kind", "predictive"},
                    {"frame_rate_hz", teacher.frame_rate},
                    {"seg_len", teacher.seg_len},
                    {"segment_start_s", starts},
                    {"context_window_s", teacher.context_mode},
                    {"vocab_size", teacher.vocab}});
}

// Reassemble a song-level store from its per-excerpt blocks.
inline PredictiveTeacher read_predictive_excerpts(const std::vector<fs::path>& stems) {
    PredictiveTeacher out;
    bool first = true;
    for (const auto& stem : stems) {
        const json meta = read_json(fs::path(stem).concat(".json"));
        if (first) {
            out.frame_rate = meta.at("frame_rate_hz").get<int>();
            out.seg_len = meta.at("seg_len").get<int>();
            out.context_mode = meta.at("context_window_s").get<std::string>();
            out.vocab = meta.at("vocab_size").get<int>();
            first = false;
        }
        auto f = open_in(fs::path(stem).concat(".bin"));
        std::vector<float> raw(static_cast<std::size_t>(out.seg_len));
        for (const auto& start : meta.at("segment_start_s")) {
            PredictiveSegment seg;
            seg.start_frame = round_half_away(start.get<double>() * out.frame_rate);
            read_raw(f, raw.data(), raw.size());
            seg.surprisal.assign(raw.begin(), raw.end());
            read_raw(f, raw.data(), raw.size());
            seg.entropy.assign(raw.begin(), raw.end());
            seg.surprisal_disc.resize(raw.size());
            seg.entropy_disc.resize(raw.size());
            read_raw(f, seg.surprisal_disc.data(), seg.surprisal_disc.size());
            read_raw(f, seg.entropy_disc.data(), seg.entropy_disc.size());
            out.segments.push_back(std::move(seg));
        }
    }
    return out;
}

inline void write_muq_excerpt(const fs::path& stem, const MuqTeacher& teacher, std::int64_t chunk_index,
                              int vocab) {
    if (chunk_index < 0 || chunk_index >= teacher.chunks())
        throw std::out_of_range("write_muq_excerpt: chunk out of range");
    auto f = open_out(fs::path(stem).concat(".bin"));
    const auto& raw = teacher.raw[static_cast<std::size_t>(chunk_index)];
    std::vector<float> buf(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) buf[i] = static_cast<float>(raw[i]);
    write_raw(f, buf.data(), buf.size());
    const auto& disc = teacher.disc[static_cast<std::size_t>(chunk_index)];
    write_raw(f, disc.data(), disc.size());
    write_json(fs::path(stem).concat(".json"),
               json{{"kind", "muq"},
                    {"frame_rate_hz", teacher.frame_rate},
                    {"frames", teacher.chunk_frames},
                    {"dim", teacher.dim},
                    {"segment_start_s", 30.0 * static_cast<double>(chunk_index)},
                    {"context_window_s", nullptr},
                    {"vocab_size", vocab}});
}

inline MuqTeacher read_muq_excerpts(const std::vector<fs::path>& stems) {
    MuqTeacher out;
    bool first = true;
    for (const auto& stem : stems) {
        const json meta = read_json(fs::path(stem).concat(".json"));
        if (first) {
            out.frame_rate = meta.at("frame_rate_hz").get<int>();
            out.chunk_frames = meta.at("frames").get<std::int64_t>();
            out.dim = meta.at("dim").get<int>();
            first = false;
        }
        auto f = open_in(fs::path(stem).concat(".bin"));
        std::vector<float> buf(static_cast<std::size_t>(out.chunk_frames) * out.dim);
        read_raw(f, buf.data(), buf.size());
        std::vector<std::uint8_t> disc(static_cast<std::size_t>(out.chunk_frames));
        read_raw(f, disc.data(), disc.size());
        out.raw.emplace_back(buf.begin(), buf.end());
        out.disc.push_back(std::move(disc));
    }
    return out;
}

// ---------------------------------------------------------------------------
// codebook / bins
// ---------------------------------------------------------------------------

inline void write_codebook(const fs::path& stem, const KMeansCodebook& cb) {
    auto f = open_out(fs::path(stem).concat(".f32"));
    std::vector<float> buf(cb.centroids.size());
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(cb.centroids[i]);
    write_raw(f, buf.data(), buf.size());
    write_json(fs::path(stem).concat(".json"), json{{"k", cb.k},
                                                    {"dim", cb.dim},
                                                    {"seed", cb.seed},
                                                    {"restarts", cb.restarts},
                                                    {"init", "kmeans++"},
                                                    {"inertia", cb.inertia}});
}

inline KMeansCodebook read_codebook(const fs::path& stem) {
    const json meta = read_json(fs::path(stem).concat(".json"));
    KMeansCodebook cb;
    cb.k = meta.at("k").get<int>();
    cb.dim = meta.at("dim").get<int>();
    cb.seed = meta.at("seed").get<std::uint64_t>();
    cb.restarts = meta.at("restarts").get<int>();
    cb.inertia = meta.at("inertia").get<double>();
    std::vector<float> buf(static_cast<std::size_t>(cb.k) * cb.dim);
    auto f = open_in(fs::path(stem).concat(".f32"));
    read_raw(f, buf.data(), buf.size());
    cb.centroids.assign(buf.begin(), buf.end());
    return cb;
}

inline void write_bins(const fs::path& stem, const QuantileBins& bins) {
    auto f = open_out(fs::path(stem).concat(".f32"));
    std::vector<float> buf(bins.edges.size());
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(bins.edges[i]);
    write_raw(f, buf.data(), buf.size());
    // edges are also kept at full precision in the sidecar; the f32 array is
    // the interchange format, the json the source of truth for reloads
    write_json(fs::path(stem).concat(".json"),
               json{{"feature", bins.feature}, {"bins", bins.bins()}, {"edges", bins.edges}});
}

inline QuantileBins read_bins(const fs::path& stem) {
    const json meta = read_json(fs::path(stem).concat(".json"));
    QuantileBins bins;
    bins.feature = meta.at("feature").get<std::string>();
    bins.edges = meta.at("edges").get<std::vector<double>>();
    return bins;
}

// ---------------------------------------------------------------------------
// checkpoints: named-tensor archive + JSON manifest
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointMagic = 0x50414e4e;  // "PANN"

template <class T>
void save_named_tensors(const fs::path& p, const ParamList<T>& tensors) {
    auto f = open_out(p);
    const std::uint32_t magic = kCheckpointMagic, version = 1;
    write_raw(f, &magic, 1);
    write_raw(f, &version, 1);
    const std::uint64_t count = tensors.size();
    write_raw(f, &count, 1);
    for (const auto& t : tensors) {
        const std::uint32_t name_len = static_cast<std::uint32_t>(t.name.size());
        write_raw(f, &name_len, 1);
        f.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
        const std::uint32_t ndim = static_cast<std::uint32_t>(t.tensor->shape.size());
        write_raw(f, &ndim, 1);
        for (int d : t.tensor->shape) {
            const std::int64_t dim = d;
            write_raw(f, &dim, 1);
        }
        std::vector<float> buf(t.tensor->size());
        for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(t.tensor->data[i]);
        write_raw(f, buf.data(), buf.size());
    }
}

// Loads into an existing parameter list; every archived name must match an
// expected tensor of identical shape, and vice versa.
template <class T>
void load_named_tensors(const fs::path& p, const ParamList<T>& tensors) {
    auto f = open_in(p);
    std::uint32_t magic = 0, version = 0;
    read_raw(f, &magic, 1);
    read_raw(f, &version, 1);
    if (magic != kCheckpointMagic || version != 1) throw std::runtime_error("bad checkpoint header: " + p.string());
    std::uint64_t count = 0;
    read_raw(f, &count, 1);
    if (count != tensors.size())
        throw std::runtime_error("checkpoint tensor count mismatch: " + p.string() + " has " +
                                 std::to_string(count) + ", expected " + std::to_string(tensors.size()));
    for (std::uint64_t k = 0; k < count; ++k) {
        std::uint32_t name_len = 0;
        read_raw(f, &name_len, 1);
        std::string name(name_len, '\0');
        f.read(name.data(), name_len);
        const auto& expected = tensors[static_cast<std::size_t>(k)];
        if (name != expected.name)
            throw std::runtime_error("checkpoint tensor order mismatch: got " + name + ", expected " +
                                     expected.name);
        std::uint32_t ndim = 0;
        read_raw(f, &ndim, 1);
        std::vector<int> shape(ndim);
        for (auto& d : shape) {
            std::int64_t dim = 0;
            read_raw(f, &dim, 1);
            d = static_cast<int>(dim);
        }
        if (shape != expected.tensor->shape) throw std::runtime_error("checkpoint shape mismatch for " + name);
        std::vector<float> buf(expected.tensor->size());
        read_raw(f, buf.data(), buf.size());
        for (std::size_t i = 0; i < buf.size(); ++i) expected.tensor->data[i] = static_cast<T>(buf[i]);
    }
}

// ---------------------------------------------------------------------------
// prediction caches: one JSON header line, then one record per line
// ---------------------------------------------------------------------------

inline void write_cache(const fs::path& p, const PredictionCache& cache) {
    auto f = open_out(p);
    f << json{{"model_tag", cache.model_tag}, {"config_hash", cache.config_hash}}.dump() << '\n';
    for (const auto& [id, e] : cache.entries)
        f << json{{"sample_id", id}, {"label", e.label}, {"logits", e.logits}}.dump() << '\n';
}

inline PredictionCache read_cache(const fs::path& p) {
    auto f = open_in(p);
    std::string line;
    if (!std::getline(f, line)) throw std::runtime_error("empty cache file: " + p.string());
    const json header = json::parse(line);
    PredictionCache cache;
    cache.model_tag = header.at("model_tag").get<std::string>();
    cache.config_hash = header.at("config_hash").get<std::string>();
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        const json j = json::parse(line);
        PredictionEntry e;
        e.label = j.at("label").get<int>();
        e.logits = j.at("logits").get<std::vector<double>>();
        cache.entries.emplace(j.at("sample_id").get<std::string>(), std::move(e));
    }
    return cache;
}

inline void append_jsonl(const fs::path& p, const json& j) {
    ensure_parent(p);
    std::ofstream f(p, std::ios::app);
    if (!f) throw std::runtime_error("cannot append: " + p.string());
    f << j.dump() << '\n';
}

}  // namespace predann::io

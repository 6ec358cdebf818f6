#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "predann/rng.hpp"
#include "predann/stats.hpp"

namespace predann {

enum class TeacherKind { muq, surprisal, entropy };

inline std::string teacher_kind_name(TeacherKind k) {
    switch (k) {
        case TeacherKind::muq: return "muq";
        case TeacherKind::surprisal: return "surprisal";
        case TeacherKind::entropy: return "entropy";
    }
    throw std::logic_error("teacher_kind_name");
}

inline TeacherKind teacher_kind_from(const std::string& s) {
    if (s == "muq") return TeacherKind::muq;
    if (s == "surprisal") return TeacherKind::surprisal;
    if (s == "entropy") return TeacherKind::entropy;
    throw std::invalid_argument("unknown teacher kind: " + s);
}

// ---------------------------------------------------------------------------
// k-means codebook (acoustic tokens)
// ---------------------------------------------------------------------------

struct KMeansCodebook {
    int k = 0;
    int dim = 0;
    std::vector<double> centroids;  // k x dim
    std::uint64_t seed = 0;
    int restarts = 0;
    double inertia = 0.0;

    const double* centroid(int i) const { return centroids.data() + static_cast<std::size_t>(i) * dim; }
};

namespace detail {

inline double sq_dist(const double* a, const double* b, int d) {
    double acc = 0.0;
    for (int i = 0; i < d; ++i) {
        const double t = a[i] - b[i];
        acc += t * t;
    }
    return acc;
}

// k-means++ seeding: first centre uniform, then D^2 sampling
inline std::vector<double> kmeanspp_init(const std::vector<double>& x, int n, int d, int k, Rng& rng) {
    std::vector<double> centers(static_cast<std::size_t>(k) * d);
    std::vector<double> min_d2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
    int first = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
    std::copy_n(x.data() + static_cast<std::size_t>(first) * d, d, centers.data());
    for (int c = 1; c < k; ++c) {
        const double* prev = centers.data() + static_cast<std::size_t>(c - 1) * d;
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            const double d2 = sq_dist(x.data() + static_cast<std::size_t>(i) * d, prev, d);
            if (d2 < min_d2[static_cast<std::size_t>(i)]) min_d2[static_cast<std::size_t>(i)] = d2;
            total += min_d2[static_cast<std::size_t>(i)];
        }
        int pick = 0;
        if (total > 0.0) {
            double r = rng.uniform() * total;
            for (int i = 0; i < n; ++i) {
                r -= min_d2[static_cast<std::size_t>(i)];
                if (r <= 0.0) {
                    pick = i;
                    break;
                }
                pick = i;
            }
        } else {
            pick = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
        }
        std::copy_n(x.data() + static_cast<std::size_t>(pick) * d, d,
                    centers.data() + static_cast<std::size_t>(c) * d);
    }
    return centers;
}

}  // namespace detail

inline int nearest_centroid(const double* frame, const std::vector<double>& centers, int k, int d) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
        const double d2 = detail::sq_dist(frame, centers.data() + static_cast<std::size_t>(c) * d, d);
        if (d2 < best_d) {  // strict: ties keep the lowest index
            best_d = d2;
            best = c;
        }
    }
    return best;
}

// Lloyd iterations with k-means++ restarts; the lowest-inertia restart wins.
// Empty clusters are reseeded to the point farthest from its own centroid.
inline KMeansCodebook fit_kmeans(const std::vector<double>& x, int n, int d, int k, std::uint64_t seed = 0,
                                 int restarts = 10, double tol = 1e-6, int max_iter = 300) {
    if (n < k) throw std::invalid_argument("fit_kmeans: fewer points than clusters");
    if (static_cast<std::size_t>(n) * d != x.size()) throw std::invalid_argument("fit_kmeans: bad buffer size");
    Rng rng(static_cast<std::uint64_t>(seed));

    KMeansCodebook best;
    best.k = k;
    best.dim = d;
    best.seed = seed;
    best.restarts = restarts;
    best.inertia = std::numeric_limits<double>::infinity();

    std::vector<int> assign(static_cast<std::size_t>(n));
    std::vector<int> counts(static_cast<std::size_t>(k));
    for (int r = 0; r < restarts; ++r) {
        std::vector<double> centers = detail::kmeanspp_init(x, n, d, k, rng);
        for (int iter = 0; iter < max_iter; ++iter) {
            for (int i = 0; i < n; ++i)
                assign[static_cast<std::size_t>(i)] =
                    nearest_centroid(x.data() + static_cast<std::size_t>(i) * d, centers, k, d);

            std::vector<double> next(static_cast<std::size_t>(k) * d, 0.0);
            std::fill(counts.begin(), counts.end(), 0);
            for (int i = 0; i < n; ++i) {
                const int c = assign[static_cast<std::size_t>(i)];
                ++counts[static_cast<std::size_t>(c)];
                const double* xi = x.data() + static_cast<std::size_t>(i) * d;
                double* nc = next.data() + static_cast<std::size_t>(c) * d;
                for (int j = 0; j < d; ++j) nc[j] += xi[j];
            }
            for (int c = 0; c < k; ++c) {
                if (counts[static_cast<std::size_t>(c)] > 0) {
                    double* nc = next.data() + static_cast<std::size_t>(c) * d;
                    for (int j = 0; j < d; ++j) nc[j] /= counts[static_cast<std::size_t>(c)];
                } else {
                    // farthest point from its current centroid takes over
                    int far = 0;
                    double far_d = -1.0;
                    for (int i = 0; i < n; ++i) {
                        const double d2 = detail::sq_dist(
                            x.data() + static_cast<std::size_t>(i) * d,
                            centers.data() + static_cast<std::size_t>(assign[static_cast<std::size_t>(i)]) * d, d);
                        if (d2 > far_d) {
                            far_d = d2;
                            far = i;
                        }
                    }
                    std::copy_n(x.data() + static_cast<std::size_t>(far) * d, d,
                                next.data() + static_cast<std::size_t>(c) * d);
                }
            }
            double shift = 0.0;
            for (int c = 0; c < k; ++c)
                shift = std::max(shift, detail::sq_dist(next.data() + static_cast<std::size_t>(c) * d,
                                                        centers.data() + static_cast<std::size_t>(c) * d, d));
            centers.swap(next);
            if (std::sqrt(shift) < tol) break;
        }
        double inertia = 0.0;
        for (int i = 0; i < n; ++i) {
            const int c = nearest_centroid(x.data() + static_cast<std::size_t>(i) * d, centers, k, d);
            inertia += detail::sq_dist(x.data() + static_cast<std::size_t>(i) * d,
                                       centers.data() + static_cast<std::size_t>(c) * d, d);
        }
        if (inertia < best.inertia) {
            best.inertia = inertia;
            best.centroids = std::move(centers);
        }
    }
    return best;
}

inline std::vector<int> assign_tokens(const KMeansCodebook& cb, const std::vector<double>& frames, int n) {
    if (static_cast<std::size_t>(n) * cb.dim != frames.size())
        throw std::invalid_argument("assign_tokens: dimension mismatch");
    std::vector<int> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        out[static_cast<std::size_t>(i)] =
            nearest_centroid(frames.data() + static_cast<std::size_t>(i) * cb.dim, cb.centroids, cb.k, cb.dim);
    return out;
}

// ---------------------------------------------------------------------------
// quantile bins (surprisal / entropy tokens)
// ---------------------------------------------------------------------------

struct QuantileBins {
    std::vector<double> edges;  // B + 1 ascending
    std::string feature;

    int bins() const { return static_cast<int>(edges.size()) - 1; }
};

inline QuantileBins fit_quantile_bins(std::vector<double> pooled, int bins = 128, std::string feature = "") {
    if (pooled.empty()) throw std::invalid_argument("fit_quantile_bins: empty pool");
    std::sort(pooled.begin(), pooled.end());
    QuantileBins out;
    out.feature = std::move(feature);
    out.edges.resize(static_cast<std::size_t>(bins) + 1);
    for (int k = 0; k <= bins; ++k)
        out.edges[static_cast<std::size_t>(k)] = quantile_sorted(pooled, static_cast<double>(k) / bins);
    return out;
}

// Largest b with edge[b] <= value, clamped to [0, B-1]; the global maximum
// (and anything above) lands in the top bin, anything below the minimum in
// bin 0.
inline int discretize_quantile(double value, const QuantileBins& bins) {
    const auto it = std::upper_bound(bins.edges.begin(), bins.edges.end(), value);
    const auto b = static_cast<int>(it - bins.edges.begin()) - 1;
    return std::clamp(b, 0, bins.bins() - 1);
}

// ---------------------------------------------------------------------------
// segment enumeration and context windows
// ---------------------------------------------------------------------------

struct SegmentSpan {
    std::int64_t start = 0;  // s_j
    std::int64_t end = 0;    // e_j, half-open
};

inline std::vector<SegmentSpan> enumerate_segments(std::int64_t t_frames, std::int64_t len = 150,
                                                   std::int64_t stride = 5) {
    std::vector<SegmentSpan> out;
    if (t_frames < len) return out;
    const std::int64_t n = (t_frames - len) / stride + 1;
    out.reserve(static_cast<std::size_t>(n));
    for (std::int64_t j = 0; j < n; ++j) out.push_back({j * stride, j * stride + len});
    return out;
}

// Context slice [e_j - W_f, e_j), left-padded with pad_token at negative
// positions.
inline std::vector<int> build_context(const std::vector<int>& tokens, std::int64_t end_frame,
                                      std::int64_t window_frames, int pad_token) {
    if (end_frame > static_cast<std::int64_t>(tokens.size()))
        throw std::out_of_range("build_context: end frame past token sequence");
    std::vector<int> out(static_cast<std::size_t>(window_frames), pad_token);
    const std::int64_t begin = end_frame - window_frames;
    for (std::int64_t t = std::max<std::int64_t>(begin, 0); t < end_frame; ++t)
        out[static_cast<std::size_t>(t - begin)] = tokens[static_cast<std::size_t>(t)];
    return out;
}

// ---------------------------------------------------------------------------
// surprisal / entropy
// ---------------------------------------------------------------------------

// Rows are pre-softmax logits; -inf marks zero probability and is legal,
// NaN and +inf are not. Uses the final observed.size() rows of `logits`.
inline std::pair<std::vector<double>, std::vector<double>> surprisal_entropy(
    const std::vector<double>& logits, std::int64_t rows, int vocab, const std::vector<int>& observed) {
    const auto n = static_cast<std::int64_t>(observed.size());
    if (rows < n) throw std::invalid_argument("surprisal_entropy: fewer logit rows than observed tokens");
    if (static_cast<std::size_t>(rows) * vocab != logits.size())
        throw std::invalid_argument("surprisal_entropy: bad logit buffer size");

    std::vector<double> s(static_cast<std::size_t>(n)), h(static_cast<std::size_t>(n));
    const std::int64_t first = rows - n;
    for (std::int64_t t = 0; t < n; ++t) {
        const double* row = logits.data() + static_cast<std::size_t>(first + t) * vocab;
        const int z = observed[static_cast<std::size_t>(t)];
        if (z < 0 || z >= vocab) throw std::out_of_range("surprisal_entropy: observed token out of range");

        double max = -std::numeric_limits<double>::infinity();
        for (int v = 0; v < vocab; ++v) {
            if (std::isnan(row[v]) || row[v] == std::numeric_limits<double>::infinity())
                throw std::invalid_argument("surprisal_entropy: non-finite logit");
            max = std::max(max, row[v]);
        }
        if (max == -std::numeric_limits<double>::infinity())
            throw std::invalid_argument("surprisal_entropy: all logits -inf");

        double sum = 0.0;
        for (int v = 0; v < vocab; ++v) sum += std::exp(row[v] - max);
        const double lse = std::log(sum);

        // s = lse - (x_z - max) >= 0 ; h = lse - sum_p (x - max) in [0, ln V]
        s[static_cast<std::size_t>(t)] = lse - (row[z] - max);
        double acc = 0.0;
        for (int v = 0; v < vocab; ++v) {
            const double p = std::exp(row[v] - max) / sum;
            if (p > 0.0) acc += p * (row[v] - max);
        }
        h[static_cast<std::size_t>(t)] = lse - acc;
    }
    return {std::move(s), std::move(h)};
}

// ---------------------------------------------------------------------------
// logit sources
// ---------------------------------------------------------------------------

// Produces next-token logits for the final n_rows positions of `context`:
// row t is the predictive distribution for context[t] given context[0..t).
// `end_frame` identifies the request for file-backed sources and tracing.
class LogitSource {
public:
    virtual ~LogitSource() = default;
    virtual int vocab() const = 0;
    virtual int pad_token() const = 0;
    virtual void tail_logits(std::span<const int> context, std::int64_t n_rows, std::int64_t end_frame,
                             double* out) = 0;
};

// Order-1 Markov stand-in for the autoregressive model: the logit row for
// frame t is the log transition row of token t-1; a pad token (or the first
// frame) maps to the stationary distribution.
class MarkovLogitSource : public LogitSource {
public:
    MarkovLogitSource(std::vector<double> transition, int vocab) : v_(vocab), p_(std::move(transition)) {
        if (p_.size() != static_cast<std::size_t>(v_) * v_)
            throw std::invalid_argument("MarkovLogitSource: transition matrix must be V x V");
        for (int i = 0; i < v_; ++i) {
            double row = 0.0;
            for (int j = 0; j < v_; ++j) {
                const double x = p_[static_cast<std::size_t>(i) * v_ + j];
                if (!(x >= 0.0) || !std::isfinite(x))
                    throw std::invalid_argument("MarkovLogitSource: negative or non-finite entry");
                row += x;
            }
            if (std::fabs(row - 1.0) > 1e-9)
                throw std::invalid_argument("MarkovLogitSource: rows must sum to 1");
        }
        compute_stationary();
    }

    int vocab() const override { return v_; }
    int pad_token() const override { return v_; }

    const std::vector<double>& stationary() const { return pi_; }

    void tail_logits(std::span<const int> context, std::int64_t n_rows, std::int64_t, double* out) override {
        const auto len = static_cast<std::int64_t>(context.size());
        if (n_rows > len) throw std::invalid_argument("MarkovLogitSource: more rows than context");
        for (std::int64_t r = 0; r < n_rows; ++r) {
            const std::int64_t t = len - n_rows + r;
            double* row = out + static_cast<std::size_t>(r) * v_;
            const int prev = t > 0 ? context[static_cast<std::size_t>(t - 1)] : pad_token();
            const double* src = prev == pad_token() ? pi_.data() : p_.data() + static_cast<std::size_t>(prev) * v_;
            if (prev != pad_token() && (prev < 0 || prev >= v_))
                throw std::out_of_range("MarkovLogitSource: token out of range");
            for (int j = 0; j < v_; ++j) row[j] = std::log(src[j]);
        }
    }

private:
    void compute_stationary() {
        pi_.assign(static_cast<std::size_t>(v_), 1.0 / v_);
        std::vector<double> next(static_cast<std::size_t>(v_));
        for (int iter = 0; iter < 2000; ++iter) {
            std::fill(next.begin(), next.end(), 0.0);
            for (int i = 0; i < v_; ++i)
                for (int j = 0; j < v_; ++j)
                    next[static_cast<std::size_t>(j)] += pi_[static_cast<std::size_t>(i)] * p_[static_cast<std::size_t>(i) * v_ + j];
            double delta = 0.0;
            for (int j = 0; j < v_; ++j) delta = std::max(delta, std::fabs(next[static_cast<std::size_t>(j)] - pi_[static_cast<std::size_t>(j)]));
            pi_.swap(next);
            if (delta < 1e-14) break;
        }
    }

    int v_;
    std::vector<double> p_;
    std::vector<double> pi_;
};

// Ingests externally computed logits: one block of (rows x vocab) f32 per
// end_frame key, as exported from a real autoregressive model.
class FileLogitSource : public LogitSource {
public:
    FileLogitSource(int vocab, int pad) : v_(vocab), pad_(pad) {}

    void add_block(std::int64_t end_frame, std::int64_t rows, std::vector<double> logits) {
        if (logits.size() != static_cast<std::size_t>(rows) * v_)
            throw std::invalid_argument("FileLogitSource: bad block size");
        blocks_[end_frame] = {rows, std::move(logits)};
    }

    int vocab() const override { return v_; }
    int pad_token() const override { return pad_; }

    void tail_logits(std::span<const int>, std::int64_t n_rows, std::int64_t end_frame, double* out) override {
        const auto it = blocks_.find(end_frame);
        if (it == blocks_.end())
            throw std::out_of_range("FileLogitSource: no block for end frame " + std::to_string(end_frame));
        const auto& [rows, data] = it->second;
        if (n_rows > rows) throw std::invalid_argument("FileLogitSource: block has fewer rows than requested");
        std::copy(data.end() - static_cast<std::ptrdiff_t>(n_rows) * v_, data.end(), out);
    }

private:
    int v_;
    int pad_;
    std::map<std::int64_t, std::pair<std::int64_t, std::vector<double>>> blocks_;
};

// Records every context handed to the wrapped source; used to verify that
// chunk-restricted feature computation never reads outside its chunk.
class TracingLogitSource : public LogitSource {
public:
    struct Call {
        std::vector<int> context;
        std::int64_t n_rows;
        std::int64_t end_frame;
    };

    explicit TracingLogitSource(LogitSource& inner) : inner_(inner) {}

    int vocab() const override { return inner_.vocab(); }
    int pad_token() const override { return inner_.pad_token(); }

    void tail_logits(std::span<const int> context, std::int64_t n_rows, std::int64_t end_frame,
                     double* out) override {
        calls.push_back({{context.begin(), context.end()}, n_rows, end_frame});
        inner_.tail_logits(context, n_rows, end_frame, out);
    }

    std::vector<Call> calls;

private:
    LogitSource& inner_;
};

// ---------------------------------------------------------------------------
// teacher stores
// ---------------------------------------------------------------------------

struct PredictiveSegment {
    std::int64_t start_frame = 0;  // s_j, absolute within the song
    std::vector<double> surprisal, entropy;
    std::vector<std::uint8_t> surprisal_disc, entropy_disc;

    double start_s(int frame_rate) const { return static_cast<double>(start_frame) / frame_rate; }
};

struct PredictiveTeacher {
    int frame_rate = 50;
    int seg_len = 150;
    int stride = 5;
    int vocab = 0;
    std::string context_mode;  // "8", "16", "32" (seconds) or "chunk"
    std::vector<PredictiveSegment> segments;
};

// Algorithm: slide [5j, 5j+150) over the song; feed the (padded) context
// window [e_j - 50W, e_j) to the source and keep the final 150 rows.
inline PredictiveTeacher sliding_predictive_features(const std::vector<int>& tokens, LogitSource& src,
                                                     int window_s, int frame_rate = 50, int seg_len = 150,
                                                     int stride = 5) {
    if (window_s != 8 && window_s != 16 && window_s != 32)
        throw std::invalid_argument("context window must be 8, 16 or 32 seconds");
    PredictiveTeacher out;
    out.frame_rate = frame_rate;
    out.seg_len = seg_len;
    out.stride = stride;
    out.vocab = src.vocab();
    out.context_mode = std::to_string(window_s);

    const std::int64_t wf = static_cast<std::int64_t>(frame_rate) * window_s;
    std::vector<double> logits(static_cast<std::size_t>(seg_len) * src.vocab());
    for (const SegmentSpan& span : enumerate_segments(static_cast<std::int64_t>(tokens.size()), seg_len, stride)) {
        std::vector<int> ctx = build_context(tokens, span.end, wf, src.pad_token());
        src.tail_logits(ctx, seg_len, span.end, logits.data());
        std::vector<int> observed(tokens.begin() + span.start, tokens.begin() + span.end);
        auto [s, h] = surprisal_entropy(logits, seg_len, src.vocab(), observed);
        PredictiveSegment seg;
        seg.start_frame = span.start;
        seg.surprisal = std::move(s);
        seg.entropy = std::move(h);
        out.segments.push_back(std::move(seg));
    }
    return out;
}

// Conservative variant: logits for every frame of one chunk, context
// confined to the chunk itself. Returns frame-wise values for the whole
// chunk (short final chunks yield short grids).
inline std::pair<std::vector<double>, std::vector<double>> chunk_frame_features(std::span<const int> chunk,
                                                                                LogitSource& src,
                                                                                std::int64_t chunk_start_frame) {
    const auto len = static_cast<std::int64_t>(chunk.size());
    std::vector<double> logits(static_cast<std::size_t>(len) * src.vocab());
    src.tail_logits(chunk, len, chunk_start_frame + len, logits.data());
    std::vector<int> observed(chunk.begin(), chunk.end());
    return surprisal_entropy(logits, len, src.vocab(), observed);
}

// Chunk-based store: grids are computed per chunk, then cut into the same
// stride-5 segment layout as the sliding mode so alignment is uniform.
inline PredictiveTeacher chunk_predictive_features(const std::vector<int>& tokens, LogitSource& src,
                                                   std::int64_t chunk_frames = 1500, int seg_len = 150,
                                                   int stride = 5) {
    PredictiveTeacher out;
    out.frame_rate = 50;
    out.seg_len = seg_len;
    out.stride = stride;
    out.vocab = src.vocab();
    out.context_mode = "chunk";

    const auto total = static_cast<std::int64_t>(tokens.size());
    for (std::int64_t c0 = 0; c0 < total; c0 += chunk_frames) {
        const std::int64_t len = std::min(chunk_frames, total - c0);
        auto [s, h] = chunk_frame_features(
            std::span<const int>(tokens.data() + c0, static_cast<std::size_t>(len)), src, c0);
        for (const SegmentSpan& span : enumerate_segments(len, seg_len, stride)) {
            PredictiveSegment seg;
            seg.start_frame = c0 + span.start;
            seg.surprisal.assign(s.begin() + span.start, s.begin() + span.end);
            seg.entropy.assign(h.begin() + span.start, h.begin() + span.end);
            out.segments.push_back(std::move(seg));
        }
    }
    return out;
}

inline std::pair<std::vector<double>, std::vector<double>> pooled_values(
    const std::vector<const PredictiveTeacher*>& teachers) {
    std::vector<double> s, h;
    for (const auto* t : teachers)
        for (const auto& seg : t->segments) {
            s.insert(s.end(), seg.surprisal.begin(), seg.surprisal.end());
            h.insert(h.end(), seg.entropy.begin(), seg.entropy.end());
        }
    return {std::move(s), std::move(h)};
}

inline void apply_bins(PredictiveTeacher& teacher, const QuantileBins& s_bins, const QuantileBins& h_bins) {
    for (auto& seg : teacher.segments) {
        seg.surprisal_disc.resize(seg.surprisal.size());
        seg.entropy_disc.resize(seg.entropy.size());
        for (std::size_t i = 0; i < seg.surprisal.size(); ++i)
            seg.surprisal_disc[i] = static_cast<std::uint8_t>(discretize_quantile(seg.surprisal[i], s_bins));
        for (std::size_t i = 0; i < seg.entropy.size(); ++i)
            seg.entropy_disc[i] = static_cast<std::uint8_t>(discretize_quantile(seg.entropy[i], h_bins));
    }
}

// Acoustic teacher: per-chunk grids of continuous embeddings plus their
// codebook tokens. Chunks are 750 frames (30 s at 25 Hz).
struct MuqTeacher {
    int dim = 0;
    int frame_rate = 25;
    std::int64_t chunk_frames = 750;
    std::vector<std::vector<double>> raw;         // per chunk: chunk_frames x dim
    std::vector<std::vector<std::uint8_t>> disc;  // per chunk: chunk_frames

    std::int64_t chunks() const { return static_cast<std::int64_t>(raw.size()); }
};

inline MuqTeacher discretize_muq(const std::vector<double>& song_frames, std::int64_t n_frames, int dim,
                                 const KMeansCodebook& cb, std::int64_t chunk_frames = 750) {
    if (cb.dim != dim) throw std::invalid_argument("discretize_muq: dimension mismatch");
    MuqTeacher out;
    out.dim = dim;
    out.chunk_frames = chunk_frames;
    const std::int64_t n_chunks = n_frames / chunk_frames;  // trailing partial chunk dropped
    for (std::int64_t c = 0; c < n_chunks; ++c) {
        const std::size_t off = static_cast<std::size_t>(c * chunk_frames) * dim;
        std::vector<double> chunk(song_frames.begin() + static_cast<std::ptrdiff_t>(off),
                                  song_frames.begin() + static_cast<std::ptrdiff_t>(off + static_cast<std::size_t>(chunk_frames) * dim));
        std::vector<int> tok = assign_tokens(cb, chunk, static_cast<int>(chunk_frames));
        std::vector<std::uint8_t> disc(tok.size());
        for (std::size_t i = 0; i < tok.size(); ++i) disc[i] = static_cast<std::uint8_t>(tok[i]);
        out.raw.push_back(std::move(chunk));
        out.disc.push_back(std::move(disc));
    }
    return out;
}

}  // namespace predann

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "predann/rng.hpp"
#include "predann/stats.hpp"
#include "predann/tensor.hpp"

namespace predann {

// ---------------------------------------------------------------------------
// domain types
// ---------------------------------------------------------------------------

struct Recording {
    int channels = 0;
    double sample_rate = 0.0;  // Hz
    int song_id = 0;
    int subject_id = 0;
    std::vector<float> samples;  // channel-major: channels x length

    std::int64_t length() const {
        if (channels <= 0) return 0;
        return static_cast<std::int64_t>(samples.size()) / channels;
    }

    const float* channel(int c) const { return samples.data() + static_cast<std::size_t>(c) * length(); }

    void validate() const {
        if (channels <= 0) throw std::invalid_argument("Recording: channels must be positive");
        if (sample_rate <= 0.0) throw std::invalid_argument("Recording: sample_rate must be positive");
        if (samples.size() % static_cast<std::size_t>(channels) != 0)
            throw std::invalid_argument("Recording: sample buffer not divisible by channel count");
    }
};

// A 30-s stimulus slot. Excerpts are identified by (song, index); all
// recordings of the same song share the slot, so the train/val split is a
// stimulus-level decision.
struct Excerpt {
    int song_id = 0;
    int excerpt_index = 0;
    double start_s = 0.0;
    double duration_s = 30.0;

    std::int64_t start_sample(double rate) const { return round_half_away(start_s * rate); }
};

struct ExcerptRef {
    int song_id = 0;
    int excerpt_index = 0;
    auto operator<=>(const ExcerptRef&) const = default;
};

struct SplitAssignment {
    std::set<ExcerptRef> train;
    std::set<ExcerptRef> val;
    std::uint64_t seed = 0;

    bool is_train(const ExcerptRef& r) const { return train.count(r) > 0; }
};

// Exact segment start time num/den seconds; keeps frame-index math free of
// binary-fraction dust (0.12 s as a double floors to the wrong 50 Hz frame).
struct TimePoint {
    std::int64_t num = 0;
    std::int64_t den = 1;

    double seconds() const { return static_cast<double>(num) / static_cast<double>(den); }

    // floor(rate * t) in exact integer arithmetic
    std::int64_t floor_frames(std::int64_t rate) const { return rate * num / den; }

    // nearest sample index, half away from zero
    std::int64_t round_samples(std::int64_t rate) const {
        const std::int64_t p = rate * num;
        return p >= 0 ? (2 * p + den) / (2 * den) : -((-2 * p + den) / (2 * den));
    }
};

template <class T>
struct EegSegment {
    Tensor<T> values;  // (channels, width), normalized
    TimePoint t0;      // within the excerpt, stimulus clock
    int song_id = 0;
    int subject_id = 0;
    int excerpt_index = 0;
    int window_index = 0;
    std::string sample_id;
};

inline std::string make_sample_id(int subject, int song, int excerpt, int window) {
    return std::to_string(subject) + "_" + std::to_string(song) + "_" + std::to_string(excerpt) + "_" +
           std::to_string(window);
}

struct SignalParams {
    double max_duration_s = 240.0;
    double excerpt_s = 30.0;
    double window_s = 8.0;
    double stride_s = 1.6;
    double segment_s = 3.0;
    double delay_ms = 200.0;
    double clamp = 20.0;
    double split_ratio = 0.75;
    std::uint64_t split_seed = 42;
};

// ---------------------------------------------------------------------------
// operations
// ---------------------------------------------------------------------------

inline Recording truncate_recording(const Recording& rec, double max_s) {
    if (max_s <= 0.0) throw std::invalid_argument("truncate_recording: max_s must be positive");
    rec.validate();
    const std::int64_t keep = std::min<std::int64_t>(rec.length(), round_half_away(max_s * rec.sample_rate));
    if (keep == rec.length()) return rec;
    Recording out;
    out.channels = rec.channels;
    out.sample_rate = rec.sample_rate;
    out.song_id = rec.song_id;
    out.subject_id = rec.subject_id;
    out.samples.resize(static_cast<std::size_t>(keep) * rec.channels);
    for (int c = 0; c < rec.channels; ++c)
        std::copy(rec.channel(c), rec.channel(c) + keep,
                  out.samples.begin() + static_cast<std::size_t>(c) * keep);
    return out;
}

inline std::vector<Excerpt> make_excerpts(const Recording& rec, double len_s = 30.0) {
    if (len_s <= 0.0) throw std::invalid_argument("make_excerpts: len_s must be positive");
    const std::int64_t len_samples = round_half_away(len_s * rec.sample_rate);
    const std::int64_t n = len_samples > 0 ? rec.length() / len_samples : 0;
    std::vector<Excerpt> out;
    for (std::int64_t i = 0; i < n; ++i)
        out.push_back({rec.song_id, static_cast<int>(i), static_cast<double>(i) * len_s, len_s});
    return out;
}

// Per-song allocation: n_val = round((1 - ratio) * n); membership drawn from
// a per-song substream of `seed` so the result is order-independent.
inline SplitAssignment stratified_split(const std::vector<ExcerptRef>& excerpts, double ratio,
                                        std::uint64_t seed) {
    if (excerpts.empty()) throw std::invalid_argument("stratified_split: no excerpts");
    std::map<int, std::vector<int>> by_song;
    int max_song = 0;
    for (const auto& e : excerpts) {
        by_song[e.song_id].push_back(e.excerpt_index);
        max_song = std::max(max_song, e.song_id);
    }
    for (int s = 0; s <= max_song; ++s)
        if (by_song.find(s) == by_song.end())
            throw std::invalid_argument("stratified_split: song " + std::to_string(s) + " has no excerpts");

    SplitAssignment out;
    out.seed = seed;
    for (auto& [song, idx] : by_song) {
        std::sort(idx.begin(), idx.end());
        const std::int64_t n_val = round_half_away((1.0 - ratio) * static_cast<double>(idx.size()));
        Rng rng = derive_rng(seed, "split/song/" + std::to_string(song));
        rng.shuffle(idx);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            const ExcerptRef ref{song, idx[i]};
            if (static_cast<std::int64_t>(i) < n_val)
                out.val.insert(ref);
            else
                out.train.insert(ref);
        }
    }
    return out;
}

inline std::int64_t delay_samples(double delay_ms, double sample_rate) {
    return round_half_away(delay_ms * sample_rate / 1000.0);
}

struct WindowSpec {
    int index = 0;
    std::int64_t start_sample = 0;  // within the excerpt
    double start_s = 0.0;
};

inline std::vector<WindowSpec> make_windows(double excerpt_s, double window_s, double stride_s, double rate) {
    const std::int64_t total = round_half_away(excerpt_s * rate);
    const std::int64_t win = round_half_away(window_s * rate);
    const std::int64_t stride = round_half_away(stride_s * rate);
    std::vector<WindowSpec> out;
    if (total < win || stride <= 0) return out;
    for (std::int64_t s = 0; s + win <= total; s += stride)
        out.push_back({static_cast<int>(out.size()), s, static_cast<double>(s) / rate});
    return out;
}

// The 200 ms shift pushes the EEG read past the stimulus window; a window is
// kept only when the delayed read stays inside the recording.
inline bool window_fully_covered(const Recording& rec, const Excerpt& ex, const WindowSpec& win,
                                 const SignalParams& p) {
    const std::int64_t delay = delay_samples(p.delay_ms, rec.sample_rate);
    const std::int64_t win_len = round_half_away(p.window_s * rec.sample_rate);
    const std::int64_t end = ex.start_sample(rec.sample_rate) + win.start_sample + win_len + delay;
    return end <= rec.length();
}

enum class ExtractMode { train, eval };

// Raw (unnormalized) 3-s slice. The returned t0 is on the stimulus clock,
// relative to the excerpt; the EEG read itself is shifted by the delay.
template <class T>
EegSegment<T> extract_segment_raw(const Recording& rec, const Excerpt& ex, const WindowSpec& win,
                                  ExtractMode mode, Rng& rng, const SignalParams& p) {
    const double rate = rec.sample_rate;
    const std::int64_t irate = round_half_away(rate);
    const std::int64_t seg_len = round_half_away(p.segment_s * rate);
    const std::int64_t win_len = round_half_away(p.window_s * rate);
    const std::int64_t max_off = win_len - seg_len;
    if (max_off < 0) throw std::invalid_argument("extract_segment: window shorter than segment");

    // t0 in half-samples: the eval-mode center may fall between samples
    std::int64_t t0_half;
    if (mode == ExtractMode::eval) {
        t0_half = 2 * win.start_sample + max_off;
    } else {
        const std::int64_t off = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(max_off + 1)));
        t0_half = 2 * (win.start_sample + off);
    }
    TimePoint t0{t0_half, 2 * irate};

    const std::int64_t delay = delay_samples(p.delay_ms, rate);
    const std::int64_t start = ex.start_sample(rate) + t0.round_samples(irate) + delay;
    if (start < 0 || start + seg_len > rec.length())
        throw std::out_of_range("extract_segment: delayed slice exceeds recording");

    EegSegment<T> seg;
    seg.values = Tensor<T>({rec.channels, static_cast<int>(seg_len)});
    for (int c = 0; c < rec.channels; ++c) {
        const float* src = rec.channel(c) + start;
        T* dst = seg.values.row(c);
        for (std::int64_t i = 0; i < seg_len; ++i) dst[i] = static_cast<T>(src[i]);
    }
    seg.t0 = t0;
    seg.song_id = rec.song_id;
    seg.subject_id = rec.subject_id;
    seg.excerpt_index = ex.excerpt_index;
    seg.window_index = win.index;
    seg.sample_id = make_sample_id(rec.subject_id, rec.song_id, ex.excerpt_index, win.index);
    return seg;
}

// (x - median) / IQR per channel, no clamping. IQR of a flat channel is
// treated as 1 so the output is defined everywhere.
template <class T>
void robust_scale_rows(Tensor<T>& values) {
    const int channels = values.dim(0);
    const int width = values.dim(1);
    if (width < 2) throw std::invalid_argument("robust_scale: need at least 2 samples per channel");
    std::vector<T> sorted(static_cast<std::size_t>(width));
    for (int c = 0; c < channels; ++c) {
        T* row = values.row(c);
        std::copy(row, row + width, sorted.begin());
        std::sort(sorted.begin(), sorted.end());
        const double med = quantile_sorted(sorted, 0.5);
        const double q1 = quantile_sorted(sorted, 0.25);
        const double q3 = quantile_sorted(sorted, 0.75);
        double iqr = q3 - q1;
        if (iqr == 0.0) iqr = 1.0;
        for (int i = 0; i < width; ++i)
            row[i] = static_cast<T>((static_cast<double>(row[i]) - med) / iqr);
    }
}

template <class T>
void clamp_values(Tensor<T>& values, double bound) {
    const T lo = static_cast<T>(-bound), hi = static_cast<T>(bound);
    for (auto& v : values.data) v = std::clamp(v, lo, hi);
}

template <class T>
void normalize_segment(EegSegment<T>& seg, double clamp_bound = 20.0) {
    robust_scale_rows(seg.values);
    clamp_values(seg.values, clamp_bound);
}

template <class T>
EegSegment<T> extract_segment(const Recording& rec, const Excerpt& ex, const WindowSpec& win,
                              ExtractMode mode, Rng& rng, const SignalParams& p) {
    EegSegment<T> seg = extract_segment_raw<T>(rec, ex, win, mode, rng, p);
    normalize_segment(seg, p.clamp);
    return seg;
}

}  // namespace predann

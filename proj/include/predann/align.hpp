#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "predann/signal.hpp"
#include "predann/teacher.hpp"
#include "predann/tensor.hpp"

namespace predann {

struct FrameSlice {
    std::int64_t begin = 0;
    std::int64_t end = 0;  // half-open

    std::int64_t length() const { return end - begin; }
};

namespace detail {

// When float dust pushes the slice past the chunk by no more than one
// store stride, snap down to the last representable start instead of
// rejecting the segment.
inline FrameSlice clip_slice(std::int64_t i0, std::int64_t len, std::int64_t chunk_frames,
                             std::int64_t snap_margin) {
    if (i0 < 0) throw std::out_of_range("alignment: negative frame index");
    if (i0 + len > chunk_frames) {
        if (i0 + len - chunk_frames <= snap_margin && chunk_frames >= len)
            i0 = chunk_frames - len;
        else
            throw std::out_of_range("alignment: slice exceeds chunk");
    }
    return {i0, i0 + len};
}

}  // namespace detail

// i0 = floor(50 t0); frames [i0, i0 + 150) at 50 Hz
inline FrameSlice surp_ent_slice(double t0_s, std::int64_t chunk_frames = 1500) {
    return detail::clip_slice(static_cast<std::int64_t>(std::floor(50.0 * t0_s)), 150, chunk_frames, 5);
}

inline FrameSlice surp_ent_slice(TimePoint t0, std::int64_t chunk_frames = 1500) {
    return detail::clip_slice(t0.floor_frames(50), 150, chunk_frames, 5);
}

// j0 = floor(25 t0); frames [j0, j0 + 75) at 25 Hz
inline FrameSlice muq_slice(double t0_s, std::int64_t chunk_frames = 750) {
    return detail::clip_slice(static_cast<std::int64_t>(std::floor(25.0 * t0_s)), 75, chunk_frames, 3);
}

inline FrameSlice muq_slice(TimePoint t0, std::int64_t chunk_frames = 750) {
    return detail::clip_slice(t0.floor_frames(25), 75, chunk_frames, 3);
}

// Nearest stored segment whose 3 s lie fully inside the same 30-s chunk;
// ties resolve to the earlier start. t0 and the chunk index are on the
// song-absolute clock.
inline const PredictiveSegment* select_predictive_segment(double t0_abs_s, const PredictiveTeacher& teacher,
                                                          std::int64_t chunk_index,
                                                          double chunk_s = 30.0) {
    const double chunk_begin = chunk_s * static_cast<double>(chunk_index);
    const double chunk_end = chunk_begin + chunk_s;
    const double seg_s = static_cast<double>(teacher.seg_len) / teacher.frame_rate;
    const PredictiveSegment* best = nullptr;
    double best_d = std::numeric_limits<double>::infinity();
    for (const auto& seg : teacher.segments) {
        const double start = seg.start_s(teacher.frame_rate);
        if (start < chunk_begin - 1e-12 || start + seg_s > chunk_end + 1e-12) continue;
        const double d = std::fabs(start - t0_abs_s);
        if (d < best_d) {  // strict: equal distance keeps the earlier start
            best_d = d;
            best = &seg;
        }
    }
    if (!best) throw std::out_of_range("select_predictive_segment: no candidate within chunk");
    return best;
}

// Exact-rational variant used by the pipeline: distances are compared as
// integers so equidistant pairs tie-break deterministically.
inline const PredictiveSegment* select_predictive_segment(TimePoint t0_rel, const PredictiveTeacher& teacher,
                                                          std::int64_t chunk_index,
                                                          std::int64_t chunk_frames = 1500) {
    const std::int64_t c0 = chunk_index * chunk_frames;
    const std::int64_t c1 = c0 + chunk_frames;
    // |seg.start/rate - (c0/rate + num/den)| scaled by rate * den
    const std::int64_t target = c0 * t0_rel.den + t0_rel.num * teacher.frame_rate;
    const PredictiveSegment* best = nullptr;
    std::int64_t best_d = std::numeric_limits<std::int64_t>::max();
    for (const auto& seg : teacher.segments) {
        if (seg.start_frame < c0 || seg.start_frame + teacher.seg_len > c1) continue;
        const std::int64_t d = std::llabs(seg.start_frame * t0_rel.den - target);
        if (d < best_d) {
            best_d = d;
            best = &seg;
        }
    }
    if (!best) throw std::out_of_range("select_predictive_segment: no candidate within chunk");
    return best;
}

// ---------------------------------------------------------------------------
// aligned teacher sequences
// ---------------------------------------------------------------------------

// Raw (continuous) values plus discrete tokens for one 3-s slice, in
// one-to-one frame correspondence.
template <class T>
struct AlignedTeacher {
    TeacherKind kind = TeacherKind::muq;
    Tensor<T> raw;          // (frames, dim): dim = 1 for surprisal/entropy
    std::vector<int> disc;  // tokens 0..127
};

template <class T>
AlignedTeacher<T> align_muq(const MuqTeacher& teacher, std::int64_t chunk_index, TimePoint t0_rel) {
    if (chunk_index < 0 || chunk_index >= teacher.chunks())
        throw std::out_of_range("align_muq: chunk index out of range");
    const FrameSlice slice = muq_slice(t0_rel, teacher.chunk_frames);
    AlignedTeacher<T> out;
    out.kind = TeacherKind::muq;
    out.raw = Tensor<T>({static_cast<int>(slice.length()), teacher.dim});
    const auto& raw = teacher.raw[static_cast<std::size_t>(chunk_index)];
    const auto& disc = teacher.disc[static_cast<std::size_t>(chunk_index)];
    for (std::int64_t f = slice.begin; f < slice.end; ++f) {
        const double* src = raw.data() + static_cast<std::size_t>(f) * teacher.dim;
        T* dst = out.raw.row(static_cast<int>(f - slice.begin));
        for (int j = 0; j < teacher.dim; ++j) dst[j] = static_cast<T>(src[j]);
        out.disc.push_back(disc[static_cast<std::size_t>(f)]);
    }
    return out;
}

template <class T>
AlignedTeacher<T> align_predictive(const PredictiveTeacher& teacher, TeacherKind kind,
                                   std::int64_t chunk_index, TimePoint t0_rel,
                                   std::int64_t chunk_frames = 1500) {
    if (kind != TeacherKind::surprisal && kind != TeacherKind::entropy)
        throw std::invalid_argument("align_predictive: wrong teacher kind");
    const PredictiveSegment* seg = select_predictive_segment(t0_rel, teacher, chunk_index, chunk_frames);
    const auto& raw = kind == TeacherKind::surprisal ? seg->surprisal : seg->entropy;
    const auto& disc = kind == TeacherKind::surprisal ? seg->surprisal_disc : seg->entropy_disc;
    if (disc.size() != raw.size()) throw std::logic_error("align_predictive: teacher not discretized");
    AlignedTeacher<T> out;
    out.kind = kind;
    out.raw = Tensor<T>({static_cast<int>(raw.size()), 1});
    for (std::size_t i = 0; i < raw.size(); ++i) {
        out.raw.data[i] = static_cast<T>(raw[i]);
        out.disc.push_back(disc[i]);
    }
    return out;
}

}  // namespace predann

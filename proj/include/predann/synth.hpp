#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "predann/config.hpp"
#include "predann/rng.hpp"
#include "predann/signal.hpp"
#include "predann/teacher.hpp"

namespace predann {

// Stimulus-side synthetic material for one song: an order-1 token chain
// (the autoregressive-model stand-in), its transition matrix, and a smooth
// song-specific embedding trajectory at 25 Hz.
struct SongStimulus {
    int song_id = 0;
    int vocab = 0;
    std::vector<double> transition;  // vocab x vocab, row-stochastic
    std::vector<int> tokens;         // duration * 50 frames
    std::vector<double> embeddings;  // (duration * 25) x embedding_dim
    std::vector<double> surprisal_true, entropy_true;  // per 50 Hz frame
};

struct SyntheticDataset {
    std::vector<SongStimulus> songs;
    std::vector<Recording> recordings;  // one per (subject, song)
};

namespace synth_detail {

// Peaked rows with per-row temperature so surprisal and entropy vary with
// the current token.
inline std::vector<double> song_transition(int vocab, Rng& rng) {
    std::vector<double> p(static_cast<std::size_t>(vocab) * vocab);
    for (int i = 0; i < vocab; ++i) {
        const double tau = rng.uniform(0.35, 1.1);
        double max = -1e30;
        std::vector<double> g(static_cast<std::size_t>(vocab));
        for (int j = 0; j < vocab; ++j) {
            g[static_cast<std::size_t>(j)] = rng.normal() / tau;
            max = std::max(max, g[static_cast<std::size_t>(j)]);
        }
        double sum = 0.0;
        for (int j = 0; j < vocab; ++j) {
            g[static_cast<std::size_t>(j)] = std::exp(g[static_cast<std::size_t>(j)] - max);
            sum += g[static_cast<std::size_t>(j)];
        }
        for (int j = 0; j < vocab; ++j) p[static_cast<std::size_t>(i) * vocab + j] = g[static_cast<std::size_t>(j)] / sum;
    }
    return p;
}

inline std::vector<int> sample_chain(const std::vector<double>& p, int vocab, const std::vector<double>& pi,
                                     std::int64_t frames, Rng& rng) {
    std::vector<int> tokens;
    tokens.reserve(static_cast<std::size_t>(frames));
    auto draw = [&](const double* row) {
        double r = rng.uniform();
        for (int j = 0; j < vocab; ++j) {
            r -= row[j];
            if (r <= 0.0) return j;
        }
        return vocab - 1;
    };
    int cur = draw(pi.data());
    tokens.push_back(cur);
    for (std::int64_t t = 1; t < frames; ++t) {
        cur = draw(p.data() + static_cast<std::size_t>(cur) * vocab);
        tokens.push_back(cur);
    }
    return tokens;
}

inline void zscore(std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= static_cast<double>(v.size());
    const double scale = var > 0.0 ? 1.0 / std::sqrt(var) : 1.0;
    for (double& x : v) x = (x - mean) * scale;
}

}  // namespace synth_detail

inline SongStimulus generate_song_stimulus(const SyntheticSpec& spec, int song_id, std::uint64_t root_seed) {
    SongStimulus s;
    s.song_id = song_id;
    s.vocab = spec.vocab;
    Rng rng = derive_rng(root_seed, "synth/stimulus/" + std::to_string(song_id));
    s.transition = synth_detail::song_transition(spec.vocab, rng);
    MarkovLogitSource src(s.transition, spec.vocab);

    const auto frames50 = static_cast<std::int64_t>(round_half_away(spec.duration_s * 50.0));
    s.tokens = synth_detail::sample_chain(s.transition, spec.vocab, src.stationary(), frames50, rng);

    // ground-truth per-frame surprisal/entropy of the chain itself
    s.surprisal_true.resize(static_cast<std::size_t>(frames50));
    s.entropy_true.resize(static_cast<std::size_t>(frames50));
    for (std::int64_t t = 0; t < frames50; ++t) {
        const double* row = t == 0 ? src.stationary().data()
                                   : s.transition.data() + static_cast<std::size_t>(s.tokens[static_cast<std::size_t>(t - 1)]) * spec.vocab;
        s.surprisal_true[static_cast<std::size_t>(t)] = -std::log(row[s.tokens[static_cast<std::size_t>(t)]]);
        double h = 0.0;
        for (int v = 0; v < spec.vocab; ++v)
            if (row[v] > 0.0) h -= row[v] * std::log(row[v]);
        s.entropy_true[static_cast<std::size_t>(t)] = h;
    }

    // smooth embedding trajectory: song-specific offset plus slow sinusoids
    const auto frames25 = static_cast<std::int64_t>(round_half_away(spec.duration_s * 25.0));
    s.embeddings.resize(static_cast<std::size_t>(frames25) * spec.embedding_dim);
    for (int d = 0; d < spec.embedding_dim; ++d) {
        const double offset = rng.normal() * 1.5;
        const double f1 = rng.uniform(0.03, 0.4), f2 = rng.uniform(0.4, 1.5);
        const double a1 = rng.uniform(0.4, 1.0), a2 = rng.uniform(0.1, 0.5);
        const double p1 = rng.uniform(0.0, 2.0 * std::numbers::pi), p2 = rng.uniform(0.0, 2.0 * std::numbers::pi);
        for (std::int64_t t = 0; t < frames25; ++t) {
            const double ts = static_cast<double>(t) / 25.0;
            s.embeddings[static_cast<std::size_t>(t) * spec.embedding_dim + d] =
                offset + a1 * std::sin(2.0 * std::numbers::pi * f1 * ts + p1) +
                a2 * std::sin(2.0 * std::numbers::pi * f2 * ts + p2) + 0.05 * rng.normal();
        }
    }
    return s;
}

// Synthetic EEG: a (1 - coupling) subject-specific mixture of song latents,
// a coupling-weighted song-specific drive built from the teacher features
// (shifted so the EEG lags the stimulus by the cortical delay), and white
// noise. At coupling 1 with zero noise, recordings of a song are identical
// across subjects.
inline Recording generate_recording(const SyntheticSpec& spec, const SongStimulus& song, int subject_id,
                                    std::uint64_t root_seed, double delay_ms = 200.0) {
    Recording rec;
    rec.channels = spec.channels;
    rec.sample_rate = spec.sample_rate;
    rec.song_id = song.song_id;
    rec.subject_id = subject_id;
    const auto len = static_cast<std::int64_t>(round_half_away(spec.duration_s * spec.sample_rate));
    rec.samples.assign(static_cast<std::size_t>(len) * spec.channels, 0.0f);

    // song-wide features on the 50/25 Hz grids, z-scored
    std::vector<double> surp = song.surprisal_true, ent = song.entropy_true;
    synth_detail::zscore(surp);
    synth_detail::zscore(ent);
    const int emb_feats = std::min(6, spec.embedding_dim);
    std::vector<std::vector<double>> emb(static_cast<std::size_t>(emb_feats));
    const auto frames25 = static_cast<std::int64_t>(song.embeddings.size()) / spec.embedding_dim;
    for (int d = 0; d < emb_feats; ++d) {
        emb[static_cast<std::size_t>(d)].resize(static_cast<std::size_t>(frames25));
        for (std::int64_t t = 0; t < frames25; ++t)
            emb[static_cast<std::size_t>(d)][static_cast<std::size_t>(t)] =
                song.embeddings[static_cast<std::size_t>(t) * spec.embedding_dim + d];
        synth_detail::zscore(emb[static_cast<std::size_t>(d)]);
    }

    // song-specific latent oscillations and mixing
    Rng song_rng = derive_rng(root_seed, "synth/drive/" + std::to_string(song.song_id));
    std::vector<double> lat_freq(static_cast<std::size_t>(spec.latents)), lat_phase(static_cast<std::size_t>(spec.latents));
    for (int k = 0; k < spec.latents; ++k) {
        lat_freq[static_cast<std::size_t>(k)] = song_rng.uniform(1.0, 8.0);
        lat_phase[static_cast<std::size_t>(k)] = song_rng.uniform(0.0, 2.0 * std::numbers::pi);
    }
    const int n_feats = 2 + emb_feats + spec.latents;
    std::vector<double> drive_mix(static_cast<std::size_t>(spec.channels) * n_feats);
    for (auto& v : drive_mix) v = song_rng.normal() / std::sqrt(static_cast<double>(n_feats));

    Rng subj_rng = derive_rng(root_seed, "synth/eeg/" + std::to_string(subject_id) + "/" +
                                             std::to_string(song.song_id));
    std::vector<double> idio_mix(static_cast<std::size_t>(spec.channels) * spec.latents);
    for (auto& v : idio_mix) v = subj_rng.normal() / std::sqrt(static_cast<double>(spec.latents));

    const double delay_s = delay_ms / 1000.0;
    const auto frames50 = static_cast<std::int64_t>(surp.size());
    std::vector<double> feats(static_cast<std::size_t>(n_feats));
    for (std::int64_t n = 0; n < len; ++n) {
        const double stim_t = std::max(0.0, static_cast<double>(n) / spec.sample_rate - delay_s);
        const auto i50 = std::min<std::int64_t>(static_cast<std::int64_t>(stim_t * 50.0), frames50 - 1);
        const auto i25 = std::min<std::int64_t>(static_cast<std::int64_t>(stim_t * 25.0), frames25 - 1);
        feats[0] = surp[static_cast<std::size_t>(i50)];
        feats[1] = ent[static_cast<std::size_t>(i50)];
        for (int d = 0; d < emb_feats; ++d)
            feats[static_cast<std::size_t>(2 + d)] = emb[static_cast<std::size_t>(d)][static_cast<std::size_t>(i25)];
        for (int k = 0; k < spec.latents; ++k)
            feats[static_cast<std::size_t>(2 + emb_feats + k)] =
                std::sin(2.0 * std::numbers::pi * lat_freq[static_cast<std::size_t>(k)] * stim_t +
                         lat_phase[static_cast<std::size_t>(k)]);

        for (int ch = 0; ch < spec.channels; ++ch) {
            double drive = 0.0;
            for (int fidx = 0; fidx < n_feats; ++fidx)
                drive += drive_mix[static_cast<std::size_t>(ch) * n_feats + fidx] * feats[static_cast<std::size_t>(fidx)];
            double idio = 0.0;
            for (int k = 0; k < spec.latents; ++k)
                idio += idio_mix[static_cast<std::size_t>(ch) * spec.latents + k] *
                        feats[static_cast<std::size_t>(2 + emb_feats + k)];
            const double value = (1.0 - spec.coupling) * idio + spec.coupling * drive +
                                 spec.noise * subj_rng.normal();
            rec.samples[static_cast<std::size_t>(ch) * len + n] = static_cast<float>(value);
        }
    }
    return rec;
}

inline SyntheticDataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t root_seed,
                                           double delay_ms = 200.0) {
    spec.validate();
    SyntheticDataset out;
    for (int s = 0; s < spec.songs; ++s) out.songs.push_back(generate_song_stimulus(spec, s, root_seed));
    for (int u = 0; u < spec.subjects; ++u)
        for (int s = 0; s < spec.songs; ++s)
            out.recordings.push_back(generate_recording(spec, out.songs[static_cast<std::size_t>(s)], u,
                                                        root_seed, delay_ms));
    return out;
}

}  // namespace predann

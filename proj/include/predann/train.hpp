#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "predann/align.hpp"
#include "predann/config.hpp"
#include "predann/eval.hpp"
#include "predann/model.hpp"
#include "predann/signal.hpp"
#include "predann/teacher.hpp"

namespace predann {

struct TrainPlan {
    enum class Stage { pretrain, finetune, fullscratch };
    Stage stage = Stage::pretrain;
    int epochs = 1;
    int batch_size = 48;
    double lr = 0.003;
    std::uint64_t seed = 42;
    TeacherKind teacher = TeacherKind::surprisal;  // pretraining only

    std::string stage_name() const {
        switch (stage) {
            case Stage::pretrain: return "pretrain";
            case Stage::finetune: return "finetune";
            case Stage::fullscratch: return "fullscratch";
        }
        return "?";
    }
};

struct EpochLog {
    int epoch = 0;
    double loss = 0.0;
    double loss_classify = 0.0;
    double loss_masked = 0.0;
    double wall_ms = 0.0;
    int skipped_batches = 0;
};

// In-memory view of everything a training stage needs: truncated
// recordings, the stimulus-level split, window lists, and per-song teacher
// stores.
struct DataView {
    std::vector<Recording> recordings;
    SignalParams signal;
    SplitAssignment split;
    std::vector<MuqTeacher> muq;                // indexed by song id (may be empty)
    std::vector<PredictiveTeacher> predictive;  // indexed by song id (may be empty)

    struct Item {
        int rec_index = 0;
        Excerpt excerpt;
        WindowSpec window;
    };
    std::vector<Item> train_items, val_items;

    std::int64_t chunk_frames50() const { return round_half_away(signal.excerpt_s * 50.0); }

    void build_items() {
        train_items.clear();
        val_items.clear();
        for (std::size_t r = 0; r < recordings.size(); ++r) {
            const Recording& rec = recordings[r];
            for (const Excerpt& ex : make_excerpts(rec, signal.excerpt_s)) {
                const bool in_train = split.is_train({ex.song_id, ex.excerpt_index});
                for (const WindowSpec& win :
                     make_windows(signal.excerpt_s, signal.window_s, signal.stride_s, rec.sample_rate)) {
                    if (!window_fully_covered(rec, ex, win, signal)) continue;
                    Item item{static_cast<int>(r), ex, win};
                    (in_train ? train_items : val_items).push_back(item);
                }
            }
        }
    }
};

struct Batch {
    Tensor<float> x;  // (batch, channels, seconds*rate)
    std::vector<int> labels;
    std::vector<std::string> sample_ids;
    Tensor<float> teacher_raw;  // (batch, teacher_len, teacher_dim)
    std::vector<std::vector<int>> teacher_targets;
    std::vector<MaskSet> masks;
};

inline Batch make_batch(const DataView& data, const std::vector<std::size_t>& item_indices,
                        const std::vector<DataView::Item>& items, ExtractMode mode, Rng& offset_rng,
                        const ModelConfig* teacher_cfg, Rng* mask_rng) {
    Batch batch;
    const int n = static_cast<int>(item_indices.size());
    if (n == 0) throw std::invalid_argument("make_batch: empty batch");
    const Recording& first = data.recordings[static_cast<std::size_t>(items[item_indices[0]].rec_index)];
    const int width = static_cast<int>(round_half_away(data.signal.segment_s * first.sample_rate));
    batch.x = Tensor<float>({n, first.channels, width});
    if (teacher_cfg)
        batch.teacher_raw = Tensor<float>({n, teacher_cfg->teacher_len, teacher_cfg->teacher_dim});

    for (int b = 0; b < n; ++b) {
        const auto& item = items[item_indices[static_cast<std::size_t>(b)]];
        const Recording& rec = data.recordings[static_cast<std::size_t>(item.rec_index)];
        EegSegment<float> seg = extract_segment<float>(rec, item.excerpt, item.window, mode, offset_rng,
                                                       data.signal);
        std::copy(seg.values.data.begin(), seg.values.data.end(),
                  batch.x.data.begin() + static_cast<std::size_t>(b) * seg.values.size());
        batch.labels.push_back(seg.song_id);
        batch.sample_ids.push_back(seg.sample_id);

        if (teacher_cfg) {
            const int song = seg.song_id;
            AlignedTeacher<float> aligned;
            if (teacher_cfg->teacher == TeacherKind::muq) {
                aligned = align_muq<float>(data.muq.at(static_cast<std::size_t>(song)), seg.excerpt_index,
                                           seg.t0);
            } else {
                aligned = align_predictive<float>(data.predictive.at(static_cast<std::size_t>(song)),
                                                  teacher_cfg->teacher, seg.excerpt_index, seg.t0,
                                                  data.chunk_frames50());
            }
            if (static_cast<int>(aligned.disc.size()) != teacher_cfg->teacher_len)
                throw DataError("teacher slice length mismatch for " + seg.sample_id);
            std::copy(aligned.raw.data.begin(), aligned.raw.data.end(),
                      batch.teacher_raw.data.begin() + static_cast<std::size_t>(b) * aligned.raw.size());
            batch.teacher_targets.push_back(aligned.disc);
            batch.masks.push_back(sample_mask(teacher_cfg->teacher_len, teacher_cfg->mask_ratio, *mask_rng));
        }
    }
    return batch;
}

// One full pass over the training windows per epoch, with fresh random 3-s
// offsets and fresh masks every batch. Deterministic: every random draw
// comes from substreams of (plan.seed, epoch).
class TrainLoop {
public:
    TrainLoop(PredannModel<float>& model, const DataView& data, const TrainPlan& plan)
        : model_(model), data_(data), plan_(plan) {
        model_.collect(params_);
        opt_.lr = static_cast<float>(plan.lr);
        opt_.init(params_);
    }

    const ParamList<float>& params() const { return params_; }
    Adam<float>& optimizer() { return opt_; }

    EpochLog epoch(int index, bool update = true) {
        const auto t_start = std::chrono::steady_clock::now();
        model_.set_training(true);
        const std::string tag = std::to_string(plan_.seed) + "/" + std::to_string(index);
        Rng order_rng = derive_rng(plan_.seed, "train/order/" + std::to_string(index));
        Rng offset_rng = derive_rng(plan_.seed, "train/offsets/" + std::to_string(index));
        Rng mask_rng = derive_rng(plan_.seed, "train/mask/" + std::to_string(index));
        Rng drop_rng = derive_rng(plan_.seed, "train/dropout/" + std::to_string(index));

        std::vector<std::size_t> order(data_.train_items.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        order_rng.shuffle(order);

        const bool pretrain = plan_.stage == TrainPlan::Stage::pretrain;
        const ModelConfig* tc = pretrain ? &model_.cfg : nullptr;

        EpochLog log;
        log.epoch = index;
        std::int64_t samples = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(plan_.batch_size)) {
            const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(plan_.batch_size));
            std::vector<std::size_t> batch_idx(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                               order.begin() + static_cast<std::ptrdiff_t>(end));
            if (batch_idx.size() < 2) {
                // the classification head's batch norm needs two samples
                std::cerr << "[train] skipping batch of 1 at epoch " << index << "\n";
                ++log.skipped_batches;
                continue;
            }
            Batch batch = make_batch(data_, batch_idx, data_.train_items, ExtractMode::train, offset_rng, tc,
                                     &mask_rng);
            if (update) zero_grads(params_);

            double total = 0.0, lc = 0.0, lm = 0.0;
            if (pretrain) {
                auto out = model_.forward_pretrain(batch.x, batch.teacher_raw, batch.masks, drop_rng);
                if (!out.class_logits.all_finite() || !out.teacher_logits.all_finite())
                    throw NumericError("non-finite logits in " + plan_.stage_name() + " seed/epoch " + tag);
                auto [loss, grads] = pretrain_loss(out, batch.labels, batch.teacher_targets, batch.masks,
                                                   model_.cfg.w_classify, model_.cfg.w_masked);
                total = loss.total;
                lc = loss.classify;
                lm = loss.masked;
                if (update) model_.backward_pretrain(grads.first, grads.second);
            } else {
                Tensor<float> logits = model_.forward_classify(batch.x, drop_rng);
                if (!logits.all_finite())
                    throw NumericError("non-finite logits in " + plan_.stage_name() + " seed/epoch " + tag);
                CrossEntropy<float> ce;
                total = lc = ce.forward(logits, batch.labels);
                if (update) model_.backward_classify(ce.backward(1.0f));
            }
            if (!std::isfinite(total))
                throw NumericError("non-finite loss in " + plan_.stage_name() + " seed/epoch " + tag);
            if (update) opt_.step(params_);

            const auto bs = static_cast<double>(batch_idx.size());
            log.loss += total * bs;
            log.loss_classify += lc * bs;
            log.loss_masked += lm * bs;
            samples += static_cast<std::int64_t>(batch_idx.size());
        }
        if (samples > 0) {
            log.loss /= static_cast<double>(samples);
            log.loss_classify /= static_cast<double>(samples);
            log.loss_masked /= static_cast<double>(samples);
        }
        log.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_start).count();
        return log;
    }

    std::vector<EpochLog> run(const std::function<void(const EpochLog&)>& on_epoch = {}) {
        std::vector<EpochLog> logs;
        for (int e = 0; e < plan_.epochs; ++e) {
            logs.push_back(epoch(e));
            if (on_epoch) on_epoch(logs.back());
        }
        return logs;
    }

private:
    PredannModel<float>& model_;
    const DataView& data_;
    TrainPlan plan_;
    Adam<float> opt_;
    ParamList<float> params_;
};

// Deterministic validation inference: center-extracted segments, eval-mode
// normalization layers, per-sample logits keyed by stable sample ids.
inline PredictionCache evaluate_model(PredannModel<float>& model, const DataView& data, std::string tag,
                                      std::string config_hash) {
    const bool was_training = model.is_training();
    model.set_training(false);
    PredictionCache cache;
    cache.model_tag = std::move(tag);
    cache.config_hash = std::move(config_hash);

    Rng unused(0);
    const std::size_t batch_size = 64;
    for (std::size_t begin = 0; begin < data.val_items.size(); begin += batch_size) {
        const std::size_t end = std::min(data.val_items.size(), begin + batch_size);
        std::vector<std::size_t> idx;
        for (std::size_t i = begin; i < end; ++i) idx.push_back(i);
        Batch batch = make_batch(data, idx, data.val_items, ExtractMode::eval, unused, nullptr, nullptr);
        Tensor<float> logits = model.forward_classify(batch.x, unused);
        for (std::size_t b = 0; b < idx.size(); ++b) {
            PredictionEntry e;
            e.label = batch.labels[b];
            const float* row = logits.row(static_cast<int>(b));
            e.logits.assign(row, row + model.cfg.classes);
            if (!cache.entries.emplace(batch.sample_ids[b], std::move(e)).second)
                throw DataError("duplicate sample id in validation set: " + batch.sample_ids[b]);
        }
    }
    model.set_training(was_training);
    return cache;
}

}  // namespace predann

#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "predann/attention.hpp"
#include "predann/nn.hpp"
#include "predann/teacher.hpp"

namespace predann {

struct ModelConfig {
    int channels = 128;
    int seconds = 3;
    int rate = 125;
    int patch_dim = 128;
    int embed_dim = 512;
    int encoder_layers = 2;
    int decoder_layers = 2;
    int heads = 8;
    double mlp_ratio = 4.0;
    int classes = 10;
    int vocab = 128;  // discrete teacher levels
    double mask_ratio = 0.5;
    double w_classify = 1.0;
    double w_masked = 0.1;
    double dropout = 0.1;
    int norm_groups = 4;

    TeacherKind teacher = TeacherKind::surprisal;
    int teacher_len = 150;  // N_M: 150 for surprisal/entropy, 75 for muq
    int teacher_dim = 1;    // raw feature width: 1 (scalar) or the embedding dim

    int tokens() const { return channels * seconds; }
    int sequence_len() const { return 1 + tokens(); }
    int head_hidden() const { return embed_dim / 2; }
    int mlp_hidden() const { return static_cast<int>(embed_dim * mlp_ratio); }

    void validate() const {
        if (embed_dim % heads != 0) throw std::invalid_argument("ModelConfig: embed_dim % heads != 0");
        if (patch_dim % 4 != 0) throw std::invalid_argument("ModelConfig: patch_dim must be divisible by 4");
        if (channels <= 0 || seconds <= 0 || rate <= 0) throw std::invalid_argument("ModelConfig: bad input geometry");
        if (mask_ratio < 0.0 || mask_ratio > 1.0) throw std::invalid_argument("ModelConfig: mask_ratio out of range");
    }
};

struct MaskSet {
    std::vector<int> indices;  // unique, ascending
    double ratio = 0.0;
};

// Uniform sample without replacement, |M| = round(ratio * n).
inline MaskSet sample_mask(int n, double ratio, Rng& rng) {
    MaskSet out;
    out.ratio = ratio;
    const auto k = static_cast<std::size_t>(round_half_away(ratio * n));
    auto idx = rng.sample_without_replacement(static_cast<std::size_t>(n), k);
    out.indices.assign(idx.begin(), idx.end());
    std::sort(out.indices.begin(), out.indices.end());
    return out;
}

template <class T>
struct ForwardOutputs {
    Tensor<T> class_logits;    // (batch, classes)
    Tensor<T> teacher_logits;  // (batch, teacher_len, vocab); empty without decoder
    Tensor<T> h_cls;           // (batch, embed_dim)
};

// The PredANN++ network: temporal patch embedding over (channel, second)
// patches, channel/second/CLS embeddings, pre-norm Transformer encoder,
// Song-ID head, and a masked teacher-prediction decoder over the
// concatenation of encoder tokens and teacher tokens.
template <class T>
class PredannModel {
public:
    ModelConfig cfg;

    // temporal patch encoder: three conv blocks, GroupNorm + GELU, then a
    // global average over the remaining time axis and a linear projection
    Conv1d<T> conv1, conv2, conv3;
    GroupNorm<T> gn1, gn2, gn3;
    Gelu<T> act1, act2, act3;
    Linear<T> patch_proj;

    Tensor<T> cls_token;      // (embed)
    Tensor<T> channel_embed;  // (channels, embed)
    Tensor<T> second_embed;   // (seconds, embed)

    std::vector<TransformerBlock<T>> encoder;

    LayerNorm<T> head_ln;
    Linear<T> head_fc1;
    BatchNorm1d<T> head_bn;
    Relu<T> head_relu;
    Linear<T> head_fc2;

    bool has_decoder = true;
    Linear<T> teacher_proj;  // teacher_dim -> embed
    Tensor<T> mask_embed;    // (embed)
    Tensor<T> decoder_pos;   // (teacher_len, embed)
    std::vector<TransformerBlock<T>> decoder;
    Linear<T> decoder_out;   // embed -> vocab

    PredannModel(const ModelConfig& config, Rng& rng)
        : cfg(config),
          conv1(1, config.patch_dim / 4, 7, 3, rng),
          conv2(config.patch_dim / 4, config.patch_dim / 2, 5, 2, rng),
          conv3(config.patch_dim / 2, config.patch_dim, 5, 2, rng),
          gn1(config.patch_dim / 4, std::min(config.norm_groups, config.patch_dim / 4)),
          gn2(config.patch_dim / 2, std::min(config.norm_groups, config.patch_dim / 2)),
          gn3(config.patch_dim, std::min(config.norm_groups, config.patch_dim)),
          patch_proj(config.patch_dim, config.embed_dim, rng),
          cls_token(Tensor<T>::randn({config.embed_dim}, rng, static_cast<T>(0.02))),
          channel_embed(Tensor<T>::randn({config.channels, config.embed_dim}, rng, static_cast<T>(0.02))),
          second_embed(Tensor<T>::randn({config.seconds, config.embed_dim}, rng, static_cast<T>(0.02))),
          head_ln(config.embed_dim),
          head_fc1(config.embed_dim, config.head_hidden(), rng),
          head_bn(config.head_hidden()),
          head_fc2(config.head_hidden(), config.classes, rng),
          teacher_proj(config.teacher_dim, config.embed_dim, rng),
          mask_embed(Tensor<T>::randn({config.embed_dim}, rng, static_cast<T>(0.02))),
          decoder_pos(Tensor<T>::randn({config.teacher_len, config.embed_dim}, rng, static_cast<T>(0.02))),
          decoder_out(config.embed_dim, config.vocab, rng) {
        cfg.validate();
        for (int l = 0; l < cfg.encoder_layers; ++l)
            encoder.emplace_back(cfg.embed_dim, cfg.heads, cfg.mlp_hidden(), static_cast<T>(cfg.dropout), rng);
        for (int l = 0; l < cfg.decoder_layers; ++l)
            decoder.emplace_back(cfg.embed_dim, cfg.heads, cfg.mlp_hidden(), static_cast<T>(cfg.dropout), rng);
        cls_token.ensure_grad();
        channel_embed.ensure_grad();
        second_embed.ensure_grad();
        mask_embed.ensure_grad();
        decoder_pos.ensure_grad();
        set_training(true);
    }

    void set_training(bool training) {
        training_ = training;
        head_bn.training = training;
        for (auto& b : encoder) b.set_training(training);
        for (auto& b : decoder) b.set_training(training);
    }

    bool is_training() const { return training_; }

    void collect(ParamList<T>& out) {
        conv1.collect(out, "patch.conv1");
        gn1.collect(out, "patch.gn1");
        conv2.collect(out, "patch.conv2");
        gn2.collect(out, "patch.gn2");
        conv3.collect(out, "patch.conv3");
        gn3.collect(out, "patch.gn3");
        patch_proj.collect(out, "patch.proj");
        add_param(out, "embed.cls", cls_token);
        add_param(out, "embed.channel", channel_embed);
        add_param(out, "embed.second", second_embed);
        for (std::size_t l = 0; l < encoder.size(); ++l)
            encoder[l].collect(out, "encoder." + std::to_string(l));
        head_ln.collect(out, "head.ln");
        head_fc1.collect(out, "head.fc1");
        head_bn.collect(out, "head.bn");
        head_fc2.collect(out, "head.fc2");
        if (has_decoder) {
            teacher_proj.collect(out, "decoder.teacher_proj");
            add_param(out, "decoder.mask_embed", mask_embed);
            add_param(out, "decoder.pos", decoder_pos);
            for (std::size_t l = 0; l < decoder.size(); ++l)
                decoder[l].collect(out, "decoder." + std::to_string(l));
            decoder_out.collect(out, "decoder.out");
        }
    }

    void collect_buffers(ParamList<T>& out) { head_bn.collect_buffers(out, "head.bn"); }

    // ---- forward ----

    // x: (batch, channels, seconds * rate) -> h_cls (batch, embed) plus the
    // full token states cached for the decoder
    Tensor<T> encode(const Tensor<T>& x, Rng& rng) {
        if (x.ndim() != 3 || x.dim(1) != cfg.channels || x.dim(2) != cfg.seconds * cfg.rate)
            throw std::invalid_argument("encode: input shape mismatch");
        const int batch = x.dim(0);
        batch_ = batch;

        // (batch * channels * seconds, 1, rate) patch rows
        Tensor<T> patches({batch * cfg.tokens(), 1, cfg.rate});
        std::copy(x.data.begin(), x.data.end(), patches.data.begin());

        Tensor<T> c1 = act1.forward(gn1.forward(conv1.forward(patches)));
        Tensor<T> c2 = act2.forward(gn2.forward(conv2.forward(c1)));
        Tensor<T> c3 = act3.forward(gn3.forward(conv3.forward(c2)));

        // global average over the remaining time axis
        pool_len_ = c3.dim(2);
        Tensor<T> pooled({batch * cfg.tokens(), cfg.patch_dim});
        for (int r = 0; r < pooled.dim(0); ++r)
            for (int ch = 0; ch < cfg.patch_dim; ++ch) {
                T acc{0};
                for (int t = 0; t < pool_len_; ++t) acc += c3(r, ch, t);
                pooled(r, ch) = acc / static_cast<T>(pool_len_);
            }

        Tensor<T> tokens = patch_proj.forward(pooled);  // (batch*tokens, embed)

        // assemble: cls + token[c,s] + E_ch[c] + E_sec[s]
        const int n = cfg.sequence_len();
        Tensor<T> seq({batch, n, cfg.embed_dim});
        for (int b = 0; b < batch; ++b) {
            T* cls_row = &seq(b, 0, 0);
            for (int e = 0; e < cfg.embed_dim; ++e) cls_row[e] = cls_token(e);
            for (int c = 0; c < cfg.channels; ++c)
                for (int s = 0; s < cfg.seconds; ++s) {
                    const int tok = c * cfg.seconds + s;
                    const T* src = tokens.row(b * cfg.tokens() + tok);
                    T* dst = &seq(b, 1 + tok, 0);
                    for (int e = 0; e < cfg.embed_dim; ++e)
                        dst[e] = src[e] + channel_embed(c, e) + second_embed(s, e);
                }
        }

        for (auto& block : encoder) seq = block.forward(seq, rng);
        enc_out_ = seq;

        Tensor<T> h_cls({batch, cfg.embed_dim});
        for (int b = 0; b < batch; ++b)
            std::copy(&seq(b, 0, 0), &seq(b, 0, 0) + cfg.embed_dim, h_cls.row(b));
        return h_cls;
    }

    // Backward through encoder and patch embedding. d_enc_out may be empty
    // (classification-only path); d_h_cls folds into position 0.
    void encode_backward(const Tensor<T>& d_h_cls, const Tensor<T>& d_enc_out) {
        const int batch = batch_;
        const int n = cfg.sequence_len();
        Tensor<T> dseq = d_enc_out.size() == 0 ? Tensor<T>({batch, n, cfg.embed_dim}) : d_enc_out;
        if (d_h_cls.size() != 0)
            for (int b = 0; b < batch; ++b)
                for (int e = 0; e < cfg.embed_dim; ++e) dseq(b, 0, e) += d_h_cls(b, e);

        for (auto it = encoder.rbegin(); it != encoder.rend(); ++it) dseq = it->backward(dseq);

        Tensor<T> dtokens({batch * cfg.tokens(), cfg.embed_dim});
        for (int b = 0; b < batch; ++b) {
            const T* dcls = &dseq(b, 0, 0);
            for (int e = 0; e < cfg.embed_dim; ++e) cls_token.grad[static_cast<std::size_t>(e)] += dcls[e];
            for (int c = 0; c < cfg.channels; ++c)
                for (int s = 0; s < cfg.seconds; ++s) {
                    const int tok = c * cfg.seconds + s;
                    const T* d = &dseq(b, 1 + tok, 0);
                    T* dt = dtokens.row(b * cfg.tokens() + tok);
                    for (int e = 0; e < cfg.embed_dim; ++e) {
                        dt[e] = d[e];
                        channel_embed.grad[static_cast<std::size_t>(c) * cfg.embed_dim + e] += d[e];
                        second_embed.grad[static_cast<std::size_t>(s) * cfg.embed_dim + e] += d[e];
                    }
                }
        }

        Tensor<T> dpooled = patch_proj.backward(dtokens);
        Tensor<T> dc3({batch * cfg.tokens(), cfg.patch_dim, pool_len_});
        for (int r = 0; r < dpooled.dim(0); ++r)
            for (int ch = 0; ch < cfg.patch_dim; ++ch) {
                const T g = dpooled(r, ch) / static_cast<T>(pool_len_);
                for (int t = 0; t < pool_len_; ++t) dc3(r, ch, t) = g;
            }
        Tensor<T> d2 = conv3.backward(gn3.backward(act3.backward(dc3)));
        Tensor<T> d1 = conv2.backward(gn2.backward(act2.backward(d2)));
        conv1.backward(gn1.backward(act1.backward(d1)));
    }

    // h_cls -> MLP(LN(h_cls)) with BatchNorm + ReLU hidden layer
    Tensor<T> classify(const Tensor<T>& h_cls) {
        return head_fc2.forward(head_relu.forward(head_bn.forward(head_fc1.forward(head_ln.forward(h_cls)))));
    }

    Tensor<T> classify_backward(const Tensor<T>& d_logits) {
        return head_ln.backward(
            head_fc1.backward(head_bn.backward(head_relu.backward(head_fc2.backward(d_logits)))));
    }

    // Decoder input: e_mask at masked positions, projected continuous
    // teacher values elsewhere, temporal positional embeddings on all.
    // teacher_raw: (batch, teacher_len, teacher_dim).
    Tensor<T> build_decoder_input(const Tensor<T>& teacher_raw, const std::vector<MaskSet>& masks) {
        const int batch = teacher_raw.dim(0);
        const int nm = cfg.teacher_len;
        if (teacher_raw.ndim() != 3 || teacher_raw.dim(1) != nm || teacher_raw.dim(2) != cfg.teacher_dim)
            throw std::invalid_argument("build_decoder_input: teacher shape mismatch");
        if (static_cast<int>(masks.size()) != batch)
            throw std::invalid_argument("build_decoder_input: one mask per sample");

        masks_ = &masks;
        Tensor<T> u = teacher_proj.forward(teacher_raw);  // (batch, nm, embed)
        for (int b = 0; b < batch; ++b) {
            for (int i : masks[static_cast<std::size_t>(b)].indices) {
                if (i < 0 || i >= nm) throw std::out_of_range("build_decoder_input: mask index out of range");
                T* row = &u(b, i, 0);
                for (int e = 0; e < cfg.embed_dim; ++e) row[e] = mask_embed(e);
            }
            for (int i = 0; i < nm; ++i) {
                T* row = &u(b, i, 0);
                for (int e = 0; e < cfg.embed_dim; ++e) row[e] += decoder_pos(i, e);
            }
        }
        return u;
    }

    Tensor<T> decode(const Tensor<T>& teacher_raw, const std::vector<MaskSet>& masks, Rng& rng) {
        if (!has_decoder) throw std::logic_error("decode: decoder was stripped");
        const int batch = batch_;
        const int nm = cfg.teacher_len;
        if (teacher_raw.dim(0) != batch) throw std::invalid_argument("decode: batch mismatch with encode");
        Tensor<T> u = build_decoder_input(teacher_raw, masks);

        // joint attention over [encoder tokens ; teacher tokens]
        const int n_enc = cfg.sequence_len();
        Tensor<T> joint({batch, n_enc + nm, cfg.embed_dim});
        for (int b = 0; b < batch; ++b) {
            std::copy(&enc_out_(b, 0, 0), &enc_out_(b, 0, 0) + static_cast<std::size_t>(n_enc) * cfg.embed_dim,
                      &joint(b, 0, 0));
            std::copy(&u(b, 0, 0), &u(b, 0, 0) + static_cast<std::size_t>(nm) * cfg.embed_dim,
                      &joint(b, n_enc, 0));
        }
        for (auto& block : decoder) joint = block.forward(joint, rng);

        Tensor<T> teacher_states({batch, nm, cfg.embed_dim});
        for (int b = 0; b < batch; ++b)
            std::copy(&joint(b, n_enc, 0), &joint(b, n_enc, 0) + static_cast<std::size_t>(nm) * cfg.embed_dim,
                      &teacher_states(b, 0, 0));
        return decoder_out.forward(teacher_states);  // (batch, nm, vocab)
    }

    // Returns the gradient flowing into the encoder output tokens.
    Tensor<T> decode_backward(const Tensor<T>& d_teacher_logits) {
        const int batch = batch_;
        const int nm = cfg.teacher_len;
        const int n_enc = cfg.sequence_len();

        Tensor<T> d_states = decoder_out.backward(d_teacher_logits);
        Tensor<T> djoint({batch, n_enc + nm, cfg.embed_dim});
        for (int b = 0; b < batch; ++b)
            std::copy(&d_states(b, 0, 0), &d_states(b, 0, 0) + static_cast<std::size_t>(nm) * cfg.embed_dim,
                      &djoint(b, n_enc, 0));
        for (auto it = decoder.rbegin(); it != decoder.rend(); ++it) djoint = it->backward(djoint);

        Tensor<T> d_enc({batch, n_enc, cfg.embed_dim});
        Tensor<T> du({batch, nm, cfg.embed_dim});
        for (int b = 0; b < batch; ++b) {
            std::copy(&djoint(b, 0, 0), &djoint(b, 0, 0) + static_cast<std::size_t>(n_enc) * cfg.embed_dim,
                      &d_enc(b, 0, 0));
            std::copy(&djoint(b, n_enc, 0), &djoint(b, n_enc, 0) + static_cast<std::size_t>(nm) * cfg.embed_dim,
                      &du(b, 0, 0));
        }

        for (int b = 0; b < batch; ++b) {
            for (int i = 0; i < nm; ++i) {
                const T* row = &du(b, i, 0);
                for (int e = 0; e < cfg.embed_dim; ++e)
                    decoder_pos.grad[static_cast<std::size_t>(i) * cfg.embed_dim + e] += row[e];
            }
            for (int i : (*masks_)[static_cast<std::size_t>(b)].indices) {
                T* row = &du(b, i, 0);
                for (int e = 0; e < cfg.embed_dim; ++e) {
                    mask_embed.grad[static_cast<std::size_t>(e)] += row[e];
                    row[e] = T{0};  // masked rows do not reach the projection
                }
            }
        }
        teacher_proj.backward(du);
        return d_enc;
    }

    // ---- combined passes ----

    ForwardOutputs<T> forward_pretrain(const Tensor<T>& x, const Tensor<T>& teacher_raw,
                                       const std::vector<MaskSet>& masks, Rng& rng) {
        ForwardOutputs<T> out;
        out.h_cls = encode(x, rng);
        out.class_logits = classify(out.h_cls);
        out.teacher_logits = decode(teacher_raw, masks, rng);
        return out;
    }

    void backward_pretrain(const Tensor<T>& d_class_logits, const Tensor<T>& d_teacher_logits) {
        Tensor<T> d_h_cls = classify_backward(d_class_logits);
        Tensor<T> d_enc = decode_backward(d_teacher_logits);
        encode_backward(d_h_cls, d_enc);
    }

    Tensor<T> forward_classify(const Tensor<T>& x, Rng& rng) { return classify(encode(x, rng)); }

    void backward_classify(const Tensor<T>& d_logits) {
        encode_backward(classify_backward(d_logits), Tensor<T>());
    }

    const Tensor<T>& encoder_states() const { return enc_out_; }

private:
    bool training_ = true;
    int batch_ = 0;
    int pool_len_ = 0;
    Tensor<T> enc_out_;
    const std::vector<MaskSet>* masks_ = nullptr;
};

// Encoder and classification head survive bit-exact; every decoder-side
// parameter (teacher projection, mask embedding, temporal positional
// embeddings, decoder blocks, output head) is dropped from the parameter
// set.
template <class T>
PredannModel<T> strip_decoder(const PredannModel<T>& model) {
    PredannModel<T> out = model;
    out.has_decoder = false;
    return out;
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

// Mean CE over masked teacher positions only: (1/|M|) sum_{i in M} CE,
// averaged over the batch. Returns the loss and the gradient w.r.t. the
// teacher logits (zero at unmasked positions).
template <class T>
std::pair<T, Tensor<T>> masked_teacher_loss(const Tensor<T>& teacher_logits,
                                            const std::vector<std::vector<int>>& targets,
                                            const std::vector<MaskSet>& masks) {
    const int batch = teacher_logits.dim(0);
    const int nm = teacher_logits.dim(1);
    const int vocab = teacher_logits.dim(2);
    Tensor<T> dlogits(teacher_logits.shape);
    T total{0};
    int contributing = 0;
    std::vector<T> probs(static_cast<std::size_t>(vocab));
    for (int b = 0; b < batch; ++b) {
        const auto& mask = masks[static_cast<std::size_t>(b)].indices;
        if (mask.empty()) continue;
        ++contributing;
        const T inv_m = T{1} / static_cast<T>(mask.size());
        for (int i : mask) {
            if (i < 0 || i >= nm) throw std::out_of_range("masked_teacher_loss: mask index out of range");
            const T* row = &teacher_logits(b, i, 0);
            std::copy(row, row + vocab, probs.begin());
            softmax_row(probs.data(), vocab);
            const int target = targets[static_cast<std::size_t>(b)][static_cast<std::size_t>(i)];
            if (target < 0 || target >= vocab) throw std::out_of_range("masked_teacher_loss: target out of range");
            total -= std::log(probs[static_cast<std::size_t>(target)]) * inv_m;
            T* d = &dlogits(b, i, 0);
            for (int v = 0; v < vocab; ++v) d[v] = probs[static_cast<std::size_t>(v)] * inv_m;
            d[target] -= inv_m;
        }
    }
    if (contributing == 0) return {T{0}, dlogits};
    const T inv_b = T{1} / static_cast<T>(batch);
    total *= inv_b;
    for (auto& v : dlogits.data) v *= inv_b;
    return {total, dlogits};
}

template <class T>
struct PretrainLoss {
    T total{0}, classify{0}, masked{0};
};

// L = w_C * L_C + w_M * L_M; an empty mask set drops the L_M term.
template <class T>
std::pair<PretrainLoss<T>, std::pair<Tensor<T>, Tensor<T>>> pretrain_loss(
    const ForwardOutputs<T>& out, const std::vector<int>& labels,
    const std::vector<std::vector<int>>& teacher_targets, const std::vector<MaskSet>& masks, double w_classify,
    double w_masked) {
    CrossEntropy<T> ce;
    PretrainLoss<T> loss;
    loss.classify = ce.forward(out.class_logits, labels);
    Tensor<T> d_class = ce.backward(static_cast<T>(w_classify));

    auto [lm, d_teacher] = masked_teacher_loss(out.teacher_logits, teacher_targets, masks);
    loss.masked = lm;
    for (auto& v : d_teacher.data) v *= static_cast<T>(w_masked);

    loss.total = static_cast<T>(w_classify) * loss.classify + static_cast<T>(w_masked) * loss.masked;
    return {loss, {std::move(d_class), std::move(d_teacher)}};
}

// argmax with lowest-index tie break
template <class T>
int predicted_label(const T* logits, int classes) {
    int best = 0;
    for (int c = 1; c < classes; ++c)
        if (logits[c] > logits[best]) best = c;
    return best;
}

}  // namespace predann

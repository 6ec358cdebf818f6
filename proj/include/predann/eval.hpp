#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <stdexcept>
#include <utility>
#include <string>
#include <vector>

#include "predann/model.hpp"

namespace predann {

// ---------------------------------------------------------------------------
// prediction caches
// ---------------------------------------------------------------------------

struct PredictionEntry {
    int label = 0;
    std::vector<double> logits;
};

// Per-sample validation logits keyed by stable sample ids. Raw logits are
// stored (never probabilities) so ensembles and statistics stay
// recomputable from the cache alone.
struct PredictionCache {
    std::string model_tag;
    std::string config_hash;
    std::map<std::string, PredictionEntry> entries;

    int classes() const { return entries.empty() ? 0 : static_cast<int>(entries.begin()->second.logits.size()); }
};

inline int cache_prediction(const PredictionEntry& e) {
    return predicted_label(e.logits.data(), static_cast<int>(e.logits.size()));
}

inline double accuracy(const PredictionCache& cache) {
    if (cache.entries.empty()) throw std::invalid_argument("accuracy: empty cache");
    std::int64_t correct = 0;
    for (const auto& [id, e] : cache.entries) correct += cache_prediction(e) == e.label;
    return static_cast<double>(correct) / static_cast<double>(cache.entries.size());
}

// Equal-weight deep ensemble: softmax each model's logits, average the
// probabilities, argmax. The stored "logits" of the ensemble cache are
// log(p_ens), which softmax back to exactly p_ens.
inline PredictionCache ensemble(const std::vector<const PredictionCache*>& members, std::string tag) {
    if (members.empty()) throw std::invalid_argument("ensemble: no members");
    PredictionCache out;
    out.model_tag = std::move(tag);
    out.config_hash = members.front()->config_hash;
    const auto& ids = members.front()->entries;
    for (const auto* m : members)
        if (m->entries.size() != ids.size()) throw std::invalid_argument("ensemble: sample id sets differ");

    for (const auto& [id, first] : ids) {
        const int classes = static_cast<int>(first.logits.size());
        std::vector<double> mean(static_cast<std::size_t>(classes), 0.0);
        for (const auto* m : members) {
            const auto it = m->entries.find(id);
            if (it == m->entries.end()) throw std::invalid_argument("ensemble: sample id sets differ: " + id);
            if (it->second.label != first.label) throw std::invalid_argument("ensemble: label mismatch: " + id);
            std::vector<double> p = it->second.logits;
            softmax_row(p.data(), classes);
            for (int c = 0; c < classes; ++c) mean[static_cast<std::size_t>(c)] += p[static_cast<std::size_t>(c)];
        }
        PredictionEntry e;
        e.label = first.label;
        e.logits.resize(static_cast<std::size_t>(classes));
        for (int c = 0; c < classes; ++c)
            e.logits[static_cast<std::size_t>(c)] = std::log(mean[static_cast<std::size_t>(c)] / members.size());
        out.entries.emplace(id, std::move(e));
    }
    return out;
}

// ---------------------------------------------------------------------------
// McNemar's exact test
// ---------------------------------------------------------------------------

struct ContingencyTable {
    std::int64_t a = 0;  // both correct
    std::int64_t b = 0;  // A correct, B wrong
    std::int64_t c = 0;  // B correct, A wrong
    std::int64_t d = 0;  // both wrong

    std::int64_t total() const { return a + b + c + d; }
};

inline ContingencyTable contingency(const PredictionCache& ca, const PredictionCache& cb) {
    if (ca.entries.size() != cb.entries.size())
        throw std::invalid_argument("contingency: caches cover different samples");
    ContingencyTable t;
    for (const auto& [id, ea] : ca.entries) {
        const auto it = cb.entries.find(id);
        if (it == cb.entries.end()) throw std::invalid_argument("contingency: missing sample " + id);
        const bool okA = cache_prediction(ea) == ea.label;
        const bool okB = cache_prediction(it->second) == it->second.label;
        if (okA && okB)
            ++t.a;
        else if (okA)
            ++t.b;
        else if (okB)
            ++t.c;
        else
            ++t.d;
    }
    return t;
}

namespace detail {

// P(X <= k) for X ~ Binomial(n, 1/2); pmf recurrence in double for moderate
// n, log-space accumulation beyond to dodge 2^-n underflow.
inline double binom_half_cdf(std::int64_t k, std::int64_t n) {
    if (k < 0) return 0.0;
    if (k >= n) return 1.0;
    if (n <= 1000) {
        double pmf = std::pow(0.5, static_cast<double>(n));
        double cdf = pmf;
        for (std::int64_t i = 0; i < k; ++i) {
            pmf *= static_cast<double>(n - i) / static_cast<double>(i + 1);
            cdf += pmf;
        }
        return std::min(cdf, 1.0);
    }
    const double log_half_n = -static_cast<double>(n) * std::numbers::ln2;
    double max_log = -std::numeric_limits<double>::infinity();
    std::vector<double> logs(static_cast<std::size_t>(k) + 1);
    for (std::int64_t i = 0; i <= k; ++i) {
        const double lc = std::lgamma(static_cast<double>(n) + 1) - std::lgamma(static_cast<double>(i) + 1) -
                          std::lgamma(static_cast<double>(n - i) + 1);
        logs[static_cast<std::size_t>(i)] = lc + log_half_n;
        max_log = std::max(max_log, logs[static_cast<std::size_t>(i)]);
    }
    double sum = 0.0;
    for (double l : logs) sum += std::exp(l - max_log);
    return std::min(std::exp(max_log) * sum, 1.0);
}

}  // namespace detail

// Exact two-sided McNemar on the discordant pair: n = b + c, X ~ Bin(n, 1/2),
// p = min(1, 2 * min(P(X <= min(b,c)), P(X >= max(b,c)))). The two tails are
// equal under p = 1/2, so the smaller tail is computed once.
inline double mcnemar_exact(std::int64_t b, std::int64_t c) {
    if (b < 0 || c < 0) throw std::invalid_argument("mcnemar_exact: negative count");
    const std::int64_t n = b + c;
    if (n == 0) return 1.0;
    const double tail = detail::binom_half_cdf(std::min(b, c), n);
    return std::min(1.0, 2.0 * tail);
}

inline std::string significance_stars(double p) {
    if (p < 0.001) return "***";
    if (p < 0.01) return "**";
    if (p < 0.05) return "*";
    return "";
}

// ---------------------------------------------------------------------------
// comparison report
// ---------------------------------------------------------------------------

struct ComparisonRow {
    std::string tag_a, tag_b;
    double acc_a = 0.0, acc_b = 0.0;
    ContingencyTable table;
    double p = 1.0;
    std::string stars;
};

inline ComparisonRow compare_caches(const PredictionCache& a, const PredictionCache& b) {
    ComparisonRow row;
    row.tag_a = a.model_tag;
    row.tag_b = b.model_tag;
    row.acc_a = accuracy(a);
    row.acc_b = accuracy(b);
    row.table = contingency(a, b);
    row.p = mcnemar_exact(row.table.b, row.table.c);
    row.stars = significance_stars(row.p);
    return row;
}

inline std::vector<ComparisonRow> comparison_report(
    const std::vector<const PredictionCache*>& caches,
    const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
    std::vector<ComparisonRow> rows;
    for (const auto& [i, j] : pairs) {
        if (i >= caches.size() || j >= caches.size()) throw std::out_of_range("comparison_report: bad pair index");
        rows.push_back(compare_caches(*caches[i], *caches[j]));
    }
    return rows;
}

}  // namespace predann

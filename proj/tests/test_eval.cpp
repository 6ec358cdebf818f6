#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "predann/eval.hpp"
#include "predann/rng.hpp"

using namespace predann;

namespace {

PredictionCache make_cache(const std::string& tag, const std::vector<std::pair<int, std::vector<double>>>& rows) {
    PredictionCache c;
    c.model_tag = tag;
    int i = 0;
    for (const auto& [label, logits] : rows) {
        PredictionEntry e;
        e.label = label;
        e.logits = logits;
        c.entries.emplace("s" + std::to_string(i++), std::move(e));
    }
    return c;
}

// independent oracle: exact integer binomials via Pascal's triangle
double binom_cdf_oracle(std::int64_t k, std::int64_t n) {
    std::vector<std::vector<long double>> pascal(static_cast<std::size_t>(n) + 1);
    for (std::int64_t r = 0; r <= n; ++r) {
        pascal[static_cast<std::size_t>(r)].assign(static_cast<std::size_t>(r) + 1, 1.0L);
        for (std::int64_t c = 1; c < r; ++c)
            pascal[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] =
                pascal[static_cast<std::size_t>(r - 1)][static_cast<std::size_t>(c - 1)] +
                pascal[static_cast<std::size_t>(r - 1)][static_cast<std::size_t>(c)];
    }
    long double sum = 0.0L;
    for (std::int64_t i = 0; i <= k && i <= n; ++i) sum += pascal[static_cast<std::size_t>(n)][static_cast<std::size_t>(i)];
    return static_cast<double>(sum * std::pow(0.5L, static_cast<long double>(n)));
}

}  // namespace

TEST_CASE("accuracy over a hand-built cache") {
    auto cache = make_cache("m", {{0, {5, 0, 0}}, {1, {0, 5, 0}}, {2, {5, 0, 0}}});
    CHECK(accuracy(cache) == doctest::Approx(2.0 / 3.0));
    auto perfect = make_cache("m", {{0, {5, 0}}, {1, {0, 5}}});
    CHECK(accuracy(perfect) == 1.0);
}

TEST_CASE("argmax ties resolve to the lowest class index") {
    auto cache = make_cache("m", {{0, {1, 1, 1}}});
    CHECK(cache_prediction(cache.entries.begin()->second) == 0);
    CHECK(accuracy(cache) == 1.0);
}

TEST_CASE("ensembling K copies of one model preserves every argmax") {
    Rng rng(3);
    std::vector<std::pair<int, std::vector<double>>> rows;
    for (int i = 0; i < 50; ++i) {
        std::vector<double> logits(10);
        for (auto& v : logits) v = rng.normal() * 3;
        rows.push_back({static_cast<int>(rng.below(10)), logits});
    }
    auto cache = make_cache("m", rows);
    auto ens = ensemble({&cache, &cache, &cache}, "ens");
    REQUIRE(ens.entries.size() == cache.entries.size());
    for (const auto& [id, e] : cache.entries)
        CHECK(cache_prediction(ens.entries.at(id)) == cache_prediction(e));
}

TEST_CASE("probability averaging follows the ensemble formula") {
    // model A: p = (0.6, 0.4), model B: p = (0.2, 0.8) -> mean (0.4, 0.6)
    auto a = make_cache("a", {{1, {std::log(0.6), std::log(0.4)}}});
    auto b = make_cache("b", {{1, {std::log(0.2), std::log(0.8)}}});
    auto ens = ensemble({&a, &b}, "ens");
    const auto& e = ens.entries.at("s0");
    CHECK(cache_prediction(e) == 1);
    std::vector<double> p = e.logits;
    softmax_row(p.data(), 2);
    CHECK(p[0] == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(p[0] + p[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("ensemble distributions sum to one on random inputs") {
    Rng rng(5);
    std::vector<std::pair<int, std::vector<double>>> ra, rb;
    for (int i = 0; i < 30; ++i) {
        std::vector<double> la(4), lb(4);
        for (auto& v : la) v = rng.normal() * 5;
        for (auto& v : lb) v = rng.normal() * 5;
        const int label = static_cast<int>(rng.below(4));
        ra.push_back({label, la});
        rb.push_back({label, lb});
    }
    auto a = make_cache("a", ra);
    auto b = make_cache("b", rb);
    auto ens = ensemble({&a, &b}, "ens");
    for (const auto& [id, e] : ens.entries) {
        std::vector<double> p = e.logits;
        softmax_row(p.data(), 4);
        double sum = 0;
        for (double v : p) sum += v;
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("ensemble rejects mismatched id sets") {
    auto a = make_cache("a", {{0, {1, 0}}, {1, {0, 1}}});
    auto b = make_cache("b", {{0, {1, 0}}});
    CHECK_THROWS(ensemble({&a, &b}, "ens"));
}

TEST_CASE("contingency tables") {
    SUBCASE("identical caches have b = c = 0") {
        auto a = make_cache("a", {{0, {1, 0}}, {1, {1, 0}}, {0, {0, 1}}});
        auto t = contingency(a, a);
        CHECK(t.b == 0);
        CHECK(t.c == 0);
        CHECK(t.total() == 3);
        CHECK(t.a == 1);
        CHECK(t.d == 2);
    }
    SUBCASE("complementary predictors fill only the discordant cells") {
        auto a = make_cache("a", {{0, {1, 0}}, {0, {1, 0}}, {1, {1, 0}}, {1, {1, 0}}});
        auto b = make_cache("b", {{0, {0, 1}}, {0, {0, 1}}, {1, {0, 1}}, {1, {0, 1}}});
        auto t = contingency(a, b);
        CHECK(t.a == 0);
        CHECK(t.d == 0);
        CHECK(t.b + t.c == 4);
        CHECK(t.b == 2);  // a right on the two 0-labels
        CHECK(t.c == 2);
    }
    SUBCASE("random caches match an independent recount") {
        Rng rng(7);
        std::vector<std::pair<int, std::vector<double>>> ra, rb;
        for (int i = 0; i < 200; ++i) {
            std::vector<double> la(3), lb(3);
            for (auto& v : la) v = rng.normal();
            for (auto& v : lb) v = rng.normal();
            const int label = static_cast<int>(rng.below(3));
            ra.push_back({label, la});
            rb.push_back({label, lb});
        }
        auto a = make_cache("a", ra);
        auto b = make_cache("b", rb);
        auto t = contingency(a, b);
        std::int64_t aa = 0, bb = 0, cc = 0, dd = 0;
        for (std::size_t i = 0; i < ra.size(); ++i) {
            const bool okA = predicted_label(ra[i].second.data(), 3) == ra[i].first;
            const bool okB = predicted_label(rb[i].second.data(), 3) == rb[i].first;
            aa += okA && okB;
            bb += okA && !okB;
            cc += !okA && okB;
            dd += !okA && !okB;
        }
        CHECK(t.a == aa);
        CHECK(t.b == bb);
        CHECK(t.c == cc);
        CHECK(t.d == dd);
        CHECK(t.total() == 200);
    }
}

TEST_CASE("mcnemar exact values") {
    CHECK(mcnemar_exact(0, 0) == 1.0);
    CHECK(mcnemar_exact(5, 0) == 0.0625);  // 2 * (1/2)^5, exactly
    CHECK(mcnemar_exact(3, 3) == 1.0);     // doubled tail capped at 1
    CHECK_THROWS(mcnemar_exact(-1, 2));
}

TEST_CASE("mcnemar matches the binomial oracle for all b + c <= 60") {
    for (std::int64_t n = 0; n <= 60; ++n)
        for (std::int64_t b = 0; b <= n; ++b) {
            const std::int64_t c = n - b;
            const double expected = n == 0 ? 1.0 : std::min(1.0, 2.0 * binom_cdf_oracle(std::min(b, c), n));
            REQUIRE(mcnemar_exact(b, c) == doctest::Approx(expected).epsilon(1e-12));
        }
}

TEST_CASE("mcnemar is symmetric and monotone in |b - c|") {
    for (std::int64_t b = 0; b <= 200; b += 7)
        for (std::int64_t c = 0; c <= 200; c += 11)
            REQUIRE(mcnemar_exact(b, c) == mcnemar_exact(c, b));

    for (std::int64_t n : {10, 25, 60, 121}) {
        double prev = 2.0;
        for (std::int64_t b = n / 2; b >= 0; --b) {  // |b - c| grows as b shrinks
            const double p = mcnemar_exact(b, n - b);
            REQUIRE(p <= prev + 1e-15);
            REQUIRE(p >= 0.0);
            REQUIRE(p <= 1.0);
            prev = p;
        }
    }
}

TEST_CASE("large discordant counts stay accurate") {
    // log-space path: compare p against the doubled normal-free identity
    // P(X <= k) via the oracle at the largest n it can represent exactly
    const double p = mcnemar_exact(700, 500);
    CHECK(p > 0.0);
    CHECK(p < 1.0);
    // symmetric tails at huge n still behave
    CHECK(mcnemar_exact(2000, 2000) == 1.0);
    CHECK(mcnemar_exact(3000, 0) < 1e-300);
}

TEST_CASE("significance stars") {
    CHECK(significance_stars(0.0065) == "**");
    CHECK(significance_stars(0.5) == "");
    CHECK(significance_stars(1e-20) == "***");
    CHECK(significance_stars(0.049) == "*");
    CHECK(significance_stars(0.05) == "");
}

TEST_CASE("comparison report wires accuracy, tables, p and stars together") {
    auto a = make_cache("modelA", {{0, {1, 0}}, {1, {0, 1}}, {0, {1, 0}}, {1, {1, 0}}});
    auto b = make_cache("modelB", {{0, {0, 1}}, {1, {0, 1}}, {0, {0, 1}}, {1, {0, 1}}});
    auto rows = comparison_report({&a, &b}, {{0, 1}});
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].tag_a == "modelA");
    CHECK(rows[0].acc_a == doctest::Approx(0.75));
    CHECK(rows[0].acc_b == doctest::Approx(0.5));
    CHECK(rows[0].p == mcnemar_exact(rows[0].table.b, rows[0].table.c));
    CHECK(rows[0].stars == significance_stars(rows[0].p));
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "predann/signal.hpp"

using namespace predann;

namespace {

Recording make_recording(double duration_s, int channels = 2, double rate = 125.0, int song = 0,
                         int subject = 0, std::uint64_t seed = 99) {
    Recording rec;
    rec.channels = channels;
    rec.sample_rate = rate;
    rec.song_id = song;
    rec.subject_id = subject;
    const auto len = static_cast<std::size_t>(round_half_away(duration_s * rate));
    Rng rng(seed);
    rec.samples.resize(len * static_cast<std::size_t>(channels));
    for (auto& v : rec.samples) v = static_cast<float>(rng.normal() * 10.0);
    return rec;
}

}  // namespace

TEST_CASE("truncate_recording keeps an exact prefix") {
    Recording rec = make_recording(300.0);
    Recording cut = truncate_recording(rec, 240.0);
    CHECK(cut.length() == 240 * 125);
    for (int c = 0; c < rec.channels; ++c)
        for (std::int64_t i = 0; i < cut.length(); ++i)
            REQUIRE(cut.channel(c)[i] == rec.channel(c)[i]);
}

TEST_CASE("truncate_recording passes short recordings through") {
    Recording rec = make_recording(100.0);
    Recording cut = truncate_recording(rec, 240.0);
    CHECK(cut.length() == rec.length());
    CHECK(cut.samples == rec.samples);
}

TEST_CASE("truncate to 240 s at 125 Hz gives exactly 30000 samples") {
    Recording rec = make_recording(240.5);
    CHECK(truncate_recording(rec, 240.0).length() == 30000);
}

TEST_CASE("make_excerpts") {
    SUBCASE("240 s -> 8 excerpts at starts 0,30,...,210") {
        auto ex = make_excerpts(make_recording(240.0));
        REQUIRE(ex.size() == 8);
        for (int i = 0; i < 8; ++i) {
            CHECK(ex[static_cast<std::size_t>(i)].excerpt_index == i);
            CHECK(ex[static_cast<std::size_t>(i)].start_s == doctest::Approx(30.0 * i));
        }
    }
    SUBCASE("30 s -> 1 excerpt") { CHECK(make_excerpts(make_recording(30.0)).size() == 1); }
    SUBCASE("59 s -> 1 excerpt, remainder dropped") { CHECK(make_excerpts(make_recording(59.0)).size() == 1); }
    SUBCASE("29 s -> none") { CHECK(make_excerpts(make_recording(29.0)).empty()); }
}

TEST_CASE("stratified split allocates per song") {
    std::vector<ExcerptRef> refs;
    for (int song = 0; song < 10; ++song)
        for (int e = 0; e < 8; ++e) refs.push_back({song, e});

    SplitAssignment split = stratified_split(refs, 0.75, 42);
    CHECK(split.train.size() + split.val.size() == refs.size());
    for (int song = 0; song < 10; ++song) {
        int n_train = 0, n_val = 0;
        for (int e = 0; e < 8; ++e) {
            const ExcerptRef r{song, e};
            const bool in_train = split.train.count(r) > 0;
            const bool in_val = split.val.count(r) > 0;
            CHECK(in_train != in_val);  // disjoint and covering
            n_train += in_train;
            n_val += in_val;
        }
        CHECK(n_train == 6);
        CHECK(n_val == 2);
    }
}

TEST_CASE("stratified split of 4 excerpts at 0.75 gives 3/1") {
    std::vector<ExcerptRef> refs{{0, 0}, {0, 1}, {0, 2}, {0, 3}};
    SplitAssignment split = stratified_split(refs, 0.75, 7);
    CHECK(split.train.size() == 3);
    CHECK(split.val.size() == 1);
}

TEST_CASE("stratified split is deterministic per seed") {
    std::vector<ExcerptRef> refs;
    for (int song = 0; song < 5; ++song)
        for (int e = 0; e < 8; ++e) refs.push_back({song, e});
    SplitAssignment a = stratified_split(refs, 0.75, 42);
    SplitAssignment b = stratified_split(refs, 0.75, 42);
    CHECK(a.train == b.train);
    CHECK(a.val == b.val);
    SplitAssignment c = stratified_split(refs, 0.75, 43);
    CHECK(a.val != c.val);  // overwhelmingly likely
}

TEST_CASE("stratified split rejects a song with no excerpts") {
    std::vector<ExcerptRef> refs{{0, 0}, {0, 1}, {2, 0}, {2, 1}};  // song 1 missing
    CHECK_THROWS(stratified_split(refs, 0.75, 42));
}

TEST_CASE("delay_samples rounding") {
    CHECK(delay_samples(200.0, 125.0) == 25);
    CHECK(delay_samples(0.0, 125.0) == 0);
    CHECK(delay_samples(100.0, 125.0) == 13);  // 12.5 rounds half away from zero
}

TEST_CASE("make_windows covers a 30-s excerpt with 14 windows") {
    auto wins = make_windows(30.0, 8.0, 1.6, 125.0);
    REQUIRE(wins.size() == 14);
    for (std::size_t k = 0; k < wins.size(); ++k) {
        CHECK(wins[k].index == static_cast<int>(k));
        CHECK(wins[k].start_s == doctest::Approx(1.6 * static_cast<double>(k)));
    }
    CHECK(wins.back().start_s == doctest::Approx(20.8));
}

TEST_CASE("make_windows edge cases") {
    CHECK(make_windows(8.0, 8.0, 1.6, 125.0).size() == 1);
    CHECK(make_windows(9.6, 8.0, 1.6, 125.0).size() == 2);
    CHECK(make_windows(7.9, 8.0, 1.6, 125.0).empty());
}

TEST_CASE("make_windows equals brute-force enumeration") {
    for (double dur : {30.0, 24.0, 45.5, 8.0, 12.8}) {
        auto wins = make_windows(dur, 8.0, 1.6, 125.0);
        std::vector<double> brute;
        for (int k = 0;; ++k) {
            const double start = 1.6 * k;
            if (start + 8.0 > dur + 1e-9) break;
            brute.push_back(start);
        }
        REQUIRE(wins.size() == brute.size());
        for (std::size_t i = 0; i < wins.size(); ++i)
            CHECK(wins[i].start_s == doctest::Approx(brute[i]).epsilon(1e-12));
    }
}

TEST_CASE("eval extraction starts at the window center") {
    Recording rec = make_recording(35.0);
    Excerpt ex = make_excerpts(rec)[0];
    SignalParams p;
    Rng rng(0);
    auto wins = make_windows(30.0, 8.0, 1.6, 125.0);

    auto seg = extract_segment_raw<float>(rec, ex, wins[0], ExtractMode::eval, rng, p);
    CHECK(seg.t0.seconds() == doctest::Approx(2.5));
    auto seg5 = extract_segment_raw<float>(rec, ex, wins[5], ExtractMode::eval, rng, p);
    CHECK(seg5.t0.seconds() == doctest::Approx(wins[5].start_s + 2.5));
    CHECK(seg.values.shape == std::vector<int>{2, 375});
}

TEST_CASE("eval extraction is repeatable sample for sample") {
    Recording rec = make_recording(35.0);
    Excerpt ex = make_excerpts(rec)[0];
    SignalParams p;
    Rng rng(0);
    auto wins = make_windows(30.0, 8.0, 1.6, 125.0);
    auto a = extract_segment<float>(rec, ex, wins[3], ExtractMode::eval, rng, p);
    auto b = extract_segment<float>(rec, ex, wins[3], ExtractMode::eval, rng, p);
    CHECK(a.values.data == b.values.data);
    CHECK(a.sample_id == b.sample_id);
}

TEST_CASE("train extraction is deterministic given rng state and stays in window") {
    Recording rec = make_recording(35.0);
    Excerpt ex = make_excerpts(rec)[0];
    SignalParams p;
    auto wins = make_windows(30.0, 8.0, 1.6, 125.0);

    Rng r1(5), r2(5);
    auto a = extract_segment_raw<float>(rec, ex, wins[2], ExtractMode::train, r1, p);
    auto b = extract_segment_raw<float>(rec, ex, wins[2], ExtractMode::train, r2, p);
    CHECK(a.t0.num == b.t0.num);
    CHECK(a.values.data == b.values.data);

    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        auto s = extract_segment_raw<float>(rec, ex, wins[2], ExtractMode::train, rng, p);
        CHECK(s.t0.seconds() >= wins[2].start_s - 1e-12);
        CHECK(s.t0.seconds() + 3.0 <= wins[2].start_s + 8.0 + 1e-12);
    }
}

TEST_CASE("delayed windows that run past the recording are detected") {
    Recording rec = make_recording(30.0);  // single excerpt, no slack
    Excerpt ex = make_excerpts(rec)[0];
    SignalParams p;
    auto wins = make_windows(30.0, 8.0, 1.6, 125.0);
    // with the default 200 ms delay the last window ends at 28.8 + 0.2 = 29.0 s
    CHECK(window_fully_covered(rec, ex, wins.back(), p));
    SignalParams big = p;
    big.delay_ms = 2000.0;
    CHECK_FALSE(window_fully_covered(rec, ex, wins.back(), big));
    // extraction honours the same bound: the last eval slice needs data
    // through 20.8 + 2.5 + 3 + 0.2 = 26.5 s
    Rng rng(0);
    auto shortrec = make_recording(26.0);
    Excerpt ex2{0, 0, 0.0, 30.0};
    CHECK_THROWS(extract_segment_raw<float>(shortrec, ex2, wins.back(), ExtractMode::eval, rng, p));
}

TEST_CASE("robust scaling of [1,2,3,4,5]") {
    Tensor<double> v({1, 5});
    v.data = {1, 2, 3, 4, 5};
    robust_scale_rows(v);
    const std::vector<double> expected{-1.0, -0.5, 0.0, 0.5, 1.0};
    for (int i = 0; i < 5; ++i) CHECK(v(0, i) == doctest::Approx(expected[static_cast<std::size_t>(i)]));
}

TEST_CASE("constant channel normalizes to zeros") {
    Tensor<double> v = Tensor<double>::full({1, 8}, 7.5);
    robust_scale_rows(v);
    for (double x : v.data) CHECK(x == 0.0);
}

TEST_CASE("values are clamped to [-20, 20]") {
    Tensor<double> v({1, 4});
    v.data = {100.0, -100.0, 0.5, 3.0};
    clamp_values(v, 20.0);
    CHECK(v.data[0] == 20.0);
    CHECK(v.data[1] == -20.0);
    CHECK(v.data[2] == 0.5);
}

TEST_CASE("normalized segments stay within bounds and have zero median pre-clamp") {
    Recording rec = make_recording(35.0, 4, 125.0, 3, 1, 1234);
    Excerpt ex = make_excerpts(rec)[0];
    SignalParams p;
    Rng rng(2);
    auto wins = make_windows(30.0, 8.0, 1.6, 125.0);

    for (const auto& win : wins) {
        auto raw = extract_segment_raw<double>(rec, ex, win, ExtractMode::eval, rng, p);
        robust_scale_rows(raw.values);
        for (int c = 0; c < 4; ++c) {
            std::vector<double> row(raw.values.row(c), raw.values.row(c) + 375);
            CHECK(std::fabs(quantile(row, 0.5)) < 1e-9);
        }
        clamp_values(raw.values, p.clamp);
        for (double x : raw.values.data) {
            CHECK(x <= 20.0);
            CHECK(x >= -20.0);
        }
    }
}

TEST_CASE("stratified split allocation matches ratio across songs") {
    // odd counts exercise the rounding rule
    std::vector<ExcerptRef> refs;
    for (int song = 0; song < 4; ++song)
        for (int e = 0; e < 5; ++e) refs.push_back({song, e});
    SplitAssignment split = stratified_split(refs, 0.75, 1);
    for (int song = 0; song < 4; ++song) {
        int n_val = 0;
        for (int e = 0; e < 5; ++e) n_val += split.val.count({song, e}) > 0;
        CHECK(n_val == 1);  // round(0.25 * 5) = 1
    }
}

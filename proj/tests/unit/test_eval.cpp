#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "fixtures.hpp"
#include "relrec/error.hpp"
#include "relrec/eval.hpp"
#include "relrec/split.hpp"

using namespace relrec;

TEST_CASE("negative sampling excludes the user's items and is seeded") {
    const std::vector<ItemId> user = {1, 2, 3};
    CounterRng a(5), b(5);
    const auto s1 = sample_negatives(user, 10, 3, a);
    const auto s2 = sample_negatives(user, 10, 3, b);
    CHECK(s1 == s2);
    REQUIRE(s1.size() == 3);
    for (const auto x : s1) {
        CHECK(x >= 4);
        CHECK(x <= 10);
    }
    auto sorted = s1;
    std::sort(sorted.begin(), sorted.end());
    CHECK(std::unique(sorted.begin(), sorted.end()) == sorted.end());
    // All 7 eligible items.
    CounterRng c(1);
    CHECK(sample_negatives(user, 10, 7, c).size() == 7);
}

TEST_CASE("infeasible sampling names the user") {
    const std::vector<ItemId> user = {1, 2, 3};
    CounterRng rng(1);
    try {
        sample_negatives(user, 5, 3, rng, 42);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("42") != std::string::npos);
    }
}

TEST_CASE("negative sampling is uniform over eligible items") {
    const std::vector<ItemId> user = {2, 5};
    std::vector<double> counts(11, 0.0);
    const int trials = 20000;
    for (int t = 0; t < trials; ++t) {
        CounterRng rng(derive_key(77, static_cast<std::uint64_t>(t)));
        for (const auto x : sample_negatives(user, 10, 3, rng)) counts[static_cast<std::size_t>(x)] += 1.0;
    }
    const double expected = trials * 3.0 / 8.0;
    double chi2 = 0.0;
    for (std::size_t i = 1; i <= 10; ++i) {
        if (i == 2 || i == 5) {
            CHECK(counts[i] == 0.0);
            continue;
        }
        chi2 += (counts[i] - expected) * (counts[i] - expected) / expected;
    }
    CHECK(chi2 < 24.3);  // chi-square, 7 dof, p = 0.001
}

TEST_CASE("ranking order and tie rule") {
    const std::vector<double> scores = {0.9, 0.1, 0.5};
    const std::vector<ItemId> items = {7, 2, 5};
    CHECK(rank_candidates(scores, items) == std::vector<std::size_t>{0, 2, 1});
    const std::vector<double> tie = {1.0, 1.0};
    const std::vector<ItemId> tie_items = {9, 4};
    CHECK(rank_candidates(tie, tie_items) == std::vector<std::size_t>{1, 0});
    const std::vector<double> nan = {1.0, NAN};
    CHECK_THROWS_AS(rank_candidates(nan, tie_items), Error);
}

TEST_CASE("NDCG examples") {
    const std::vector<std::size_t> first = {0, 1, 2, 3};
    CHECK(ndcg_at_k(first, 1, 10) == 1.0);
    const std::vector<std::size_t> third = {1, 2, 0, 3};
    CHECK(ndcg_at_k(third, 1, 10) == doctest::Approx(0.5).epsilon(1e-15));
    const std::vector<std::size_t> ordered = {0, 1, 2}, swapped = {1, 0, 2};
    CHECK(ndcg_at_k(ordered, 2, 10) == doctest::Approx(1.0).epsilon(1e-15));
    const double expect = (1.0 + 2.0 / std::log2(3.0)) / (2.0 + 1.0 / std::log2(3.0));
    CHECK(ndcg_at_k(swapped, 2, 10) == doctest::Approx(expect).epsilon(1e-15));
    CHECK(ndcg_at_k(swapped, 2, 10) == doctest::Approx(0.8598).epsilon(1e-4));
    CHECK(ndcg_at_k(swapped, 2, 10, GainMode::binary) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK_THROWS_AS(ndcg_at_k(first, 0, 10), Error);
}

TEST_CASE("HR examples") {
    const std::vector<std::size_t> fourth = {1, 2, 3, 0, 4};
    CHECK(hr_at_k(fourth, 1, 10) == 1.0);
    // 10 positives (0..9), 6 of them inside the top 10.
    std::vector<std::size_t> r = {0, 1, 10, 2, 11, 3, 12, 4, 13, 5, 6, 7, 8, 9};
    CHECK(hr_at_k(r, 10, 10) == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(hr_at_k(r, 10, 10, HitMode::any_hit) == 1.0);
    std::vector<std::size_t> miss = {10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 0};
    CHECK(hr_at_k(miss, 10, 10) == 0.0);
}

TEST_CASE("metrics agree with the brute-force oracle") {
    for (const auto gain : {GainMode::graded, GainMode::binary}) {
        const auto r = testing::exhaustive_metric_check(5, gain);
        CHECK(r.arrangements > 0);
        CHECK(r.max_ndcg_error < 1e-12);
        CHECK(r.max_hr_error < 1e-12);
    }
}

TEST_CASE("eval cases: negatives fixed per user, exclude the whole sequence") {
    const auto ds = testing::synthetic_dataset(30, 200, 4);
    const auto sp = split(ds, SplitSpec{5, 1, 1});
    EvalConfig cfg;
    cfg.k_eval = 5;
    cfg.seed = 9;
    const auto a = build_eval_cases(sp, cfg);
    cfg.k_eval = 1;
    const auto b = build_eval_cases(sp, cfg);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].negatives == b[i].negatives);
        CHECK(a[i].negatives.size() == 100);
        CHECK(b[i].positives.size() == 1);
        CHECK(b[i].positives[0] == a[i].positives[0]);
        const auto& seq = ds.sequence(a[i].user);
        for (const auto n : a[i].negatives) CHECK(std::find(seq.begin(), seq.end(), n) == seq.end());
    }
    cfg.k_eval = 6;
    CHECK_THROWS_AS(build_eval_cases(sp, cfg), Error);
}

TEST_CASE("MFI with one positive equals the traditional protocol") {
    const auto ds = testing::synthetic_dataset(60, 150, 8);
    const auto sp = split(ds, SplitSpec{});
    EvalConfig cfg;
    const PopularityScorer pop(sp);  // many ties
    const RandomScorer rnd(3);
    for (const Scorer* s : {static_cast<const Scorer*>(&pop), static_cast<const Scorer*>(&rnd)}) {
        const auto a = evaluate(*s, sp, cfg);
        const auto b = evaluate_traditional(*s, sp, cfg);
        CHECK(std::abs(a.ndcg - b.ndcg) < 1e-12);
        CHECK(std::abs(a.hr - b.hr) < 1e-12);
        CHECK(a.users_evaluated == b.users_evaluated);
    }
}

TEST_CASE("popularity beats random on a popularity-skewed log") {
    std::vector<Interaction> log;
    CounterRng rng(4);
    for (int u = 0; u < 300; ++u) {
        for (int t = 0; t < 12; ++t) {
            // Items 0..9 are drawn far more often than 10..199.
            const auto item = rng.uniform() < 0.7 ? rng.below(10) : 10 + rng.below(190);
            log.push_back({"u" + std::to_string(u), "i" + std::to_string(item), t, {}});
        }
    }
    const auto ds = build_dataset(log, 1);
    const auto sp = split(ds, SplitSpec{});
    EvalConfig cfg;
    const auto pop = evaluate(PopularityScorer(sp), sp, cfg);
    const auto rnd = evaluate(RandomScorer(1), sp, cfg);
    CHECK(pop.ndcg > rnd.ndcg + 0.1);
}

TEST_CASE("no evaluable users is an error") {
    const auto ds = testing::synthetic_dataset(5, 40, 2);
    const auto sp = split(ds, SplitSpec{100, 1, 1});
    EvalConfig cfg;
    CHECK_THROWS_AS(evaluate(RandomScorer(1), sp, cfg), Error);
}

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "relrec/error.hpp"
#include "relrec/loss.hpp"
#include "relrec/relevance.hpp"
#include "relrec/rng.hpp"

using namespace relrec;

namespace {

double loss_of(std::vector<double> pos, std::vector<double> neg, std::vector<double> w,
               WeightOrientation o = WeightOrientation::nearest_first) {
    return relevance_loss({pos, neg, w}, o);
}

}  // namespace

TEST_CASE("worked examples") {
    CHECK(loss_of({0.5}, {0.5}, {1.0}) == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-15));
    CHECK(loss_of({0.5, 0.01}, {}, make_profile(RelevanceKind::linear, 2).weights) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-15));
    const std::vector<double> p = {0.9}, q = {0.1}, w = {1.0};
    CHECK(baseline_loss({p, q, w}) == doctest::Approx(-2.0 * std::log(0.9)).epsilon(1e-15));
    CHECK(baseline_loss({p, {}, w}) == doctest::Approx(-std::log(0.9)).epsilon(1e-15));
}

TEST_CASE("perfect predictions approach zero loss") {
    const double one = 1.0 - kProbEpsilon;
    const double l = loss_of({one, one, one}, {kProbEpsilon, kProbEpsilon}, make_profile(RelevanceKind::exponential, 3).weights);
    CHECK(l >= 0.0);
    CHECK(l < 1e-6);
    // Probabilities beyond the clamp do not produce infinities.
    CHECK(std::isfinite(loss_of({1.0}, {0.0}, {1.0})));
    CHECK(std::isfinite(loss_of({0.0}, {1.0}, {1.0})));
}

TEST_CASE("uniform weights halve the unweighted two-positive cross-entropy") {
    const double p = 0.3, q = 0.8;
    const double unweighted = -std::log(p) - std::log(q);
    CHECK(loss_of({p, q}, {}, {0.5, 0.5}) == doctest::Approx(unweighted / 2.0).epsilon(1e-15));
}

TEST_CASE("single-positive loss equals the baseline bitwise") {
    CounterRng rng(99);
    for (int t = 0; t < 1000; ++t) {
        const std::vector<double> pos = {rng.uniform()};
        std::vector<double> neg(rng.below(5));
        for (auto& x : neg) x = rng.uniform();
        const std::vector<double> w = {1.0};
        const double a = relevance_loss({pos, neg, w});
        const double b = baseline_loss({pos, neg, w});
        CHECK(std::memcmp(&a, &b, sizeof(double)) == 0);
    }
}

TEST_CASE("errors") {
    const std::vector<double> two = {0.5, 0.5}, one = {1.0};
    CHECK_THROWS_AS(relevance_loss({two, {}, one}), Error);
    CHECK_THROWS_AS(baseline_loss({two, {}, two}), Error);
}

TEST_CASE("literal orientation reverses the weights") {
    const auto w = make_profile(RelevanceKind::linear, 3).weights;
    const double a = loss_of({0.2, 0.5, 0.9}, {0.3}, w, WeightOrientation::literal_index);
    const double b = loss_of({0.9, 0.5, 0.2}, {0.3}, w, WeightOrientation::nearest_first);
    CHECK(a == doctest::Approx(b).epsilon(1e-15));
}

TEST_CASE("loss decreases as a weighted positive's probability rises") {
    const auto w = make_profile(RelevanceKind::power, 4).weights;
    double prev = INFINITY;
    for (double p = 0.05; p < 1.0; p += 0.05) {
        const double l = loss_of({p, 0.4, 0.4, 0.4}, {0.2}, w);
        CHECK(l < prev);
        prev = l;
    }
}

TEST_CASE("loss is linear in the weights") {
    const std::vector<double> pos = {0.3, 0.6, 0.7};
    const std::vector<double> a = {0.5, 0.3, 0.2}, b = {0.2, 0.2, 0.6};
    std::vector<double> mix(3);
    for (int i = 0; i < 3; ++i) mix[i] = 0.25 * a[i] + 0.75 * b[i];
    CHECK(loss_of(pos, {}, mix) ==
          doctest::Approx(0.25 * loss_of(pos, {}, a) + 0.75 * loss_of(pos, {}, b)).epsilon(1e-14));
}

TEST_CASE("logit form matches the probability form and its derivative") {
    const std::vector<double> zp = {0.3, -1.2, 2.0}, zn = {0.5, -0.7};
    const auto w = make_profile(RelevanceKind::linear, 3).weights;
    std::vector<double> gp(3), gn(2);
    const double l = relevance_loss_logits(zp, zn, w, gp, gn);
    std::vector<double> pp, pn;
    for (double z : zp) pp.push_back(sigmoid(z));
    for (double z : zn) pn.push_back(sigmoid(z));
    CHECK(l == doctest::Approx(relevance_loss({pp, pn, w})).epsilon(1e-14));

    const double h = 1e-6;
    for (std::size_t i = 0; i < 3; ++i) {
        auto up = zp, dn = zp;
        up[i] += h;
        dn[i] -= h;
        std::vector<double> t1(3), t2(2);
        const double fd = (relevance_loss_logits(up, zn, w, t1, t2) - relevance_loss_logits(dn, zn, w, t1, t2)) / (2 * h);
        CHECK(gp[i] == doctest::Approx(fd).epsilon(1e-7));
    }
    for (std::size_t j = 0; j < 2; ++j) {
        auto up = zn, dn = zn;
        up[j] += h;
        dn[j] -= h;
        std::vector<double> t1(3), t2(2);
        const double fd = (relevance_loss_logits(zp, up, w, t1, t2) - relevance_loss_logits(zp, dn, w, t1, t2)) / (2 * h);
        CHECK(gn[j] == doctest::Approx(fd).epsilon(1e-7));
    }
}

TEST_CASE("sigmoid is stable at extreme logits") {
    CHECK(sigmoid(800.0) == 1.0);
    CHECK(sigmoid(-800.0) >= 0.0);
    CHECK(std::isfinite(sigmoid(-800.0)));
    CHECK(sigmoid(0.0) == 0.5);
}

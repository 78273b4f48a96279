#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "privlm/common.hpp"
#include "privlm/theory.hpp"

using namespace privlm;

TEST_CASE("kl of a distribution with itself is zero") {
    JointDist p = JointDist::random(4, 2, 123);
    CHECK(exact_kl(p.table(), p.table()) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("kl between uniforms with nested support is the log ratio") {
    // p uniform over the first 8 entries, q uniform over all 16
    std::vector<double> p(16, 0.0), q(16, 1.0 / 16.0);
    for (int i = 0; i < 8; ++i) p[static_cast<std::size_t>(i)] = 1.0 / 8.0;
    CHECK(exact_kl(p, q) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("kl reports +inf when the model has a hole") {
    std::vector<double> p = {0.5, 0.5};
    std::vector<double> q = {1.0, 0.0};
    CHECK(std::isinf(exact_kl(p, q)));
    // 0 log 0 = 0 on the other side
    CHECK(exact_kl(q, p) == doctest::Approx(std::log(2.0)));
}

TEST_CASE("random kl matches a sorted high-precision summation oracle") {
    JointDist p = JointDist::random(4, 2, 5);
    JointDist q = JointDist::random(4, 2, 6);
    double got = exact_kl(p.table(), q.table());

    std::vector<long double> terms;
    for (std::size_t i = 0; i < p.table().size(); ++i) {
        long double pi = p.table()[i];
        long double qi = q.table()[i];
        if (pi > 0) terms.push_back(pi * std::log(static_cast<double>(pi / qi)));
    }
    std::sort(terms.begin(), terms.end());
    long double expected = 0;
    for (long double t : terms) expected += t;
    CHECK(got == doctest::Approx(static_cast<double>(expected)).epsilon(1e-10));
}

TEST_CASE("kl is non-negative on random pairs") {
    Rng rng(99);
    for (int t = 0; t < 50; ++t) {
        JointDist p = JointDist::random(3, 2, rng.next_u64());
        JointDist q = JointDist::random(3, 2, rng.next_u64());
        CHECK(exact_kl(p.table(), q.table()) >= -1e-12);
    }
}

TEST_CASE("pushforward with no privacy labels is the sequence marginal") {
    JointDist d(3, 2);
    // mass only on label strings 00
    d.at({0, 1}, {0, 0}) = 0.25;
    d.at({2, 2}, {0, 0}) = 0.75;
    MaskedDist m = mask_pushforward(d);
    CHECK(m.at({0, 1}) == doctest::Approx(0.25));
    CHECK(m.at({2, 2}) == doctest::Approx(0.75));
    CHECK(m.total_mass() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("pushforward with all-ones labels is a point mass on anonymous tokens") {
    JointDist d(3, 2);
    d.at({0, 1}, {1, 1}) = 0.4;
    d.at({2, 0}, {1, 1}) = 0.6;
    MaskedDist m = mask_pushforward(d);
    CHECK(m.at({3, 3}) == doctest::Approx(1.0));  // anonymous symbol is K
}

TEST_CASE("pushforward preserves total mass") {
    Rng rng(2024);
    for (int t = 0; t < 20; ++t) {
        JointDist d = JointDist::random(4, 2, rng.next_u64());
        MaskedDist m = mask_pushforward(d);
        CHECK(m.total_mass() == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("masking inequality is tight when the model equals the truth") {
    JointDist p = JointDist::random(4, 2, 77);
    DpiTrial trial = check_dpi_once(p, p);
    CHECK(trial.lhs == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(trial.rhs == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("a thousand random trials produce no violations") {
    DpiReport report = check_dpi(1000, 4, 2, 7);
    CHECK(report.trials == 1000);
    CHECK(report.violations == 0);
    CHECK(report.max_violation <= 1e-12);
    CHECK(report.min_gap >= -1e-12);
}

TEST_CASE("a collapsing pair shows a strictly positive gap") {
    // two heavy outcomes map to the same masked sequence while the model
    // splits its mass differently: masking must lose information
    JointDist truth(2, 1);
    truth.at({0}, {1}) = 0.5;
    truth.at({1}, {1}) = 0.5;
    truth.normalize();

    JointDist model(2, 1);
    model.at({0}, {1}) = 0.9;
    model.at({1}, {1}) = 0.1;
    model.normalize();

    DpiTrial trial = check_dpi_once(truth, model);
    // both (0,{1}) and (1,{1}) collapse to the anonymous symbol: lhs = 0
    CHECK(trial.lhs == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(trial.rhs > 0.1);
    CHECK(trial.gap() > 0.1);
}

TEST_CASE("table size bounds are enforced") {
    CHECK_THROWS_AS(JointDist(7, 2), Error);
    CHECK_THROWS_AS(JointDist(4, 4), Error);
    CHECK_NOTHROW(JointDist(6, 3));
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "peftcl/rng.hpp"

using namespace peftcl;

TEST_CASE("same seed and stream reproduce draws bitwise") {
    Rng a(42), b(42);
    for (uint64_t i = 0; i < 100; ++i) {
        CHECK(a.bits(rng_stream::kTest, i) == b.bits(rng_stream::kTest, i));
        CHECK(a.gaussian(rng_stream::kTest + 1, i) == b.gaussian(rng_stream::kTest + 1, i));
    }
}

TEST_CASE("different seeds and streams decorrelate") {
    Rng a(1), b(2);
    int same = 0;
    for (uint64_t i = 0; i < 64; ++i) {
        if (a.bits(rng_stream::kTest, i) == b.bits(rng_stream::kTest, i)) ++same;
        if (a.bits(rng_stream::kTest, i) == a.bits(rng_stream::kTest + 1, i)) ++same;
    }
    CHECK(same == 0);
}

TEST_CASE("uniform support and mean") {
    Rng rng(7);
    const int n = 10000;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        double v = rng.uniform(rng_stream::kTest, static_cast<uint64_t>(i), -0.03, 0.03);
        CHECK(v >= -0.03);
        CHECK(v < 0.03);
        acc += v;
    }
    // mean of U(-a,a) has sd a/sqrt(3n); allow 4 sigma
    const double sigma = 0.03 / std::sqrt(3.0 * n);
    CHECK(std::fabs(acc / n) < 4.0 * sigma);
}

TEST_CASE("gaussian moments") {
    Rng rng(11);
    const int n = 20000;
    double s1 = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
        double v = rng.gaussian(rng_stream::kTest, static_cast<uint64_t>(i));
        s1 += v;
        s2 += v * v;
    }
    CHECK(std::fabs(s1 / n) < 0.03);
    CHECK(std::fabs(s2 / n - 1.0) < 0.05);
}

TEST_CASE("stream view: bounded draws and shuffle determinism") {
    Rng rng(3);
    auto s = rng.stream(rng_stream::kTest);
    for (int i = 0; i < 200; ++i) {
        uint64_t v = s.next_below(17);
        CHECK(v < 17);
    }
    std::vector<int> v1{0, 1, 2, 3, 4, 5, 6, 7};
    std::vector<int> v2 = v1;
    rng.stream(99).shuffle(v1);
    rng.stream(99).shuffle(v2);
    CHECK(v1 == v2);
    CHECK(v1 != std::vector<int>({0, 1, 2, 3, 4, 5, 6, 7}));  // 8! makes identity vanishingly likely
}

TEST_CASE("fill helpers cover requested ranges") {
    Rng rng(5);
    std::vector<double> u(4096);
    rng.fill_uniform(u, rng_stream::kTest + 2, -0.03, 0.03);
    std::set<double> distinct(u.begin(), u.end());
    CHECK(distinct.size() > 4000);

    std::vector<double> g(4096);
    rng.fill_gaussian(g, rng_stream::kTest + 3, 0.0, 0.02);
    double mx = 0.0;
    for (double v : g) mx = std::max(mx, std::fabs(v));
    CHECK(mx < 0.02 * 6.0);  // 6 sigma
    CHECK(mx > 0.02);        // some spread
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "peftcl/kmeans.hpp"
#include "test_util.hpp"

using namespace peftcl;

namespace {

// independent oracle: enumerate every assignment of n points into <= k
// clusters; centroid of each nonempty cluster is its mean
double exhaustive_min_inertia(const std::vector<std::vector<double>>& pts, int k) {
    const int n = static_cast<int>(pts.size());
    const size_t dim = pts[0].size();
    int64_t total = 1;
    for (int i = 0; i < n; ++i) total *= k;
    double best = std::numeric_limits<double>::infinity();
    for (int64_t code = 0; code < total; ++code) {
        int64_t c = code;
        std::vector<int> assign(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) {
            assign[static_cast<size_t>(i)] = static_cast<int>(c % k);
            c /= k;
        }
        std::vector<std::vector<double>> mean(static_cast<size_t>(k), std::vector<double>(dim, 0.0));
        std::vector<int> cnt(static_cast<size_t>(k), 0);
        for (int i = 0; i < n; ++i) {
            ++cnt[static_cast<size_t>(assign[static_cast<size_t>(i)])];
            for (size_t j = 0; j < dim; ++j) mean[static_cast<size_t>(assign[static_cast<size_t>(i)])][j] += pts[static_cast<size_t>(i)][j];
        }
        for (int q = 0; q < k; ++q) {
            if (cnt[static_cast<size_t>(q)] > 0) {
                for (size_t j = 0; j < dim; ++j) mean[static_cast<size_t>(q)][j] /= cnt[static_cast<size_t>(q)];
            }
        }
        double inertia = 0.0;
        for (int i = 0; i < n; ++i) {
            inertia += squared_distance(pts[static_cast<size_t>(i)], mean[static_cast<size_t>(assign[static_cast<size_t>(i)])]);
        }
        best = std::min(best, inertia);
    }
    return best;
}

std::vector<std::vector<double>> random_points(int n, int dim, uint64_t stream) {
    Rng rng(31);
    std::vector<std::vector<double>> pts;
    for (int i = 0; i < n; ++i) {
        std::vector<double> p(static_cast<size_t>(dim));
        for (int j = 0; j < dim; ++j) {
            p[static_cast<size_t>(j)] = rng.uniform(stream, static_cast<uint64_t>(i * dim + j), -3.0, 3.0);
        }
        pts.push_back(std::move(p));
    }
    return pts;
}

}  // namespace

TEST_CASE("k equal to point count gives zero inertia") {
    auto pts = random_points(5, 3, rng_stream::kTest);
    auto res = kmeans(pts, 5, Rng(1), rng_stream::kKmeans);
    CHECK(res.inertia == doctest::Approx(0.0).epsilon(1e-15));
    // every point sits on its own centroid
    std::vector<bool> used(5, false);
    for (int i = 0; i < 5; ++i) {
        const int c = res.assignment[static_cast<size_t>(i)];
        CHECK(squared_distance(pts[static_cast<size_t>(i)], res.centroids[static_cast<size_t>(c)]) == 0.0);
        used[static_cast<size_t>(c)] = true;
    }
    for (bool u : used) CHECK(u);
}

TEST_CASE("two separated blobs recover blob means") {
    std::vector<std::vector<double>> pts{{0.0, 0.1}, {0.2, -0.1}, {10.0, 9.9}, {9.8, 10.1}};
    auto res = kmeans(pts, 2, Rng(2), rng_stream::kKmeans);
    CHECK(res.inertia == doctest::Approx(exhaustive_min_inertia(pts, 2)).epsilon(1e-12));
    // blob means are (0.1, 0.0) and (9.9, 10.0) in some order
    const auto& c0 = res.centroids[static_cast<size_t>(res.assignment[0])];
    CHECK(c0[0] == doctest::Approx(0.1));
    CHECK(c0[1] == doctest::Approx(0.0));
    const auto& c1 = res.centroids[static_cast<size_t>(res.assignment[2])];
    CHECK(c1[0] == doctest::Approx(9.9));
    CHECK(c1[1] == doctest::Approx(10.0));
}

TEST_CASE("assignment prefers the lowest index on exact ties") {
    // both centroids end up mirrored around 0; the middle point is equidistant
    std::vector<std::vector<double>> pts{{-1.0}, {1.0}};
    auto res = kmeans(pts, 2, Rng(3), rng_stream::kKmeans);
    // query the documented rule through the result invariant: recompute
    // nearest with ties -> lowest and expect identical assignment
    for (size_t i = 0; i < pts.size(); ++i) {
        int best = 0;
        double best_d = squared_distance(pts[i], res.centroids[0]);
        for (size_t c = 1; c < res.centroids.size(); ++c) {
            const double d = squared_distance(pts[i], res.centroids[c]);
            if (d < best_d) {
                best_d = d;
                best = static_cast<int>(c);
            }
        }
        CHECK(res.assignment[i] == best);
    }
    // constructed equidistant query
    std::vector<double> mid{0.0};
    const double d0 = squared_distance(mid, res.centroids[0]);
    const double d1 = squared_distance(mid, res.centroids[1]);
    CHECK(d0 == d1);
}

TEST_CASE("matches exhaustive-partition oracle on all tiny instances") {
    int checked = 0;
    for (int n = 2; n <= 8; ++n) {
        for (int k = 1; k <= 3 && k <= n; ++k) {
            for (int rep = 0; rep < 6; ++rep) {
                auto pts = random_points(n, 1 + rep % 3,
                                         rng_stream::kTest + 100 + static_cast<uint64_t>(n * 37 + k * 7 + rep));
                auto res = kmeans(pts, k, Rng(static_cast<uint64_t>(rep) + 5), rng_stream::kKmeans);
                const double want = exhaustive_min_inertia(pts, k);
                CHECK(res.inertia == doctest::Approx(want).epsilon(1e-9));
                ++checked;
            }
        }
    }
    CHECK(checked == 120);  // n=2 has k in {1,2}, the other six n values all of {1,2,3}
}

TEST_CASE("inertia is consistent with the reported assignment") {
    auto pts = random_points(30, 4, rng_stream::kTest + 500);
    auto res = kmeans(pts, 3, Rng(9), rng_stream::kKmeans);
    double recomputed = 0.0;
    for (size_t i = 0; i < pts.size(); ++i) {
        recomputed += squared_distance(pts[i], res.centroids[static_cast<size_t>(res.assignment[i])]);
    }
    CHECK(std::fabs(recomputed - res.inertia) < 1e-9);
}

TEST_CASE("duplicate points are handled") {
    std::vector<std::vector<double>> pts{{1.0}, {1.0}, {1.0}, {5.0}};
    auto res = kmeans(pts, 2, Rng(4), rng_stream::kKmeans);
    CHECK(res.inertia == doctest::Approx(0.0));
    auto res3 = kmeans(pts, 4, Rng(4), rng_stream::kKmeans);
    CHECK(res3.inertia == doctest::Approx(0.0));
}

TEST_CASE("k larger than point count is rejected") {
    std::vector<std::vector<double>> pts{{0.0}, {1.0}};
    CHECK_THROWS_AS(kmeans(pts, 3, Rng(1), rng_stream::kKmeans), ConfigError);
}

TEST_CASE("seeded determinism") {
    auto pts = random_points(20, 3, rng_stream::kTest + 600);
    auto r1 = kmeans(pts, 3, Rng(123), rng_stream::kKmeans);
    auto r2 = kmeans(pts, 3, Rng(123), rng_stream::kKmeans);
    CHECK(r1.assignment == r2.assignment);
    CHECK(r1.inertia == r2.inertia);
    CHECK(r1.centroids == r2.centroids);
}

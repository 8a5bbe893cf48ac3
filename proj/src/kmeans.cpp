#include "peftcl/kmeans.hpp"

#include <limits>

#include "peftcl/errors.hpp"

namespace peftcl {

double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

namespace {

int nearest_centroid(const std::vector<double>& p,
                     const std::vector<std::vector<double>>& centroids) {
    int best = 0;
    double best_d = squared_distance(p, centroids[0]);
    for (size_t c = 1; c < centroids.size(); ++c) {
        const double d = squared_distance(p, centroids[c]);
        if (d < best_d) {  // strict: ties stay with the lowest index
            best_d = d;
            best = static_cast<int>(c);
        }
    }
    return best;
}

KMeansResult run_once(const std::vector<std::vector<double>>& points, int k, Rng::Stream stream,
                      int max_iters) {
    const int n = static_cast<int>(points.size());
    const size_t dim = points[0].size();

    // k-means++ seeding
    std::vector<std::vector<double>> centroids;
    std::vector<uint8_t> chosen(static_cast<size_t>(n), 0);
    {
        const int first = static_cast<int>(stream.next_below(static_cast<uint64_t>(n)));
        centroids.push_back(points[static_cast<size_t>(first)]);
        chosen[static_cast<size_t>(first)] = 1;
        std::vector<double> d2(static_cast<size_t>(n));
        while (static_cast<int>(centroids.size()) < k) {
            double total = 0.0;
            for (int i = 0; i < n; ++i) {
                double best = std::numeric_limits<double>::infinity();
                for (const auto& c : centroids) {
                    best = std::min(best, squared_distance(points[static_cast<size_t>(i)], c));
                }
                d2[static_cast<size_t>(i)] = best;
                total += best;
            }
            int pick = -1;
            if (total > 0.0) {
                double target = stream.next_uniform01() * total;
                for (int i = 0; i < n; ++i) {
                    target -= d2[static_cast<size_t>(i)];
                    if (target <= 0.0) {
                        pick = i;
                        break;
                    }
                }
                if (pick < 0) pick = n - 1;
            }
            if (pick < 0 || chosen[static_cast<size_t>(pick)]) {
                // duplicates collapse all mass; take the first unchosen point
                for (int i = 0; i < n; ++i) {
                    if (!chosen[static_cast<size_t>(i)]) {
                        pick = i;
                        break;
                    }
                }
            }
            chosen[static_cast<size_t>(pick)] = 1;
            centroids.push_back(points[static_cast<size_t>(pick)]);
        }
    }

    std::vector<int> assignment(static_cast<size_t>(n), -1);
    for (int iter = 0; iter < max_iters; ++iter) {
        std::vector<int> next(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) {
            next[static_cast<size_t>(i)] = nearest_centroid(points[static_cast<size_t>(i)], centroids);
        }
        if (next == assignment) break;
        assignment = std::move(next);

        std::vector<std::vector<double>> sums(static_cast<size_t>(k), std::vector<double>(dim, 0.0));
        std::vector<int> counts(static_cast<size_t>(k), 0);
        for (int i = 0; i < n; ++i) {
            const int c = assignment[static_cast<size_t>(i)];
            counts[static_cast<size_t>(c)] += 1;
            for (size_t j = 0; j < dim; ++j) {
                sums[static_cast<size_t>(c)][j] += points[static_cast<size_t>(i)][j];
            }
        }
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<size_t>(c)] > 0) {
                for (size_t j = 0; j < dim; ++j) {
                    centroids[static_cast<size_t>(c)][j] =
                        sums[static_cast<size_t>(c)][j] / counts[static_cast<size_t>(c)];
                }
            } else {
                // reseed an empty cluster to the point farthest from its
                // current centroid (lowest index wins ties)
                int far = 0;
                double far_d = -1.0;
                for (int i = 0; i < n; ++i) {
                    const double d = squared_distance(
                        points[static_cast<size_t>(i)],
                        centroids[static_cast<size_t>(assignment[static_cast<size_t>(i)])]);
                    if (d > far_d) {
                        far_d = d;
                        far = i;
                    }
                }
                centroids[static_cast<size_t>(c)] = points[static_cast<size_t>(far)];
                assignment[static_cast<size_t>(far)] = c;
            }
        }
    }

    // final consistent assignment + inertia against the returned centroids
    KMeansResult result;
    result.centroids = std::move(centroids);
    result.assignment.resize(static_cast<size_t>(n));
    result.inertia = 0.0;
    for (int i = 0; i < n; ++i) {
        const int c = nearest_centroid(points[static_cast<size_t>(i)], result.centroids);
        result.assignment[static_cast<size_t>(i)] = c;
        result.inertia +=
            squared_distance(points[static_cast<size_t>(i)], result.centroids[static_cast<size_t>(c)]);
    }
    return result;
}

}  // namespace

KMeansResult kmeans(const std::vector<std::vector<double>>& points, int k, const Rng& rng,
                    uint64_t stream, int max_iters, int restarts) {
    if (k < 1) throw ConfigError("k must be >= 1");
    if (static_cast<size_t>(k) > points.size()) {
        throw ConfigError("k=" + std::to_string(k) + " exceeds point count " +
                          std::to_string(points.size()));
    }
    if (restarts < 1) throw ConfigError("restarts must be >= 1");
    KMeansResult best;
    bool have = false;
    for (int r = 0; r < restarts; ++r) {
        KMeansResult cand =
            run_once(points, k, rng.stream(stream + static_cast<uint64_t>(r)), max_iters);
        if (!have || cand.inertia < best.inertia) {
            best = std::move(cand);
            have = true;
        }
    }
    return best;
}

}  // namespace peftcl

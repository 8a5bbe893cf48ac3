#pragma once

#include <vector>

#include "peftcl/rng.hpp"

namespace peftcl {

struct KMeansResult {
    std::vector<std::vector<double>> centroids;  // k vectors
    std::vector<int> assignment;                 // per point, nearest centroid (ties -> lowest)
    double inertia = 0.0;                        // sum of squared distances
};

// k-means++ seeding, Lloyd iterations to an assignment fixpoint, empty
// clusters reseeded to the farthest point. Runs `restarts` deterministic
// restarts on sub-streams [stream, stream+restarts) and keeps the lowest
// inertia (first found wins ties).
KMeansResult kmeans(const std::vector<std::vector<double>>& points, int k, const Rng& rng,
                    uint64_t stream, int max_iters = 100, int restarts = 8);

double squared_distance(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace peftcl

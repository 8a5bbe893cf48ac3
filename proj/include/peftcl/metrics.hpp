#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "peftcl/errors.hpp"

namespace peftcl {

// R[i][j] = test accuracy on dataset j after training through dataset i;
// defined exactly on the lower triangle
struct AccuracyMatrix {
    std::vector<std::vector<double>> r;  // row i has i+1 entries
    std::vector<int64_t> test_sizes;     // per task

    explicit AccuracyMatrix(int tasks = 0);
    int tasks() const { return static_cast<int>(r.size()); }
    double at(int i, int j) const;
    void set(int i, int j, double v);
    void validate() const;  // triangle shape and [0,1] entries
};

// Eq. 3 micro average: total correct over total test size
double average_accuracy(const std::vector<int64_t>& correct, const std::vector<int64_t>& sizes);
// same, reconstructed from the final row of R
double average_accuracy(const AccuracyMatrix& m);

// mean over tasks of (peak accuracy ever seen) - (final accuracy)
double forgetting(const AccuracyMatrix& m);
// mean over tasks of (final accuracy) - (accuracy right after training it)
double backward_transfer(const AccuracyMatrix& m);

// accuracy partitioned by expert-selection correctness; a partition with no
// samples is undefined
struct ConditionalAccuracy {
    double overall = 0.0;
    std::optional<double> right_expert;
    std::optional<double> wrong_expert;
};
struct SelectionOutcome {
    bool selected_correct = false;
    bool prediction_correct = false;
};
ConditionalAccuracy conditional_accuracy(const std::vector<SelectionOutcome>& outcomes);

}  // namespace peftcl

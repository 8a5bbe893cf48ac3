#include "peftcl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace peftcl {

AccuracyMatrix::AccuracyMatrix(int tasks) {
    r.resize(static_cast<size_t>(tasks));
    for (int i = 0; i < tasks; ++i) r[static_cast<size_t>(i)].assign(static_cast<size_t>(i) + 1, 0.0);
    test_sizes.assign(static_cast<size_t>(tasks), 0);
}

double AccuracyMatrix::at(int i, int j) const {
    if (i < 0 || i >= tasks() || j < 0 || j > i) {
        throw ContractError("R[" + std::to_string(i) + "][" + std::to_string(j) +
                            "] outside the lower triangle");
    }
    return r[static_cast<size_t>(i)][static_cast<size_t>(j)];
}

void AccuracyMatrix::set(int i, int j, double v) {
    if (i < 0 || i >= tasks() || j < 0 || j > i) {
        throw ContractError("R[" + std::to_string(i) + "][" + std::to_string(j) +
                            "] outside the lower triangle");
    }
    if (v < 0.0 || v > 1.0 || !std::isfinite(v)) {
        throw ContractError("accuracy " + std::to_string(v) + " outside [0,1]");
    }
    r[static_cast<size_t>(i)][static_cast<size_t>(j)] = v;
}

void AccuracyMatrix::validate() const {
    for (int i = 0; i < tasks(); ++i) {
        if (static_cast<int>(r[static_cast<size_t>(i)].size()) != i + 1) {
            throw ContractError("row " + std::to_string(i) + " is not lower-triangular");
        }
        for (double v : r[static_cast<size_t>(i)]) {
            if (v < 0.0 || v > 1.0 || !std::isfinite(v)) {
                throw ContractError("accuracy entry outside [0,1]");
            }
        }
    }
}

double average_accuracy(const std::vector<int64_t>& correct, const std::vector<int64_t>& sizes) {
    if (sizes.empty() || correct.size() != sizes.size()) {
        throw ContractError("average_accuracy needs matching per-task counts");
    }
    int64_t num = 0, den = 0;
    for (size_t t = 0; t < sizes.size(); ++t) {
        if (sizes[t] <= 0) throw ContractError("empty test set at task " + std::to_string(t));
        if (correct[t] < 0 || correct[t] > sizes[t]) throw ContractError("correct count out of range");
        num += correct[t];
        den += sizes[t];
    }
    return static_cast<double>(num) / static_cast<double>(den);
}

double average_accuracy(const AccuracyMatrix& m) {
    if (m.tasks() == 0) throw ContractError("empty accuracy matrix");
    double num = 0.0;
    int64_t den = 0;
    const int last = m.tasks() - 1;
    for (int t = 0; t < m.tasks(); ++t) {
        const int64_t sz = m.test_sizes[static_cast<size_t>(t)];
        if (sz <= 0) throw ContractError("empty test set at task " + std::to_string(t));
        num += m.at(last, t) * static_cast<double>(sz);
        den += sz;
    }
    return num / static_cast<double>(den);
}

double forgetting(const AccuracyMatrix& m) {
    const int t_total = m.tasks();
    if (t_total < 2) throw ContractError("forgetting undefined for fewer than 2 tasks");
    double acc = 0.0;
    for (int t = 0; t < t_total - 1; ++t) {
        double peak = 0.0;
        for (int i = t; i < t_total; ++i) peak = std::max(peak, m.at(i, t));
        acc += peak - m.at(t_total - 1, t);
    }
    return acc / (t_total - 1);
}

double backward_transfer(const AccuracyMatrix& m) {
    const int t_total = m.tasks();
    if (t_total < 2) throw ContractError("backward transfer undefined for fewer than 2 tasks");
    double acc = 0.0;
    for (int t = 0; t < t_total - 1; ++t) acc += m.at(t_total - 1, t) - m.at(t, t);
    return acc / (t_total - 1);
}

ConditionalAccuracy conditional_accuracy(const std::vector<SelectionOutcome>& outcomes) {
    if (outcomes.empty()) throw ContractError("conditional_accuracy on an empty stream");
    int64_t right_n = 0, right_ok = 0, wrong_n = 0, wrong_ok = 0;
    for (const auto& o : outcomes) {
        if (o.selected_correct) {
            ++right_n;
            right_ok += o.prediction_correct ? 1 : 0;
        } else {
            ++wrong_n;
            wrong_ok += o.prediction_correct ? 1 : 0;
        }
    }
    ConditionalAccuracy out;
    out.overall = static_cast<double>(right_ok + wrong_ok) / static_cast<double>(outcomes.size());
    if (right_n > 0) out.right_expert = static_cast<double>(right_ok) / static_cast<double>(right_n);
    if (wrong_n > 0) out.wrong_expert = static_cast<double>(wrong_ok) / static_cast<double>(wrong_n);
    return out;
}

}  // namespace peftcl

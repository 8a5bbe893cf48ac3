#pragma once

#include <unordered_map>
#include <vector>

#include "peftcl/tensor.hpp"

namespace peftcl {

enum class OptKind { sgd_momentum, adamw };
enum class LrSchedule { constant, cosine };

struct OptimizerConfig {
    OptKind kind = OptKind::sgd_momentum;
    double lr = 0.001;
    double momentum = 0.9;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    LrSchedule schedule = LrSchedule::constant;
    int t_max = 0;       // cosine period, in schedule steps
    double eta_min = 0.0;
};

// Moment buffers are keyed by tensor identity, so a parameter stepped only
// when selected (L2X sparse updates) keeps its own history and step count.
// The schedule index advances explicitly (per epoch in the training loops),
// matching cosine annealing with an epoch interval.
class Optimizer {
  public:
    explicit Optimizer(OptimizerConfig cfg) : cfg_(cfg) {}

    const OptimizerConfig& config() const { return cfg_; }

    void set_schedule_step(int t) { schedule_step_ = t; }
    int schedule_step() const { return schedule_step_; }
    // schedule applied before the step
    double current_lr() const;

    // applies one update to each tensor using its grad; absent grad = zero.
    // Frozen parameters are simply never passed in.
    void step(const std::vector<TensorPtr>& params);

    void reset_state() {
        slots_.clear();
    }

  private:
    struct Slot {
        std::vector<double> m;  // momentum / first moment
        std::vector<double> v;  // second moment (adamw)
        int64_t steps = 0;
    };

    OptimizerConfig cfg_;
    std::unordered_map<Tensor*, Slot> slots_;
    int schedule_step_ = 0;
};

}  // namespace peftcl

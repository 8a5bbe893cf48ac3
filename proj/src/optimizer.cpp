#include "peftcl/optimizer.hpp"

#include <cmath>

namespace peftcl {

double Optimizer::current_lr() const {
    if (cfg_.schedule == LrSchedule::constant) return cfg_.lr;
    if (cfg_.t_max <= 0) throw ConfigError("cosine schedule requires t_max > 0");
    const int t = std::min(schedule_step_, cfg_.t_max);
    return cfg_.eta_min +
           0.5 * (cfg_.lr - cfg_.eta_min) * (1.0 + std::cos(M_PI * t / cfg_.t_max));
}

void Optimizer::step(const std::vector<TensorPtr>& params) {
    const double lr = current_lr();
    for (const auto& p : params) {
        const int64_t n = p->size();
        Slot& slot = slots_[p.get()];
        if (slot.m.empty()) slot.m.assign(static_cast<size_t>(n), 0.0);
        double* theta = p->ptr();
        const double* g = p->has_grad() ? p->grad().data() : nullptr;

        if (cfg_.kind == OptKind::sgd_momentum) {
            // v <- mu v + (g + wd*theta); theta <- theta - lr v
            for (int64_t i = 0; i < n; ++i) {
                const double gi = (g ? g[i] : 0.0) + cfg_.weight_decay * theta[i];
                slot.m[static_cast<size_t>(i)] = cfg_.momentum * slot.m[static_cast<size_t>(i)] + gi;
                theta[i] -= lr * slot.m[static_cast<size_t>(i)];
            }
        } else {
            if (slot.v.empty()) slot.v.assign(static_cast<size_t>(n), 0.0);
            slot.steps += 1;
            const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(slot.steps));
            const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(slot.steps));
            for (int64_t i = 0; i < n; ++i) {
                const double gi = g ? g[i] : 0.0;
                double& m = slot.m[static_cast<size_t>(i)];
                double& v = slot.v[static_cast<size_t>(i)];
                m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * gi;
                v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * gi * gi;
                const double mhat = m / bc1;
                const double vhat = v / bc2;
                // decoupled weight decay
                theta[i] -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * theta[i]);
            }
        }
    }
}

}  // namespace peftcl

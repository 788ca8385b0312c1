#include "optimizer.hpp"

#include <cmath>

#include "error.hpp"

namespace exbehrt {

BertAdam::BertAdam(ModelParams& params, OptimConfig config) : params_(params), config_(config) {
    if (config_.lr <= 0.0) throw usage_error("learning rate must be positive");
    if (config_.warmup && config_.total_steps <= 0)
        throw usage_error("warmup schedule needs total_steps");
    params_.for_each([&](Param& p) {
        m_.emplace_back(p.value.rows, p.value.cols);
        v_.emplace_back(p.value.rows, p.value.cols);
    });
}

double BertAdam::lr_at(int t) const {
    if (!config_.warmup) return config_.lr;
    const int total = config_.total_steps;
    int warm = static_cast<int>(std::lround(config_.warmup_proportion * total));
    if (warm < 1) warm = 1;
    if (warm >= total) return config_.lr; // degenerate schedule: all warmup
    if (t <= warm) return config_.lr * static_cast<double>(t) / warm;
    const double frac = static_cast<double>(total - t) / (total - warm);
    return config_.lr * std::max(0.0, frac);
}

void BertAdam::step() {
    ++t_;
    const double lr_t = lr_at(t_);
    size_t idx = 0;
    params_.for_each([&](Param& p) {
        Mat& m = m_[idx];
        Mat& v = v_[idx];
        ++idx;
        const int cols = p.value.cols;
        for (int r = 0; r < p.value.rows; ++r) {
            if (r == p.frozen_row) {
                for (int c = 0; c < cols; ++c) p.grad.at(r, c) = 0.0;
                continue;
            }
            for (int c = 0; c < cols; ++c) {
                const double g = p.grad.at(r, c);
                double& mm = m.at(r, c);
                double& vv = v.at(r, c);
                mm = config_.beta1 * mm + (1.0 - config_.beta1) * g;
                vv = config_.beta2 * vv + (1.0 - config_.beta2) * g * g;
                // No bias correction, and weight decay is decoupled from the
                // moment estimate.
                double update = mm / (std::sqrt(vv) + config_.eps);
                update += config_.weight_decay * p.value.at(r, c);
                p.value.at(r, c) -= lr_t * update;
                p.grad.at(r, c) = 0.0;
            }
        }
    });
}

} // namespace exbehrt

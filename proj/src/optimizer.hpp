#pragma once

// Adam without bias correction, plus the linear warmup/decay schedule and
// decoupled weight decay that ride along when warmup is enabled. Frozen
// parameter rows (PAD embeddings) are never touched.

#include <vector>

#include "model.hpp"
#include "tensor.hpp"

namespace exbehrt {

struct OptimConfig {
    double lr = 3e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-6;
    double weight_decay = 0.0;
    bool warmup = false;            // linear ramp to lr, then linear decay to 0
    double warmup_proportion = 0.1;
    int total_steps = 0;            // required when warmup is on
};

class BertAdam {
public:
    BertAdam(ModelParams& params, OptimConfig config);

    // Consumes the accumulated gradients (and zeroes them).
    void step();

    // Schedule value at a given 1-based step; constant lr without warmup.
    double lr_at(int t) const;
    int steps_taken() const { return t_; }

private:
    ModelParams& params_;
    OptimConfig config_;
    std::vector<Mat> m_, v_; // moments, indexed in for_each order
    int t_ = 0;
};

} // namespace exbehrt

#pragma once

#include <cstddef>
#include <vector>

#include "bic/network.hpp"

namespace bic {

/// Piecewise-constant learning rate: base_lr times the product of every
/// multiplier whose epoch threshold has been reached.
struct LrSchedule {
    struct Step {
        std::size_t epoch_threshold;
        double multiplier;
    };

    double base_lr = 0.1;
    std::vector<Step> steps;

    /// Decays by `factor` at each fraction of `total_epochs` (rounded down).
    static LrSchedule at_fractions(double base_lr, std::size_t total_epochs,
                                   const std::vector<double>& fractions, double factor);

    double lr(std::size_t epoch) const;
};

/// SGD with momentum and L2 weight decay:
///   v <- momentum * v + grad + weight_decay * param
///   param <- param - lr(epoch) * v
class SgdOptimizer {
public:
    SgdOptimizer(const NetworkModel& model, double momentum, double weight_decay,
                 LrSchedule schedule);

    double momentum() const { return momentum_; }
    double weight_decay() const { return weight_decay_; }
    const LrSchedule& schedule() const { return schedule_; }
    const Gradients& velocity() const { return velocity_; }

    /// Throws NumericError naming the parameter if any gradient is non-finite,
    /// ShapeError if `grads` does not mirror the model. The model is untouched on error.
    void step(NetworkModel& model, const Gradients& grads, std::size_t epoch);

private:
    double momentum_;
    double weight_decay_;
    LrSchedule schedule_;
    Gradients velocity_;
};

}  // namespace bic

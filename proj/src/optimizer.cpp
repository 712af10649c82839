#include "bic/optimizer.hpp"

#include <cmath>
#include <string>

#include "bic/errors.hpp"

namespace bic {

LrSchedule LrSchedule::at_fractions(double base_lr, std::size_t total_epochs,
                                    const std::vector<double>& fractions, double factor) {
    LrSchedule s{base_lr, {}};
    for (double f : fractions) {
        s.steps.push_back(
            {static_cast<std::size_t>(std::floor(f * static_cast<double>(total_epochs))), factor});
    }
    return s;
}

double LrSchedule::lr(std::size_t epoch) const {
    double rate = base_lr;
    for (const auto& s : steps) {
        if (epoch >= s.epoch_threshold) rate *= s.multiplier;
    }
    return rate;
}

SgdOptimizer::SgdOptimizer(const NetworkModel& model, double momentum, double weight_decay,
                           LrSchedule schedule)
    : momentum_(momentum),
      weight_decay_(weight_decay),
      schedule_(std::move(schedule)),
      velocity_(zero_gradients(model)) {
    if (!(schedule_.base_lr > 0.0)) throw ArgumentError("learning rate must be positive");
    for (const auto& s : schedule_.steps) {
        if (!(s.multiplier > 0.0)) throw ArgumentError("lr multipliers must be positive");
    }
    if (momentum_ < 0.0 || weight_decay_ < 0.0) {
        throw ArgumentError("momentum and weight decay must be non-negative");
    }
}

void SgdOptimizer::step(NetworkModel& model, const Gradients& grads, std::size_t epoch) {
    auto& layers = model.layers();
    if (grads.size() != layers.size() || velocity_.size() != layers.size()) {
        throw ShapeError("gradient layer count does not match model");
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
        if (grads[l].weights.rows() != layers[l].out_dim() ||
            grads[l].weights.cols() != layers[l].in_dim() ||
            grads[l].bias.size() != layers[l].bias.size() ||
            velocity_[l].weights.rows() != layers[l].out_dim()) {
            throw ShapeError("gradient shape mismatch at layer " + std::to_string(l));
        }
        const auto gw = grads[l].weights.values();
        for (std::size_t i = 0; i < gw.size(); ++i) {
            if (!std::isfinite(gw[i])) {
                throw NumericError("non-finite gradient at layer " + std::to_string(l) +
                                   " weights[" + std::to_string(i / layers[l].in_dim()) + "," +
                                   std::to_string(i % layers[l].in_dim()) + "]");
            }
        }
        for (std::size_t i = 0; i < grads[l].bias.size(); ++i) {
            if (!std::isfinite(grads[l].bias[i])) {
                throw NumericError("non-finite gradient at layer " + std::to_string(l) +
                                   " bias[" + std::to_string(i) + "]");
            }
        }
    }

    const double rate = schedule_.lr(epoch);
    auto update = [&](std::span<double> param, std::span<const double> grad,
                      std::span<double> vel) {
        for (std::size_t i = 0; i < param.size(); ++i) {
            vel[i] = momentum_ * vel[i] + grad[i] + weight_decay_ * param[i];
            param[i] -= rate * vel[i];
        }
    };
    for (std::size_t l = 0; l < layers.size(); ++l) {
        update(layers[l].weights.values(), grads[l].weights.values(),
               velocity_[l].weights.values());
        update(layers[l].bias, grads[l].bias, velocity_[l].bias);
    }
}

}  // namespace bic

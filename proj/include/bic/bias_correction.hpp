#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "bic/losses.hpp"
#include "bic/matrix.hpp"
#include "bic/network.hpp"

namespace bic {

/// Linear correction of the newest classes' logits: q_k = alpha * o_k + beta for
/// k in [first_new, first_new + new_count); older logits pass through.
struct BiasParams {
    double alpha = 1.0;
    double beta = 0.0;
    std::size_t first_new = 0;
    std::size_t new_count = 0;

    static BiasParams identity(std::size_t old_classes, std::size_t new_classes) {
        return {1.0, 0.0, old_classes, new_classes};
    }

    friend bool operator==(const BiasParams&, const BiasParams&) = default;
};

/// Throws ConfigError unless params cover exactly [old_classes, logits.size()).
std::vector<double> apply_bias(std::span<const double> logits, std::size_t old_classes,
                               const BiasParams& params);
DenseMatrix apply_bias(const DenseMatrix& logits, std::size_t old_classes,
                       const BiasParams& params);

struct BiasGradient {
    double d_alpha = 0.0;
    double d_beta = 0.0;
};

/// Chains dL/dq back through apply_bias: d_alpha = sum_{k>=n} g_k o_k, d_beta = sum_{k>=n} g_k.
BiasGradient bias_param_gradient(const DenseMatrix& raw_logits, std::size_t old_classes,
                                 const DenseMatrix& grad_corrected);

/// Mean bias loss at (alpha, beta) on cached raw logits.
double mean_bias_loss(const DenseMatrix& raw_logits, std::span<const ClassId> labels,
                      std::size_t old_classes, double alpha, double beta);

enum class BiasOptimizer {
    /// Fixed-step gradient descent on (alpha, beta).
    gradient_descent,
    /// Damped Newton with Armijo backtracking; the loss is convex in (alpha, beta).
    newton,
};

/// Closed feasible region for (alpha, beta).
struct BiasBox {
    double alpha_min = 0.0;
    double alpha_max = 2.0;
    double beta_min = -5.0;
    double beta_max = 5.0;
    bool contains(double alpha, double beta) const {
        return alpha >= alpha_min && alpha <= alpha_max && beta >= beta_min && beta <= beta_max;
    }
    friend bool operator==(const BiasBox&, const BiasBox&) = default;
};

struct BiasFitConfig {
    std::size_t epochs = 200;
    double learning_rate = 0.001;
    /// 0 means full batch. Only used by gradient_descent.
    std::size_t batch_size = 0;
    BiasOptimizer method = BiasOptimizer::newton;
    /// When set, the fit is restricted to the box: gradient descent projects
    /// each step, Newton also searches the four edges.
    std::optional<BiasBox> box = BiasBox{};
};

struct BiasFitResult {
    BiasParams params;
    double loss = 0.0;
    double initial_loss = 0.0;
    std::size_t iterations = 0;
};

/// Fits (alpha, beta) from (1, 0) on cached validation logits and returns the
/// best iterate seen, so the result is never worse than the identity.
/// Throws DataError if the labels lack old-class or new-class samples.
BiasFitResult fit_bias_on_logits(const DenseMatrix& raw_logits, std::span<const ClassId> labels,
                                 std::size_t old_classes, std::size_t new_classes,
                                 const BiasFitConfig& cfg);

/// Computes validation logits once with the frozen network, then fits.
BiasFitResult fit_bias(const FrozenModel& model, const DenseMatrix& val_inputs,
                       std::span<const ClassId> val_labels, std::size_t old_classes,
                       std::size_t new_classes, const BiasFitConfig& cfg);

struct BiasGrid {
    double alpha_min = 0.0;
    double alpha_max = 2.0;
    std::size_t alpha_steps = 201;
    double beta_min = -5.0;
    double beta_max = 5.0;
    std::size_t beta_steps = 201;
};

/// Exhaustive evaluation of mean_bias_loss over an inclusive grid. Ties go to
/// the smallest |alpha - 1|, then the smallest |beta|.
BiasFitResult grid_search_bias(const DenseMatrix& raw_logits, std::span<const ClassId> labels,
                               std::size_t old_classes, std::size_t new_classes,
                               const BiasGrid& grid);

}  // namespace bic

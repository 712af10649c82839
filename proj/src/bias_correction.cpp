#include "bic/bias_correction.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "bic/errors.hpp"

namespace bic {
namespace {

void check_range(std::size_t width, std::size_t old_classes, const BiasParams& params) {
    if (params.first_new != old_classes || params.first_new + params.new_count != width) {
        throw ConfigError("bias parameters cover classes [" + std::to_string(params.first_new) +
                          ", " + std::to_string(params.first_new + params.new_count) +
                          ") but logits need [" + std::to_string(old_classes) + ", " +
                          std::to_string(width) + ")");
    }
}

void check_problem(const DenseMatrix& logits, std::span<const ClassId> labels,
                   std::size_t old_classes, std::size_t new_classes) {
    if (logits.rows() == 0) throw DataError("bias fit: empty validation data");
    if (labels.size() != logits.rows()) throw ShapeError("bias fit: label count mismatch");
    if (logits.cols() != old_classes + new_classes || new_classes == 0) {
        throw ShapeError("bias fit: logits have " + std::to_string(logits.cols()) +
                         " columns, expected " + std::to_string(old_classes + new_classes));
    }
    bool has_old = false;
    bool has_new = false;
    for (ClassId y : labels) {
        if (y >= logits.cols()) throw ArgumentError("bias fit: label out of range");
        (y < old_classes ? has_old : has_new) = true;
    }
    if (!has_old) throw DataError("bias fit: validation set has no old-class samples");
    if (!has_new) throw DataError("bias fit: validation set has no new-class samples");
}

struct Derivatives {
    double loss = 0.0;
    std::array<double, 2> grad{};
    std::array<double, 3> hess{};  // aa, ab, bb
};

Derivatives evaluate(const DenseMatrix& logits, std::span<const ClassId> labels,
                     std::size_t old_classes, double alpha, double beta, bool want_hessian) {
    Derivatives d;
    std::vector<double> q(logits.cols());
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        auto o = logits.row(r);
        for (std::size_t k = 0; k < o.size(); ++k) {
            q[k] = k < old_classes ? o[k] : alpha * o[k] + beta;
        }
        const double lse = log_sum_exp(q);
        d.loss += lse - q[labels[r]];
        double s_b = 0.0, s_a = 0.0, s_aa = 0.0;
        for (std::size_t k = old_classes; k < o.size(); ++k) {
            const double p = std::exp(q[k] - lse);
            s_b += p;
            s_a += p * o[k];
            s_aa += p * o[k] * o[k];
        }
        d.grad[0] += s_a;
        d.grad[1] += s_b;
        if (labels[r] >= old_classes) {
            d.grad[0] -= o[labels[r]];
            d.grad[1] -= 1.0;
        }
        if (want_hessian) {
            d.hess[0] += s_aa - s_a * s_a;
            d.hess[1] += s_a - s_a * s_b;
            d.hess[2] += s_b - s_b * s_b;
        }
    }
    const double inv = 1.0 / static_cast<double>(logits.rows());
    d.loss *= inv;
    for (double& g : d.grad) g *= inv;
    for (double& h : d.hess) h *= inv;
    return d;
}

BiasFitResult fit_gradient_descent(const DenseMatrix& logits, std::span<const ClassId> labels,
                                   std::size_t n, std::size_t m, const BiasFitConfig& cfg) {
    BiasFitResult best{BiasParams::identity(n, m), 0.0, 0.0, 0};
    best.initial_loss = best.loss = mean_bias_loss(logits, labels, n, 1.0, 0.0);
    double alpha = 1.0;
    double beta = 0.0;
    const std::size_t batch =
        cfg.batch_size == 0 ? logits.rows() : std::min(cfg.batch_size, logits.rows());
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t start = 0; start < logits.rows(); start += batch) {
            const std::size_t count = std::min(batch, logits.rows() - start);
            DenseMatrix chunk(count, logits.cols());
            for (std::size_t r = 0; r < count; ++r) {
                auto src = logits.row(start + r);
                std::copy(src.begin(), src.end(), chunk.row(r).begin());
            }
            const auto d = evaluate(chunk, labels.subspan(start, count), n, alpha, beta, false);
            alpha -= cfg.learning_rate * d.grad[0];
            beta -= cfg.learning_rate * d.grad[1];
            if (cfg.box) {
                alpha = std::clamp(alpha, cfg.box->alpha_min, cfg.box->alpha_max);
                beta = std::clamp(beta, cfg.box->beta_min, cfg.box->beta_max);
            }
        }
        const double loss = mean_bias_loss(logits, labels, n, alpha, beta);
        if (loss < best.loss) {
            best.loss = loss;
            best.params.alpha = alpha;
            best.params.beta = beta;
        }
        best.iterations = epoch + 1;
    }
    return best;
}

BiasFitResult fit_newton(const DenseMatrix& logits, std::span<const ClassId> labels,
                         std::size_t n, std::size_t m, const BiasFitConfig& cfg) {
    BiasFitResult best{BiasParams::identity(n, m), 0.0, 0.0, 0};
    double alpha = 1.0;
    double beta = 0.0;
    Derivatives d = evaluate(logits, labels, n, alpha, beta, true);
    best.initial_loss = best.loss = d.loss;

    for (std::size_t it = 0; it < cfg.epochs; ++it) {
        const double gnorm = std::hypot(d.grad[0], d.grad[1]);
        if (gnorm < 1e-12) break;
        // Levenberg-style damping keeps the 2x2 system positive definite.
        const double damp = 1e-10 * (1.0 + std::abs(d.hess[0]) + std::abs(d.hess[2]));
        const double haa = d.hess[0] + damp;
        const double hbb = d.hess[2] + damp;
        const double hab = d.hess[1];
        const double det = haa * hbb - hab * hab;
        double step_a = -d.grad[0];
        double step_b = -d.grad[1];
        if (det > 0.0) {
            const double na = -(hbb * d.grad[0] - hab * d.grad[1]) / det;
            const double nb = -(haa * d.grad[1] - hab * d.grad[0]) / det;
            if (na * d.grad[0] + nb * d.grad[1] < 0.0) {
                step_a = na;
                step_b = nb;
            }
        }
        const double slope = step_a * d.grad[0] + step_b * d.grad[1];
        double t = 1.0;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls, t *= 0.5) {
            const double a = alpha + t * step_a;
            const double b = beta + t * step_b;
            const double loss = mean_bias_loss(logits, labels, n, a, b);
            if (std::isfinite(loss) && loss <= d.loss + 1e-4 * t * slope) {
                alpha = a;
                beta = b;
                accepted = true;
                break;
            }
        }
        best.iterations = it + 1;
        if (!accepted) break;
        d = evaluate(logits, labels, n, alpha, beta, true);
        if (d.loss < best.loss) {
            best.loss = d.loss;
            best.params.alpha = alpha;
            best.params.beta = beta;
        }
    }
    return best;
}

/// Golden-section minimum of a convex function on [lo, hi].
template <typename F>
std::pair<double, double> minimize_on_segment(F f, double lo, double hi) {
    const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = hi - ratio * (hi - lo), x2 = lo + ratio * (hi - lo);
    double f1 = f(x1), f2 = f(x2);
    for (int it = 0; it < 80 && hi - lo > 1e-12; ++it) {
        if (f1 <= f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = f(x2);
        }
    }
    std::pair<double, double> best{lo, f(lo)};
    for (double x : {hi, x1, x2}) {
        const double v = f(x);
        if (v < best.second) best = {x, v};
    }
    return best;
}

/// The loss is convex, so the box minimum is the unconstrained one when that
/// lies inside, and otherwise sits on an edge.
BiasFitResult fit_newton_boxed(const DenseMatrix& logits, std::span<const ClassId> labels,
                               std::size_t n, std::size_t m, const BiasFitConfig& cfg) {
    const BiasBox& box = *cfg.box;
    BiasFitResult best = fit_newton(logits, labels, n, m, cfg);
    if (!box.contains(best.params.alpha, best.params.beta)) {
        best.params = BiasParams::identity(n, m);
        best.loss = best.initial_loss;
    }
    auto consider = [&](double a, double b, double loss) {
        if (loss < best.loss) {
            best.loss = loss;
            best.params.alpha = a;
            best.params.beta = b;
        }
    };
    for (double a : {box.alpha_min, box.alpha_max}) {
        auto [b, loss] = minimize_on_segment(
            [&](double x) { return mean_bias_loss(logits, labels, n, a, x); }, box.beta_min,
            box.beta_max);
        consider(a, b, loss);
    }
    for (double b : {box.beta_min, box.beta_max}) {
        auto [a, loss] = minimize_on_segment(
            [&](double x) { return mean_bias_loss(logits, labels, n, x, b); }, box.alpha_min,
            box.alpha_max);
        consider(a, b, loss);
    }
    return best;
}

}  // namespace

std::vector<double> apply_bias(std::span<const double> logits, std::size_t old_classes,
                               const BiasParams& params) {
    check_range(logits.size(), old_classes, params);
    std::vector<double> q(logits.begin(), logits.end());
    for (std::size_t k = old_classes; k < q.size(); ++k) q[k] = params.alpha * q[k] + params.beta;
    return q;
}

DenseMatrix apply_bias(const DenseMatrix& logits, std::size_t old_classes,
                       const BiasParams& params) {
    check_range(logits.cols(), old_classes, params);
    DenseMatrix q = logits;
    for (std::size_t r = 0; r < q.rows(); ++r) {
        auto row = q.row(r);
        for (std::size_t k = old_classes; k < row.size(); ++k) {
            row[k] = params.alpha * row[k] + params.beta;
        }
    }
    return q;
}

BiasGradient bias_param_gradient(const DenseMatrix& raw_logits, std::size_t old_classes,
                                 const DenseMatrix& grad_corrected) {
    if (raw_logits.rows() != grad_corrected.rows() || raw_logits.cols() != grad_corrected.cols()) {
        throw ShapeError("bias_param_gradient: logits and gradient shapes differ");
    }
    BiasGradient g;
    for (std::size_t r = 0; r < raw_logits.rows(); ++r) {
        auto o = raw_logits.row(r);
        auto dq = grad_corrected.row(r);
        for (std::size_t k = old_classes; k < o.size(); ++k) {
            g.d_alpha += dq[k] * o[k];
            g.d_beta += dq[k];
        }
    }
    return g;
}

double mean_bias_loss(const DenseMatrix& raw_logits, std::span<const ClassId> labels,
                      std::size_t old_classes, double alpha, double beta) {
    if (labels.size() != raw_logits.rows()) throw ShapeError("bias loss: label count mismatch");
    for (ClassId y : labels) {
        if (y >= raw_logits.cols()) throw ArgumentError("bias loss: label out of range");
    }
    std::vector<double> q(raw_logits.cols());
    double total = 0.0;
    for (std::size_t r = 0; r < raw_logits.rows(); ++r) {
        auto o = raw_logits.row(r);
        for (std::size_t k = 0; k < o.size(); ++k) {
            q[k] = k < old_classes ? o[k] : alpha * o[k] + beta;
        }
        total += log_sum_exp(q) - q[labels[r]];
    }
    return raw_logits.rows() == 0 ? 0.0 : total / static_cast<double>(raw_logits.rows());
}

BiasFitResult fit_bias_on_logits(const DenseMatrix& raw_logits, std::span<const ClassId> labels,
                                 std::size_t old_classes, std::size_t new_classes,
                                 const BiasFitConfig& cfg) {
    check_problem(raw_logits, labels, old_classes, new_classes);
    if (cfg.epochs == 0) throw ArgumentError("bias fit: epochs must be >= 1");
    if (cfg.box && !cfg.box->contains(1.0, 0.0)) {
        throw ArgumentError("bias fit: box must contain (1, 0)");
    }
    if (cfg.method == BiasOptimizer::gradient_descent) {
        if (!(cfg.learning_rate > 0.0)) throw ArgumentError("bias fit: learning rate must be > 0");
        return fit_gradient_descent(raw_logits, labels, old_classes, new_classes, cfg);
    }
    if (cfg.box) return fit_newton_boxed(raw_logits, labels, old_classes, new_classes, cfg);
    return fit_newton(raw_logits, labels, old_classes, new_classes, cfg);
}

BiasFitResult fit_bias(const FrozenModel& model, const DenseMatrix& val_inputs,
                       std::span<const ClassId> val_labels, std::size_t old_classes,
                       std::size_t new_classes, const BiasFitConfig& cfg) {
    if (val_inputs.rows() == 0) throw DataError("bias fit: empty validation data");
    const DenseMatrix logits = model.forward(val_inputs);
    return fit_bias_on_logits(logits, val_labels, old_classes, new_classes, cfg);
}

BiasFitResult grid_search_bias(const DenseMatrix& raw_logits, std::span<const ClassId> labels,
                               std::size_t old_classes, std::size_t new_classes,
                               const BiasGrid& grid) {
    if (raw_logits.rows() == 0) throw DataError("grid search: empty data");
    if (labels.size() != raw_logits.rows()) throw ShapeError("grid search: label count mismatch");
    if (raw_logits.cols() != old_classes + new_classes) {
        throw ShapeError("grid search: logits width does not equal n + m");
    }
    if (grid.alpha_steps == 0 || grid.beta_steps == 0) {
        throw ArgumentError("grid search: each axis needs at least one step");
    }
    if (!std::isfinite(grid.alpha_min) || !std::isfinite(grid.alpha_max) ||
        !std::isfinite(grid.beta_min) || !std::isfinite(grid.beta_max)) {
        throw ArgumentError("grid search: ranges must be finite");
    }
    auto axis = [](double lo, double hi, std::size_t steps, std::size_t i) {
        if (steps == 1) return lo;
        return lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(steps - 1);
    };

    BiasFitResult best{BiasParams::identity(old_classes, new_classes),
                       std::numeric_limits<double>::infinity(),
                       mean_bias_loss(raw_logits, labels, old_classes, 1.0, 0.0), 0};
    for (std::size_t i = 0; i < grid.alpha_steps; ++i) {
        const double a = axis(grid.alpha_min, grid.alpha_max, grid.alpha_steps, i);
        for (std::size_t j = 0; j < grid.beta_steps; ++j) {
            const double b = axis(grid.beta_min, grid.beta_max, grid.beta_steps, j);
            const double loss = mean_bias_loss(raw_logits, labels, old_classes, a, b);
            ++best.iterations;
            const bool better =
                loss < best.loss ||
                (loss == best.loss &&
                 (std::abs(a - 1.0) < std::abs(best.params.alpha - 1.0) ||
                  (std::abs(a - 1.0) == std::abs(best.params.alpha - 1.0) &&
                   std::abs(b) < std::abs(best.params.beta))));
            if (better) {
                best.loss = loss;
                best.params.alpha = a;
                best.params.beta = b;
            }
        }
    }
    return best;
}

}  // namespace bic

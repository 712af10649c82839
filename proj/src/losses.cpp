#include "bic/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bic/errors.hpp"

namespace bic {
namespace {

void check_labels(const DenseMatrix& logits, std::span<const ClassId> labels) {
    if (labels.size() != logits.rows()) {
        throw ShapeError("label count " + std::to_string(labels.size()) + " != batch size " +
                         std::to_string(logits.rows()));
    }
    for (std::size_t r = 0; r < labels.size(); ++r) {
        if (labels[r] >= logits.cols()) {
            throw ArgumentError("label " + std::to_string(labels[r]) + " out of range for " +
                                std::to_string(logits.cols()) + " classes");
        }
    }
}

}  // namespace

double log_sum_exp(std::span<const double> logits) {
    if (logits.empty()) throw ArgumentError("log_sum_exp of an empty vector");
    const double hi = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double v : logits) sum += std::exp(v - hi);
    return hi + std::log(sum);
}

std::vector<double> softmax(std::span<const double> logits) {
    if (logits.empty()) throw ArgumentError("softmax of an empty vector");
    const double hi = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double sum = 0.0;
    for (std::size_t k = 0; k < logits.size(); ++k) {
        p[k] = std::exp(logits[k] - hi);
        sum += p[k];
    }
    for (double& v : p) v /= sum;
    return p;
}

std::vector<double> tempered_softmax(std::span<const double> logits, double temperature) {
    if (!(temperature > 0.0)) throw ArgumentError("temperature must be > 0");
    std::vector<double> scaled(logits.begin(), logits.end());
    for (double& v : scaled) v /= temperature;
    return softmax(scaled);
}

LossValue distill_loss(const DenseMatrix& teacher_logits, const DenseMatrix& student_logits,
                       const DistillConfig& cfg) {
    const double t = cfg.temperature;
    if (!(t > 0.0)) throw ArgumentError("temperature must be > 0");
    if (teacher_logits.rows() != student_logits.rows() ||
        teacher_logits.cols() != student_logits.cols()) {
        throw ShapeError("distill_loss: teacher is " + std::to_string(teacher_logits.rows()) +
                         "x" + std::to_string(teacher_logits.cols()) + ", student is " +
                         std::to_string(student_logits.rows()) + "x" +
                         std::to_string(student_logits.cols()));
    }
    const std::size_t batch = student_logits.rows();
    LossValue out{0.0, DenseMatrix(batch, student_logits.cols())};
    if (batch == 0 || student_logits.cols() == 0) return out;

    const double inv_batch = 1.0 / static_cast<double>(batch);
    std::vector<double> scaled(student_logits.cols());
    for (std::size_t r = 0; r < batch; ++r) {
        const auto target = tempered_softmax(teacher_logits.row(r), t);
        auto s = student_logits.row(r);
        for (std::size_t k = 0; k < s.size(); ++k) scaled[k] = s[k] / t;
        const double lse = log_sum_exp(scaled);
        auto g = out.grad_logits.row(r);
        for (std::size_t k = 0; k < s.size(); ++k) {
            const double log_pi = scaled[k] - lse;
            out.value -= target[k] * log_pi;
            g[k] = (std::exp(log_pi) - target[k]) / t * inv_batch;
        }
    }
    out.value *= inv_batch;
    return out;
}

LossValue cls_loss(const DenseMatrix& logits, std::span<const ClassId> labels) {
    check_labels(logits, labels);
    const std::size_t batch = logits.rows();
    LossValue out{0.0, DenseMatrix(batch, logits.cols())};
    if (batch == 0) return out;
    const double inv_batch = 1.0 / static_cast<double>(batch);
    for (std::size_t r = 0; r < batch; ++r) {
        auto o = logits.row(r);
        const double lse = log_sum_exp(o);
        out.value += lse - o[labels[r]];
        auto g = out.grad_logits.row(r);
        for (std::size_t k = 0; k < o.size(); ++k) g[k] = std::exp(o[k] - lse) * inv_batch;
        g[labels[r]] -= inv_batch;
    }
    out.value *= inv_batch;
    return out;
}

double lambda_for(std::size_t old_classes, std::size_t new_classes) {
    if (new_classes == 0) throw ArgumentError("lambda_for: new class count must be >= 1");
    return static_cast<double>(old_classes) / static_cast<double>(old_classes + new_classes);
}

LossValue combined_loss(const LossValue& distill, const LossValue& cls, double lambda) {
    if (!(lambda >= 0.0 && lambda < 1.0)) {
        throw ArgumentError("lambda must lie in [0, 1), got " + std::to_string(lambda));
    }
    const DenseMatrix& gd = distill.grad_logits;
    const DenseMatrix& gc = cls.grad_logits;
    if (gd.rows() != gc.rows() || gd.cols() > gc.cols()) {
        throw ShapeError("combined_loss: distillation gradient does not fit classification gradient");
    }
    LossValue out{lambda * distill.value + (1.0 - lambda) * cls.value, gc};
    for (double& v : out.grad_logits.values()) v *= (1.0 - lambda);
    for (std::size_t r = 0; r < gd.rows(); ++r) {
        auto src = gd.row(r);
        auto dst = out.grad_logits.row(r);
        for (std::size_t k = 0; k < src.size(); ++k) dst[k] += lambda * src[k];
    }
    return out;
}

LossValue bias_loss(const DenseMatrix& corrected_logits, std::span<const ClassId> labels) {
    return cls_loss(corrected_logits, labels);
}

}  // namespace bic

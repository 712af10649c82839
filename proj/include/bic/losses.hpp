#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "bic/matrix.hpp"

namespace bic {

/// Class index in [0, C). Label k here corresponds to class k+1 in one-based notation.
using ClassId = std::size_t;

struct DistillConfig {
    double temperature = 2.0;
};

/// Scalar loss (batch mean) plus its derivative with respect to the logits it was computed on.
struct LossValue {
    double value = 0.0;
    DenseMatrix grad_logits;
};

/// Max-subtracted softmax. Throws ArgumentError on empty input.
std::vector<double> softmax(std::span<const double> logits);

/// softmax(logits / T). The caller passes only the logits the distribution is over.
std::vector<double> tempered_softmax(std::span<const double> logits, double temperature);

double log_sum_exp(std::span<const double> logits);

/// Knowledge-distillation cross-entropy between the tempered softmax of a
/// frozen teacher and that of the student, over the same n old classes.
/// The teacher is a constant: the gradient refers to `student_logits` only and
/// equals (pi_student - pi_teacher) / (T * batch). No T^2 rescaling.
LossValue distill_loss(const DenseMatrix& teacher_logits, const DenseMatrix& student_logits,
                       const DistillConfig& cfg);

/// Mean softmax cross-entropy. Gradient row = (p - onehot(label)) / batch.
LossValue cls_loss(const DenseMatrix& logits, std::span<const ClassId> labels);

/// n / (n + m); zero on the first increment.
double lambda_for(std::size_t old_classes, std::size_t new_classes);

/// lambda * distill + (1 - lambda) * cls. The distillation gradient may cover
/// only the leading columns of the classification gradient; it is zero-padded.
LossValue combined_loss(const LossValue& distill, const LossValue& cls, double lambda);

/// Softmax cross-entropy on bias-corrected logits q. The returned gradient is
/// dL/dq; chain it to (alpha, beta) with bias_param_gradient().
LossValue bias_loss(const DenseMatrix& corrected_logits, std::span<const ClassId> labels);

}  // namespace bic

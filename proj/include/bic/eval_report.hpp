#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bic/bias_correction.hpp"
#include "bic/data.hpp"
#include "bic/network.hpp"

namespace bic {

/// Square count matrix; row = true class, column = predicted class.
class ConfusionMatrix {
public:
    ConfusionMatrix() = default;
    explicit ConfusionMatrix(std::size_t classes)
        : classes_(classes), counts_(classes * classes, 0) {}

    std::size_t classes() const { return classes_; }
    std::uint64_t at(std::size_t truth, std::size_t predicted) const {
        return counts_[truth * classes_ + predicted];
    }
    void add(std::size_t truth, std::size_t predicted, std::uint64_t n = 1);

    std::uint64_t row_sum(std::size_t truth) const;
    std::uint64_t total() const;
    std::uint64_t trace() const;
    /// trace / total; 0 for an empty matrix.
    double accuracy() const;

    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

private:
    std::size_t classes_ = 0;
    std::vector<std::uint64_t> counts_;
};

struct EvalResult {
    double accuracy = 0.0;
    ConfusionMatrix confusion;
};

/// Top-1 evaluation over the n + m classes seen so far. When `bias` is set it
/// is applied to the logits first. Throws DataError on a label >= n + m.
EvalResult evaluate(const NetworkModel& model, const std::optional<BiasParams>& bias,
                    std::span<const LabeledSample> test, std::size_t old_classes,
                    std::size_t new_classes);

/// Fraction of old-class test samples (rows < n) predicted as one of the m
/// newest classes. Throws DataError when there are no old-class samples.
double new_class_bias_ratio(const ConfusionMatrix& cm, std::size_t old_classes,
                            std::size_t new_classes);

struct StepReport {
    std::size_t step = 0;
    std::size_t old_classes = 0;
    std::size_t new_classes = 0;
    double lambda = 0.0;
    double accuracy = 0.0;
    ConfusionMatrix confusion;
    std::optional<double> bias_ratio;
    std::optional<BiasParams> bias;
    std::vector<std::size_t> exemplar_counts;
    std::size_t val_per_class = 0;
    std::size_t train_samples = 0;
    double stage1_loss = 0.0;
    std::vector<std::string> warnings;

    std::size_t classes_seen() const { return old_classes + new_classes; }
    std::size_t exemplars_total() const;
};

struct RunReport {
    std::string variant;
    std::uint64_t seed = 0;
    /// Flat key=value echo of the configuration that produced the run.
    std::map<std::string, std::string> config;
    /// Raw dataset label of each class position.
    std::vector<ClassId> class_order;
    std::vector<StepReport> steps;
    std::optional<double> joint_final_accuracy;

    double final_accuracy() const { return steps.empty() ? 0.0 : steps.back().accuracy; }
    /// Gap between the joint upper bound and this run's final accuracy.
    std::optional<double> degradation() const;
};

/// Writes accuracy.csv, confusion_step<t>.csv and summary.json into `out_dir`,
/// replacing existing files atomically (write to a temporary, then rename).
void emit_report(const RunReport& report, const std::filesystem::path& out_dir);

/// Locale-independent shortest formatting with `digits` significant digits.
std::string format_number(double value, int digits = 6);

std::string summary_json(const RunReport& report);
RunReport read_summary(const std::filesystem::path& path);

struct ConfusionCsv {
    std::vector<ClassId> class_ids;
    ConfusionMatrix matrix;
};
ConfusionCsv read_confusion_csv(const std::filesystem::path& path);

/// Replaces `path` with `contents` via a sibling temporary and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace bic

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bic/bias_correction.hpp"
#include "bic/data.hpp"
#include "bic/eval_report.hpp"
#include "bic/exemplar_store.hpp"
#include "bic/network.hpp"
#include "bic/optimizer.hpp"

namespace bic {

enum class Variant {
    /// Classification loss only.
    baseline1,
    /// Distillation + classification mixed by lambda = n / (n + m).
    baseline2,
    /// baseline2 trained on the split training set, then bias correction.
    bic,
    /// baseline2, then the logit layer retrained on all data of seen classes.
    fc_retrain_ub,
    /// Non-incremental training on all data of seen classes at every step.
    joint_ub,
};

inline constexpr Variant kAllVariants[] = {Variant::baseline1, Variant::baseline2, Variant::bic,
                                           Variant::fc_retrain_ub, Variant::joint_ub};

std::string_view variant_name(Variant v);
/// Throws ConfigError naming the value when it is not a known variant.
Variant parse_variant(std::string_view name);

enum class ExemplarSelection { herding, random };
std::string_view selection_name(ExemplarSelection s);
ExemplarSelection parse_selection(std::string_view name);

struct TrainConfig {
    std::size_t epochs = 30;
    double base_lr = 0.1;
    /// Fractions of `epochs` at which the learning rate is multiplied by lr_decay_factor.
    std::vector<double> lr_decay_at{0.6, 0.8};
    double lr_decay_factor = 0.1;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    std::size_t batch_size = 64;
    double temperature = 2.0;
    SplitRatio split{9, 1};
    std::size_t exemplar_budget = 200;
    ExemplarSelection selection = ExemplarSelection::herding;
    std::vector<std::size_t> hidden{128};
    BiasFitConfig bias_fit;
    std::uint64_t seed = 0;
    Variant variant = Variant::bic;

    /// Throws ConfigError naming the offending field.
    void validate() const;
    LrSchedule lr_schedule() const;
};

/// Model, teacher, and memory carried between increments.
struct IncrementalState {
    /// Completed increments.
    std::size_t step = 0;
    /// (n, m) of the most recent increment; model.output_dim() == n + m.
    std::size_t old_classes = 0;
    std::size_t new_classes = 0;
    NetworkModel model;
    /// Snapshot of the previous increment's model; absent before the first increment.
    std::optional<FrozenModel> old_model;
    /// Correction fitted for old_model's newest classes, applied to teacher logits.
    std::optional<BiasParams> teacher_bias;
    ExemplarStore store;
    std::vector<std::optional<BiasParams>> bias_history;

    std::size_t known_classes() const { return old_classes + new_classes; }
};

IncrementalState make_initial_state(std::size_t input_dim, const TrainConfig& cfg);

/// Frozen model plus the correction that turns its logits into the deployed classifier's.
struct Teacher {
    const FrozenModel* model = nullptr;
    std::optional<BiasParams> correction;

    DenseMatrix logits(const DenseMatrix& inputs) const;
};

struct Stage1Result {
    double final_epoch_loss = 0.0;
    std::size_t updates = 0;
};

/// Mean stage-1 objective on `samples`: lambda * distill + (1 - lambda) * cls,
/// or cls alone when `teacher` is empty.
double stage1_objective(const NetworkModel& model, const std::optional<Teacher>& teacher,
                        std::span<const LabeledSample> samples, std::size_t old_classes,
                        std::size_t new_classes, const TrainConfig& cfg);

/// Mini-batch SGD over the shuffled union of `samples` for cfg.epochs.
/// Distillation targets are the teacher's logits on every sample in the batch.
Stage1Result train_stage1(NetworkModel& model, const std::optional<Teacher>& teacher,
                          std::span<const LabeledSample> samples, std::size_t old_classes,
                          std::size_t new_classes, const TrainConfig& cfg, Rng& rng);

/// Fits (alpha, beta) for the current increment on frozen logits and appends
/// them to state.bias_history.
BiasFitResult train_stage2(IncrementalState& state, std::span<const LabeledSample> val,
                           const TrainConfig& cfg);

/// Retrains only the logit layer with the classification loss on `all_data`.
void run_fc_retrain_upper_bound(NetworkModel& model, std::span<const LabeledSample> all_data,
                                const TrainConfig& cfg, Rng& rng);

/// Trains a fresh network on every sample of `classes` classes at once.
NetworkModel run_joint_upper_bound(std::span<const LabeledSample> all_data, std::size_t classes,
                                   std::size_t input_dim, const TrainConfig& cfg,
                                   std::uint64_t seed);

struct IncrementOutcome {
    double lambda = 0.0;
    double stage1_loss = 0.0;
    std::size_t train_samples = 0;
    std::size_t val_per_class = 0;
    std::optional<BiasFitResult> bias_fit;
    std::vector<std::string> warnings;
};

/// One full increment: split, expand, stage 1, stage 2 (bic only, after the
/// first increment), snapshot, exemplar update. `all_seen_train` is only read
/// by fc_retrain_ub. Throws DataError if the data contains already-seen classes.
IncrementOutcome run_increment(IncrementalState& state, const IncrementData& data,
                               const TrainConfig& cfg,
                               std::span<const LabeledSample> all_seen_train = {});

struct RunOptions {
    /// Per-step checkpoints (model, exemplar manifest, bias, metrics) go here when set.
    std::optional<std::filesystem::path> checkpoint_dir;
    std::map<std::string, std::string> config_echo;
};

/// Runs every increment of `plan` for cfg.variant and evaluates after each.
RunReport run_experiment(const Dataset& dataset, const ClassSchedule& plan,
                         const TrainConfig& cfg, const RunOptions& options = {});

}  // namespace bic

#include "bic/pipeline.hpp"

#include <algorithm>
#include <string>

#include "bic/errors.hpp"
#include "bic/losses.hpp"
#include "json.hpp"

namespace bic {
namespace {

// Sub-stream ids for derive_seed.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kExpandStream = 100;
constexpr std::uint64_t kShuffleStream = 200;
constexpr std::uint64_t kSplitStream = 300;
constexpr std::uint64_t kSelectStream = 400;
constexpr std::uint64_t kRetrainStream = 500;
constexpr std::uint64_t kJointStream = 600;

DenseMatrix gather_rows(const DenseMatrix& m, std::span<const std::size_t> idx) {
    DenseMatrix out(idx.size(), m.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) {
        auto src = m.row(idx[r]);
        std::copy(src.begin(), src.end(), out.row(r).begin());
    }
    return out;
}

LossValue batch_loss(const DenseMatrix& logits, std::span<const ClassId> labels,
                     const DenseMatrix* teacher_logits, std::size_t old_classes,
                     std::size_t new_classes, double temperature) {
    LossValue cls = cls_loss(logits, labels);
    if (teacher_logits == nullptr || old_classes == 0) return cls;
    LossValue distill = distill_loss(*teacher_logits, logits.column_slice(0, old_classes),
                                     DistillConfig{temperature});
    return combined_loss(distill, cls, lambda_for(old_classes, new_classes));
}

/// Mini-batch SGD on fixed inputs/targets; shared by every training routine.
Stage1Result sgd_train(NetworkModel& model, const DenseMatrix& inputs,
                       std::span<const ClassId> labels, const DenseMatrix* teacher_logits,
                       std::size_t old_classes, std::size_t new_classes, const TrainConfig& cfg,
                       Rng& rng) {
    Stage1Result result;
    const std::size_t n = inputs.rows();
    if (n == 0) throw DataError("training set is empty");
    SgdOptimizer opt(model, cfg.momentum, cfg.weight_decay, cfg.lr_schedule());
    std::vector<ClassId> batch_labels;
    ForwardCache cache;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto order = permutation(n, rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t count = std::min(cfg.batch_size, n - start);
            std::span<const std::size_t> idx(order.data() + start, count);
            const DenseMatrix x = gather_rows(inputs, idx);
            batch_labels.clear();
            for (std::size_t i : idx) batch_labels.push_back(labels[i]);
            DenseMatrix teacher_batch;
            if (teacher_logits) teacher_batch = gather_rows(*teacher_logits, idx);

            const DenseMatrix logits = forward(model, x, cache);
            const LossValue loss = batch_loss(logits, batch_labels,
                                              teacher_logits ? &teacher_batch : nullptr,
                                              old_classes, new_classes, cfg.temperature);
            const Gradients grads = backward(model, cache, loss.grad_logits);
            opt.step(model, grads, epoch);
            epoch_loss += loss.value * static_cast<double>(count);
            ++result.updates;
        }
        result.final_epoch_loss = epoch_loss / static_cast<double>(n);
    }
    return result;
}

void check_increment(const IncrementalState& state, const IncrementData& data) {
    const std::size_t n = state.known_classes();
    if (data.new_classes == 0) throw DataError("increment brings no new classes");
    if (data.old_classes != n) {
        throw DataError("increment expects " + std::to_string(data.old_classes) +
                        " known classes but the state has " + std::to_string(n));
    }
    for (const auto& s : data.train) {
        if (s.label < n) {
            throw DataError("sample " + std::to_string(s.id) + " has already-seen class " +
                            std::to_string(s.label));
        }
        if (s.label >= n + data.new_classes) {
            throw DataError("sample " + std::to_string(s.id) + " has class " +
                            std::to_string(s.label) + " outside this increment");
        }
    }
}

void update_exemplars(IncrementalState& state, const IncrementData& data, const TrainConfig& cfg,
                      std::vector<std::string>& warnings) {
    const std::size_t n = data.old_classes;
    const std::size_t known = n + data.new_classes;
    const auto quotas = class_quotas(cfg.exemplar_budget, known);
    for (ClassId c = n; c < known; ++c) {
        std::vector<LabeledSample> members;
        for (const auto& s : data.train) {
            if (s.label == c) members.push_back(s);
        }
        if (members.empty()) throw DataError("class " + std::to_string(c) + " has no training data");
        std::vector<std::size_t> picks;
        if (cfg.selection == ExemplarSelection::herding) {
            picks = select_herding(penultimate_features(state.model, feature_matrix(members)),
                                   quotas[c]);
        } else {
            picks = select_random(members.size(), quotas[c],
                                  derive_seed(cfg.seed, kSelectStream + 1000 * state.step + c),
                                  &warnings);
        }
        std::vector<LabeledSample> ordered;
        ordered.reserve(picks.size());
        for (std::size_t i : picks) ordered.push_back(members[i]);
        state.store.add_class(c, std::move(ordered));
    }
    state.store.rebalance(known);
}

void write_checkpoint(const std::filesystem::path& root, const IncrementalState& state,
                      const StepReport& step) {
    const auto dir = root / ("step" + std::to_string(step.step));
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    save_model(state.model, dir / "model.bin");
    save_manifest(state.store, dir / "exemplars.bin");
    nlohmann::json j = {
        {"step", step.step},
        {"classes_seen", step.classes_seen()},
        {"model", "model.bin"},
        {"model_checksum", state.model.checksum()},
        {"exemplars", "exemplars.bin"},
        {"bias", step.bias ? nlohmann::json{{"alpha", step.bias->alpha}, {"beta", step.bias->beta}}
                           : nlohmann::json(nullptr)},
        {"accuracy", step.accuracy},
        {"lambda", step.lambda},
    };
    write_file_atomic(dir / "checkpoint.json", j.dump(2) + "\n");
}

}  // namespace

std::string_view variant_name(Variant v) {
    switch (v) {
        case Variant::baseline1: return "baseline1";
        case Variant::baseline2: return "baseline2";
        case Variant::bic: return "bic";
        case Variant::fc_retrain_ub: return "fc_retrain_ub";
        case Variant::joint_ub: return "joint_ub";
    }
    return "unknown";
}

Variant parse_variant(std::string_view name) {
    for (Variant v : kAllVariants) {
        if (variant_name(v) == name) return v;
    }
    throw ConfigError("run.variant: unknown variant '" + std::string(name) +
                      "' (expected baseline1, baseline2, bic, fc_retrain_ub or joint_ub)");
}

std::string_view selection_name(ExemplarSelection s) {
    return s == ExemplarSelection::herding ? "herding" : "random";
}

ExemplarSelection parse_selection(std::string_view name) {
    if (name == "herding") return ExemplarSelection::herding;
    if (name == "random") return ExemplarSelection::random;
    throw ConfigError("exemplar.selection: unknown strategy '" + std::string(name) +
                      "' (expected herding or random)");
}

void TrainConfig::validate() const {
    if (epochs == 0) throw ConfigError("train.epochs: must be >= 1");
    if (!(base_lr > 0.0)) throw ConfigError("train.lr: must be > 0");
    if (!(lr_decay_factor > 0.0)) throw ConfigError("train.lr_decay_factor: must be > 0");
    for (double f : lr_decay_at) {
        if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("train.lr_decay_at: fractions must lie in [0, 1]");
    }
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("train.momentum: must lie in [0, 1)");
    if (weight_decay < 0.0) throw ConfigError("train.weight_decay: must be >= 0");
    if (batch_size == 0) throw ConfigError("train.batch_size: must be >= 1");
    if (!(temperature > 0.0)) throw ConfigError("train.temperature: must be > 0");
    if (split.train_parts == 0 || split.val_parts == 0) throw ConfigError("bic.split: parts must be >= 1");
    if (exemplar_budget == 0) throw ConfigError("exemplar.budget: must be >= 1");
    for (std::size_t h : hidden) {
        if (h == 0) throw ConfigError("model.hidden: widths must be >= 1");
    }
    if (bias_fit.epochs == 0) throw ConfigError("bic.epochs: must be >= 1");
    if (!(bias_fit.learning_rate > 0.0)) throw ConfigError("bic.lr: must be > 0");
}

LrSchedule TrainConfig::lr_schedule() const {
    return LrSchedule::at_fractions(base_lr, epochs, lr_decay_at, lr_decay_factor);
}

IncrementalState make_initial_state(std::size_t input_dim, const TrainConfig& cfg) {
    IncrementalState state;
    Rng rng(derive_seed(cfg.seed, kInitStream));
    state.model = NetworkModel(input_dim, cfg.hidden, 0, rng);
    state.store = ExemplarStore(cfg.exemplar_budget);
    return state;
}

DenseMatrix Teacher::logits(const DenseMatrix& inputs) const {
    if (model == nullptr) throw UsageError("teacher has no model");
    DenseMatrix out = model->forward(inputs);
    if (correction) out = apply_bias(out, correction->first_new, *correction);
    return out;
}

double stage1_objective(const NetworkModel& model, const std::optional<Teacher>& teacher,
                        std::span<const LabeledSample> samples, std::size_t old_classes,
                        std::size_t new_classes, const TrainConfig& cfg) {
    const DenseMatrix x = feature_matrix(samples);
    const auto labels = label_vector(samples);
    DenseMatrix targets;
    if (teacher) targets = teacher->logits(x);
    return batch_loss(forward(model, x), labels, teacher ? &targets : nullptr, old_classes,
                      new_classes, cfg.temperature)
        .value;
}

Stage1Result train_stage1(NetworkModel& model, const std::optional<Teacher>& teacher,
                          std::span<const LabeledSample> samples, std::size_t old_classes,
                          std::size_t new_classes, const TrainConfig& cfg, Rng& rng) {
    if (model.output_dim() != old_classes + new_classes) {
        throw ShapeError("train_stage1: model has " + std::to_string(model.output_dim()) +
                         " outputs, expected " + std::to_string(old_classes + new_classes));
    }
    const DenseMatrix x = feature_matrix(samples);
    const auto labels = label_vector(samples);
    // The teacher is frozen for the whole increment, so its logits are computed once.
    std::optional<DenseMatrix> targets;
    if (teacher && old_classes > 0) {
        targets = teacher->logits(x);
        if (targets->cols() != old_classes) {
            throw ShapeError("teacher produces " + std::to_string(targets->cols()) +
                             " logits, expected " + std::to_string(old_classes));
        }
    }
    return sgd_train(model, x, labels, targets ? &*targets : nullptr, old_classes, new_classes,
                     cfg, rng);
}

BiasFitResult train_stage2(IncrementalState& state, std::span<const LabeledSample> val,
                           const TrainConfig& cfg) {
    if (state.old_classes == 0) throw UsageError("train_stage2 needs at least one old class");
    const FrozenModel frozen(state.model);
    auto fit = fit_bias(frozen, feature_matrix(val), label_vector(val), state.old_classes,
                        state.new_classes, cfg.bias_fit);
    state.bias_history.push_back(fit.params);
    return fit;
}

void run_fc_retrain_upper_bound(NetworkModel& model, std::span<const LabeledSample> all_data,
                                const TrainConfig& cfg, Rng& rng) {
    if (all_data.empty()) throw DataError("fc retrain: no data");
    const DenseMatrix features = penultimate_features(model, feature_matrix(all_data));
    const auto labels = label_vector(all_data);
    NetworkModel head(std::vector<DenseLayer>{model.layers().back()});
    sgd_train(head, features, labels, nullptr, 0, model.output_dim(), cfg, rng);
    model.layers().back() = head.layers().front();
}

NetworkModel run_joint_upper_bound(std::span<const LabeledSample> all_data, std::size_t classes,
                                   std::size_t input_dim, const TrainConfig& cfg,
                                   std::uint64_t seed) {
    Rng rng(seed);
    NetworkModel model(input_dim, cfg.hidden, classes, rng);
    const DenseMatrix x = feature_matrix(all_data);
    const auto labels = label_vector(all_data);
    sgd_train(model, x, labels, nullptr, 0, classes, cfg, rng);
    return model;
}

IncrementOutcome run_increment(IncrementalState& state, const IncrementData& data,
                               const TrainConfig& cfg,
                               std::span<const LabeledSample> all_seen_train) {
    check_increment(state, data);
    const std::size_t n = data.old_classes;
    const std::size_t m = data.new_classes;
    const std::size_t t = state.step;
    const bool use_bic = cfg.variant == Variant::bic;
    const bool distill = cfg.variant != Variant::baseline1 && state.old_model.has_value();

    IncrementOutcome out;
    out.lambda = cfg.variant == Variant::baseline1 ? 0.0 : lambda_for(n, m);

    // (1) split. Only BiC holds out validation data, and only once there is
    // something to correct.
    SplitSets sets;
    if (use_bic && n > 0) {
        sets = split_train_val(state.store, data.train, cfg.split,
                               derive_seed(cfg.seed, kSplitStream + t));
    } else {
        sets.train_old = state.store.all();
        sets.train_new = data.train;
    }
    out.val_per_class = sets.val_per_class;
    std::vector<LabeledSample> train = std::move(sets.train_old);
    train.insert(train.end(), sets.train_new.begin(), sets.train_new.end());
    out.train_samples = train.size();

    // (2) grow the classifier.
    Rng expand_rng(derive_seed(cfg.seed, kExpandStream + t));
    state.model.expand_output(m, expand_rng);
    state.old_classes = n;
    state.new_classes = m;

    // (3) stage 1.
    std::optional<Teacher> teacher;
    if (distill) teacher = Teacher{&*state.old_model, state.teacher_bias};
    Rng shuffle_rng(derive_seed(cfg.seed, kShuffleStream + t));
    out.stage1_loss = train_stage1(state.model, teacher, train, n, m, cfg, shuffle_rng).final_epoch_loss;

    if (cfg.variant == Variant::fc_retrain_ub) {
        Rng retrain_rng(derive_seed(cfg.seed, kRetrainStream + t));
        run_fc_retrain_upper_bound(state.model, all_seen_train, cfg, retrain_rng);
    }

    // (4) stage 2.
    if (use_bic && n > 0) {
        std::vector<LabeledSample> val = std::move(sets.val_old);
        val.insert(val.end(), sets.val_new.begin(), sets.val_new.end());
        out.bias_fit = train_stage2(state, val, cfg);
    } else {
        state.bias_history.push_back(std::nullopt);
    }

    // (5) snapshot the deployed classifier as the next teacher.
    state.old_model = FrozenModel(state.model);
    state.teacher_bias = state.bias_history.back();

    // (6) memory update with the just-trained features.
    update_exemplars(state, data, cfg, out.warnings);
    state.step = t + 1;
    return out;
}

RunReport run_experiment(const Dataset& dataset, const ClassSchedule& plan,
                         const TrainConfig& cfg, const RunOptions& options) {
    cfg.validate();
    const auto steps = schedule(dataset, plan);

    RunReport report;
    report.variant = std::string(variant_name(cfg.variant));
    report.seed = cfg.seed;
    report.config = options.config_echo;
    report.class_order = plan.order;

    IncrementalState state = make_initial_state(dataset.feature_dim, cfg);
    std::vector<LabeledSample> seen_train;
    for (const auto& data : steps) {
        seen_train.insert(seen_train.end(), data.train.begin(), data.train.end());
        const std::size_t n = data.old_classes;
        const std::size_t m = data.new_classes;

        StepReport step;
        step.step = data.step;
        step.old_classes = n;
        step.new_classes = m;

        NetworkModel eval_model;
        std::optional<BiasParams> eval_bias;
        if (cfg.variant == Variant::joint_ub) {
            eval_model = run_joint_upper_bound(seen_train, n + m, dataset.feature_dim, cfg,
                                               derive_seed(cfg.seed, kJointStream + data.step));
            step.train_samples = seen_train.size();
        } else {
            auto outcome = run_increment(state, data, cfg, seen_train);
            step.lambda = outcome.lambda;
            step.stage1_loss = outcome.stage1_loss;
            step.train_samples = outcome.train_samples;
            step.val_per_class = outcome.val_per_class;
            step.warnings = std::move(outcome.warnings);
            step.bias = state.bias_history.back();
            for (ClassId c = 0; c < n + m; ++c) step.exemplar_counts.push_back(state.store.count(c));
            eval_model = state.model;
            eval_bias = step.bias;
        }

        auto result = evaluate(eval_model, eval_bias, data.test, n, m);
        step.accuracy = result.accuracy;
        step.confusion = std::move(result.confusion);
        if (n > 0) step.bias_ratio = new_class_bias_ratio(step.confusion, n, m);

        if (options.checkpoint_dir) {
            if (cfg.variant == Variant::joint_ub) {
                IncrementalState snapshot;
                snapshot.model = eval_model;
                snapshot.store = ExemplarStore(cfg.exemplar_budget);
                write_checkpoint(*options.checkpoint_dir, snapshot, step);
            } else {
                write_checkpoint(*options.checkpoint_dir, state, step);
            }
        }
        report.steps.push_back(std::move(step));
    }
    return report;
}

}  // namespace bic

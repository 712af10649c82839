#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "bic/data.hpp"

namespace bic {

/// train_parts : val_parts, e.g. 9:1.
struct SplitRatio {
    std::size_t train_parts = 9;
    std::size_t val_parts = 1;

    double val_fraction() const {
        return static_cast<double>(val_parts) / static_cast<double>(train_parts + val_parts);
    }
    std::string to_string() const;
    /// Parses "a:b"; throws ConfigError on malformed input or zero parts.
    static SplitRatio parse(const std::string& text);

    friend bool operator==(const SplitRatio&, const SplitRatio&) = default;
};

/// Fixed total-budget memory of old-class samples. Each class keeps its
/// samples in selection priority order so truncation keeps the best prefix.
class ExemplarStore {
public:
    explicit ExemplarStore(std::size_t budget = 0) : budget_(budget) {}

    std::size_t budget() const { return budget_; }
    const std::map<ClassId, std::vector<LabeledSample>>& per_class() const { return per_class_; }
    std::size_t class_count() const { return per_class_.size(); }
    std::size_t total() const;
    std::size_t count(ClassId c) const;
    bool empty() const { return per_class_.empty(); }

    /// Adds a class with its samples in priority order. Throws DataError if
    /// the class is already stored.
    void add_class(ClassId c, std::vector<LabeledSample> ordered);

    /// Truncates every class to its quota for `classes_now_known` classes.
    void rebalance(std::size_t classes_now_known);

    /// Every stored sample, class-major.
    std::vector<LabeledSample> all() const;

    friend bool operator==(const ExemplarStore&, const ExemplarStore&) = default;

private:
    std::size_t budget_;
    std::map<ClassId, std::vector<LabeledSample>> per_class_;
};

/// floor(budget / classes) each, with the remainder going to the lowest class
/// ids. Throws DataError when the floor is zero.
std::vector<std::size_t> class_quotas(std::size_t budget, std::size_t classes);

/// Uniform sample without replacement of `count` indices from [0, population),
/// in draw order. A count above the population takes everything and appends a
/// message to `warnings` when provided.
std::vector<std::size_t> select_random(std::size_t population, std::size_t count,
                                       std::uint64_t seed,
                                       std::vector<std::string>* warnings = nullptr);

/// Greedy mean matching: each pick minimizes ||mu - mean(chosen + candidate)||
/// where mu is the mean of all rows. Ties go to the lower index. The order
/// has the prefix property. Throws DataError on an empty feature set.
std::vector<std::size_t> select_herding(const DenseMatrix& features, std::size_t count);

struct SplitSets {
    std::vector<LabeledSample> train_old;
    std::vector<LabeledSample> val_old;
    std::vector<LabeledSample> train_new;
    std::vector<LabeledSample> val_new;

    /// Validation samples per class (identical for every class).
    std::size_t val_per_class = 0;
};

/// Holds out a class-balanced validation set from the stored exemplars and the
/// new classes' samples. The per-class validation size is
/// max(1, round(count * val_fraction)) minimized over old classes, and every
/// class (old and new) contributes exactly that many. With an empty store the
/// minimum is taken over the new classes. Deterministic given `seed`.
SplitSets split_train_val(const ExemplarStore& store,
                          std::span<const LabeledSample> new_class_samples, SplitRatio ratio,
                          std::uint64_t seed);

/// Binary manifest: "BICX", u32 version, u64 budget, u64 class count, then per
/// class u64 class id, u64 sample count, sample ids in priority order.
void save_manifest(const ExemplarStore& store, const std::filesystem::path& path);

/// Rebuilds a store from a manifest, resolving ids against `pool`. The stored
/// samples take the class id recorded in the manifest.
ExemplarStore load_manifest(const std::filesystem::path& path,
                            std::span<const LabeledSample> pool);

}  // namespace bic

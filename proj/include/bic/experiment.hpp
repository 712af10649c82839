#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "bic/data.hpp"
#include "bic/eval_report.hpp"
#include "bic/pipeline.hpp"

namespace bic {

struct DatasetSpec {
    enum class Kind { idx, blobs };
    Kind kind = Kind::idx;
    std::filesystem::path train_images;
    std::filesystem::path train_labels;
    std::filesystem::path test_images;
    std::filesystem::path test_labels;
    BlobSpec blobs;
    std::size_t blob_test_per_class = 50;
};

struct ScheduleSpec {
    /// "natural" (sorted labels), "random" (seeded by order_seed), or a class-order file.
    std::string order = "natural";
    std::uint64_t order_seed = 0;
    /// Explicit per-step class counts; when empty, `steps` equal increments are used.
    std::vector<std::size_t> increments;
    std::size_t steps = 5;
};

/// Everything needed to reproduce one run.
struct ExperimentConfig {
    TrainConfig train;
    DatasetSpec dataset;
    ScheduleSpec schedule;
    std::filesystem::path out_dir;

    /// Builds and validates a config from flat keys. Relative paths resolve
    /// against `base_dir`. Unknown keys and bad values throw ConfigError
    /// naming the key.
    static ExperimentConfig from_key_values(const std::map<std::string, std::string>& kv,
                                            const std::filesystem::path& base_dir);

    /// Canonical flat echo (excludes run.out_dir, which does not affect results).
    std::map<std::string, std::string> to_key_values() const;
};

/// Parses `key=value` lines; blank lines and `#` comments are skipped.
std::map<std::string, std::string> parse_key_values(const std::string& text);

/// Reads a config file and applies `overrides` on top of it.
ExperimentConfig load_experiment_config(const std::filesystem::path& path,
                                        const std::map<std::string, std::string>& overrides);

Dataset load_dataset(const DatasetSpec& spec);
ClassSchedule build_schedule(const ScheduleSpec& spec, const Dataset& dataset);

/// Loads data, runs the configured variant, and returns its report.
RunReport run_experiment(const ExperimentConfig& cfg,
                         const std::optional<std::filesystem::path>& checkpoint_dir = std::nullopt);

/// Entry point of the command-line tool: `bic run|ablate|report ...`.
/// Returns 0 on success, 2 for invalid configuration or usage, 1 for runtime failures.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace bic

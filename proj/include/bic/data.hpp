#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "bic/losses.hpp"
#include "bic/matrix.hpp"

namespace bic {

using SampleId = std::uint64_t;

struct LabeledSample {
    std::vector<double> features;
    ClassId label = 0;
    SampleId id = 0;

    friend bool operator==(const LabeledSample&, const LabeledSample&) = default;
};

struct Dataset {
    std::vector<LabeledSample> train;
    std::vector<LabeledSample> test;
    std::size_t feature_dim = 0;
};

/// Reads an IDX image file (magic 0x00000803) and label file (magic
/// 0x00000801). Pixels are scaled by 1/255; ids count up from `first_id`.
std::vector<LabeledSample> load_idx(const std::filesystem::path& images,
                                    const std::filesystem::path& labels,
                                    SampleId first_id = 0);

/// Writes samples as IDX files. Features are multiplied by 255 and rounded;
/// labels must fit in a byte.
void write_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
               std::span<const LabeledSample> samples, std::uint32_t rows, std::uint32_t cols);

struct BlobSpec {
    std::size_t num_classes = 10;
    std::size_t per_class = 100;
    std::size_t dim = 16;
    double spread = 0.1;
    std::uint64_t seed = 0;
};

/// Isotropic Gaussian clusters. Centers depend only on (seed, num_classes,
/// dim); `noise_stream` selects an independent noise draw so train and test
/// sets share centers. Samples are class-major; ids start at `first_id`.
std::vector<LabeledSample> make_blobs(const BlobSpec& spec, std::uint64_t noise_stream = 0,
                                      SampleId first_id = 0);

/// Class centers used by make_blobs.
DenseMatrix blob_centers(const BlobSpec& spec);

/// Arrival order of raw dataset labels and the number of classes per step.
struct ClassSchedule {
    std::vector<ClassId> order;
    std::vector<std::size_t> increments;
};

/// `steps` increments of equal size over `order`.
ClassSchedule equal_schedule(std::vector<ClassId> order, std::size_t steps);

/// One raw class id per non-empty line.
std::vector<ClassId> read_class_order(const std::filesystem::path& path);

/// Seeded permutation of the given labels.
std::vector<ClassId> random_class_order(std::vector<ClassId> labels, std::uint64_t seed);

/// Sorted distinct labels present in `samples`.
std::vector<ClassId> distinct_labels(std::span<const LabeledSample> samples);

/// Data for one increment with labels remapped to arrival positions 0..C-1.
struct IncrementData {
    std::size_t step = 0;
    std::size_t old_classes = 0;
    std::size_t new_classes = 0;
    /// Training samples of this step's new classes only.
    std::vector<LabeledSample> train;
    /// Test samples of every class seen through this step.
    std::vector<LabeledSample> test;
};

/// Splits a dataset into increments. Throws ConfigError if the order is not a
/// permutation of the dataset's labels or the increments do not sum to it.
std::vector<IncrementData> schedule(const Dataset& dataset, const ClassSchedule& plan);

/// Stacks features into a matrix (one row per sample).
DenseMatrix feature_matrix(std::span<const LabeledSample> samples);
std::vector<ClassId> label_vector(std::span<const LabeledSample> samples);

}  // namespace bic

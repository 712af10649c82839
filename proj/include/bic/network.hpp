#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "bic/matrix.hpp"
#include "bic/random.hpp"

namespace bic {

/// Affine map y = W x + b. `weights` is out x in.
struct DenseLayer {
    DenseMatrix weights;
    std::vector<double> bias;

    std::size_t in_dim() const { return weights.cols(); }
    std::size_t out_dim() const { return weights.rows(); }

    friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Per-parameter gradients; one entry per layer, shapes mirror the model.
using Gradients = std::vector<DenseLayer>;

/// Stack of dense layers with a rectifier between consecutive layers and raw
/// logits at the output. The last layer grows as new classes arrive.
class NetworkModel {
public:
    NetworkModel() = default;

    /// Hidden layers use He-uniform init, the logit layer uses U(+-1/sqrt(fan_in)).
    /// Biases start at zero. `output_dim` may be 0 for a model awaiting its first classes.
    NetworkModel(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                 std::size_t output_dim, Rng& rng);

    /// Validates that consecutive shapes compose.
    explicit NetworkModel(std::vector<DenseLayer> layers);

    std::size_t input_dim() const;
    std::size_t output_dim() const;
    /// Width of the representation feeding the logit layer.
    std::size_t feature_dim() const;

    const std::vector<DenseLayer>& layers() const { return layers_; }
    std::vector<DenseLayer>& layers() { return layers_; }

    /// Appends `extra_classes` logit rows. Existing rows are untouched; new
    /// weights are drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)) and new biases are 0.
    void expand_output(std::size_t extra_classes, Rng& rng);

    /// FNV-1a over every parameter's bit pattern.
    std::uint64_t checksum() const;

    friend bool operator==(const NetworkModel&, const NetworkModel&) = default;

private:
    std::vector<DenseLayer> layers_;
};

/// Activations recorded by a training forward pass. `inputs[l]` is what layer l consumed.
struct ForwardCache {
    std::vector<DenseMatrix> inputs;
    std::uint64_t model_checksum = 0;

    bool empty() const { return inputs.empty(); }
};

DenseMatrix forward(const NetworkModel& model, const DenseMatrix& inputs);

/// Same as forward() but records what backward() needs.
DenseMatrix forward(const NetworkModel& model, const DenseMatrix& inputs, ForwardCache& cache);

/// Output of the last hidden rectifier (the inputs to the logit layer).
DenseMatrix penultimate_features(const NetworkModel& model, const DenseMatrix& inputs);

/// Exact gradients of a loss whose derivative at the logits is `grad_logits`.
/// Throws UsageError if `cache` is empty or was recorded on different parameters.
Gradients backward(const NetworkModel& model, const ForwardCache& cache,
                   const DenseMatrix& grad_logits);

/// Zero-filled gradients shaped like `model`.
Gradients zero_gradients(const NetworkModel& model);

/// Read-only snapshot used as the distillation teacher.
class FrozenModel {
public:
    FrozenModel() = default;
    explicit FrozenModel(NetworkModel model) : model_(std::move(model)) {}

    DenseMatrix forward(const DenseMatrix& inputs) const { return bic::forward(model_, inputs); }
    DenseMatrix features(const DenseMatrix& inputs) const {
        return penultimate_features(model_, inputs);
    }
    std::size_t output_dim() const { return model_.output_dim(); }
    const NetworkModel& model() const { return model_; }

private:
    NetworkModel model_;
};

/// Binary model file: "BICM", u32 version, u32 layer count, then per layer
/// u64 rows, u64 cols, rows*cols weights, rows biases (little-endian doubles).
void save_model(const NetworkModel& model, const std::filesystem::path& path);
NetworkModel load_model(const std::filesystem::path& path);

}  // namespace bic

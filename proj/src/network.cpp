#include "bic/network.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>

#include "bic/errors.hpp"

namespace bic {
namespace {

DenseLayer make_layer(std::size_t in, std::size_t out, double bound, Rng& rng) {
    DenseLayer layer{DenseMatrix(out, in), std::vector<double>(out, 0.0)};
    for (double& w : layer.weights.values()) w = rng.uniform(-bound, bound);
    return layer;
}

// Four fixed partial sums: vectorizable without reassociating flags, and the
// summation order never changes, so results stay bit-reproducible.
double dot(std::span<const double> a, std::span<const double> b) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    std::size_t i = 0;
    for (; i + 4 <= a.size(); i += 4) {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    for (; i < a.size(); ++i) s0 += a[i] * b[i];
    return (s0 + s1) + (s2 + s3);
}

void affine(const DenseLayer& layer, const DenseMatrix& x, DenseMatrix& y) {
    y = DenseMatrix(x.rows(), layer.out_dim());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        auto in = x.row(r);
        auto out = y.row(r);
        for (std::size_t o = 0; o < layer.out_dim(); ++o) {
            auto w = layer.weights.row(o);
            out[o] = layer.bias[o] + dot(w, in);
        }
    }
}

void relu_inplace(DenseMatrix& m) {
    for (double& v : m.values()) v = v > 0.0 ? v : 0.0;
}

void check_input(const NetworkModel& model, const DenseMatrix& inputs) {
    if (model.layers().empty()) throw UsageError("forward on a model with no layers");
    if (inputs.cols() != model.input_dim()) {
        throw ShapeError("input dimension " + std::to_string(inputs.cols()) +
                         " does not match model input_dim " + std::to_string(model.input_dim()));
    }
}

template <typename T>
void write_pod(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const std::filesystem::path& path) {
    T v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) {
        throw FormatError("truncated model file " + path.string());
    }
    return v;
}

}  // namespace

NetworkModel::NetworkModel(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                           std::size_t output_dim, Rng& rng) {
    std::size_t in = input_dim;
    for (std::size_t width : hidden) {
        layers_.push_back(make_layer(in, width, std::sqrt(6.0 / static_cast<double>(in)), rng));
        in = width;
    }
    layers_.push_back(make_layer(in, output_dim, 1.0 / std::sqrt(static_cast<double>(in)), rng));
}

NetworkModel::NetworkModel(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) throw ShapeError("network needs at least one layer");
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        if (layers_[l].bias.size() != layers_[l].out_dim()) {
            throw ShapeError("layer " + std::to_string(l) + " bias length mismatch");
        }
        if (l > 0 && layers_[l].in_dim() != layers_[l - 1].out_dim()) {
            throw ShapeError("layer " + std::to_string(l) + " input width " +
                             std::to_string(layers_[l].in_dim()) + " != previous output width " +
                             std::to_string(layers_[l - 1].out_dim()));
        }
    }
}

std::size_t NetworkModel::input_dim() const {
    return layers_.empty() ? 0 : layers_.front().in_dim();
}

std::size_t NetworkModel::output_dim() const {
    return layers_.empty() ? 0 : layers_.back().out_dim();
}

std::size_t NetworkModel::feature_dim() const {
    return layers_.empty() ? 0 : layers_.back().in_dim();
}

void NetworkModel::expand_output(std::size_t extra_classes, Rng& rng) {
    if (extra_classes == 0) throw ArgumentError("expand_output: extra_classes must be >= 1");
    if (layers_.empty()) throw UsageError("expand_output on a model with no layers");
    DenseLayer& head = layers_.back();
    const std::size_t fan_in = head.in_dim();
    DenseLayer fresh = make_layer(fan_in, extra_classes,
                                  1.0 / std::sqrt(static_cast<double>(fan_in)), rng);
    head.weights.append_rows(fresh.weights);
    head.bias.insert(head.bias.end(), fresh.bias.begin(), fresh.bias.end());
}

std::uint64_t NetworkModel::checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](double v) {
        auto bits = std::bit_cast<std::uint64_t>(v);
        for (int i = 0; i < 8; ++i) {
            h ^= (bits >> (8 * i)) & 0xFF;
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& layer : layers_) {
        mix(static_cast<double>(layer.out_dim()));
        mix(static_cast<double>(layer.in_dim()));
        for (double w : layer.weights.values()) mix(w);
        for (double b : layer.bias) mix(b);
    }
    return h;
}

DenseMatrix forward(const NetworkModel& model, const DenseMatrix& inputs) {
    check_input(model, inputs);
    DenseMatrix x = inputs;
    DenseMatrix y;
    const auto& layers = model.layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
        affine(layers[l], x, y);
        if (l + 1 < layers.size()) relu_inplace(y);
        std::swap(x, y);
    }
    return x;
}

DenseMatrix forward(const NetworkModel& model, const DenseMatrix& inputs, ForwardCache& cache) {
    check_input(model, inputs);
    const auto& layers = model.layers();
    cache.inputs.clear();
    cache.inputs.reserve(layers.size());
    cache.inputs.push_back(inputs);
    DenseMatrix y;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        affine(layers[l], cache.inputs.back(), y);
        if (l + 1 < layers.size()) {
            relu_inplace(y);
            cache.inputs.push_back(y);
        }
    }
    cache.model_checksum = model.checksum();
    return y;
}

DenseMatrix penultimate_features(const NetworkModel& model, const DenseMatrix& inputs) {
    check_input(model, inputs);
    DenseMatrix x = inputs;
    DenseMatrix y;
    const auto& layers = model.layers();
    for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
        affine(layers[l], x, y);
        relu_inplace(y);
        std::swap(x, y);
    }
    return x;
}

Gradients zero_gradients(const NetworkModel& model) {
    Gradients g;
    g.reserve(model.layers().size());
    for (const auto& layer : model.layers()) {
        g.push_back({DenseMatrix(layer.out_dim(), layer.in_dim()),
                     std::vector<double>(layer.out_dim(), 0.0)});
    }
    return g;
}

Gradients backward(const NetworkModel& model, const ForwardCache& cache,
                   const DenseMatrix& grad_logits) {
    const auto& layers = model.layers();
    if (cache.empty()) throw UsageError("backward called without a cached forward pass");
    if (cache.inputs.size() != layers.size() || cache.model_checksum != model.checksum()) {
        throw UsageError("backward: cached forward pass was recorded on different parameters");
    }
    const std::size_t batch = cache.inputs.front().rows();
    if (grad_logits.rows() != batch || grad_logits.cols() != model.output_dim()) {
        throw ShapeError("backward: upstream gradient is " + std::to_string(grad_logits.rows()) +
                         "x" + std::to_string(grad_logits.cols()) + ", expected " +
                         std::to_string(batch) + "x" + std::to_string(model.output_dim()));
    }

    Gradients grads = zero_gradients(model);
    DenseMatrix upstream = grad_logits;
    for (std::size_t l = layers.size(); l-- > 0;) {
        const DenseLayer& layer = layers[l];
        const DenseMatrix& x = cache.inputs[l];
        DenseLayer& g = grads[l];
        for (std::size_t r = 0; r < batch; ++r) {
            auto xr = x.row(r);
            auto ur = upstream.row(r);
            for (std::size_t o = 0; o < layer.out_dim(); ++o) {
                const double u = ur[o];
                if (u == 0.0) continue;
                g.bias[o] += u;
                auto gw = g.weights.row(o);
                for (std::size_t i = 0; i < xr.size(); ++i) gw[i] += u * xr[i];
            }
        }
        if (l == 0) break;
        // Propagate through W, then through the rectifier that produced x.
        DenseMatrix down(batch, layer.in_dim());
        for (std::size_t r = 0; r < batch; ++r) {
            auto ur = upstream.row(r);
            auto dr = down.row(r);
            for (std::size_t o = 0; o < layer.out_dim(); ++o) {
                const double u = ur[o];
                if (u == 0.0) continue;
                auto w = layer.weights.row(o);
                for (std::size_t i = 0; i < dr.size(); ++i) dr[i] += u * w[i];
            }
            auto xr = x.row(r);
            for (std::size_t i = 0; i < dr.size(); ++i) {
                if (xr[i] <= 0.0) dr[i] = 0.0;
            }
        }
        upstream = std::move(down);
    }
    return grads;
}

void save_model(const NetworkModel& model, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os.write("BICM", 4);
    write_pod<std::uint32_t>(os, 1);
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(model.layers().size()));
    for (const auto& layer : model.layers()) {
        write_pod<std::uint64_t>(os, layer.out_dim());
        write_pod<std::uint64_t>(os, layer.in_dim());
        for (double w : layer.weights.values()) write_pod(os, w);
        for (double b : layer.bias) write_pod(os, b);
    }
    if (!os) throw IoError("write failed for " + path.string());
}

NetworkModel load_model(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "BICM", 4) != 0) {
        throw FormatError("bad model magic in " + path.string());
    }
    const auto version = read_pod<std::uint32_t>(is, path);
    if (version != 1) throw FormatError("unsupported model version " + std::to_string(version));
    const auto count = read_pod<std::uint32_t>(is, path);
    std::vector<DenseLayer> layers;
    for (std::uint32_t l = 0; l < count; ++l) {
        const auto rows = read_pod<std::uint64_t>(is, path);
        const auto cols = read_pod<std::uint64_t>(is, path);
        DenseLayer layer{DenseMatrix(rows, cols), std::vector<double>(rows)};
        for (double& w : layer.weights.values()) w = read_pod<double>(is, path);
        for (double& b : layer.bias) b = read_pod<double>(is, path);
        layers.push_back(std::move(layer));
    }
    return NetworkModel(std::move(layers));
}

}  // namespace bic

#include "bic/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "bic/errors.hpp"
#include "bic/random.hpp"

namespace bic {
namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset,
                        const std::filesystem::path& path, const char* field) {
    if (offset + 4 > bytes.size()) {
        throw FormatError(path.string() + ": truncated header while reading " + field);
    }
    return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
           (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void write_be32(std::ostream& os, std::uint32_t v) {
    const std::array<char, 4> b{static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                                static_cast<char>(v >> 8), static_cast<char>(v)};
    os.write(b.data(), 4);
}

}  // namespace

std::vector<LabeledSample> load_idx(const std::filesystem::path& images,
                                    const std::filesystem::path& labels, SampleId first_id) {
    const auto img = read_all(images);
    const auto lab = read_all(labels);

    if (read_be32(img, 0, images, "magic") != kImageMagic) {
        throw FormatError(images.string() + ": magic is not 0x00000803 (image file)");
    }
    const std::uint32_t count = read_be32(img, 4, images, "image count");
    const std::uint32_t rows = read_be32(img, 8, images, "rows");
    const std::uint32_t cols = read_be32(img, 12, images, "cols");

    if (read_be32(lab, 0, labels, "magic") != kLabelMagic) {
        throw FormatError(labels.string() + ": magic is not 0x00000801 (label file)");
    }
    const std::uint32_t label_count = read_be32(lab, 4, labels, "label count");
    if (label_count != count) {
        throw FormatError("image count " + std::to_string(count) + " in " + images.string() +
                          " != label count " + std::to_string(label_count) + " in " +
                          labels.string());
    }
    const std::size_t pixels = std::size_t{rows} * cols;
    if (img.size() < 16 + pixels * count) {
        throw FormatError(images.string() + ": truncated pixel payload (expected " +
                          std::to_string(pixels * count) + " bytes)");
    }
    if (lab.size() < 8 + std::size_t{count}) {
        throw FormatError(labels.string() + ": truncated label payload (expected " +
                          std::to_string(count) + " bytes)");
    }

    std::vector<LabeledSample> out(count);
    for (std::size_t i = 0; i < count; ++i) {
        auto& s = out[i];
        s.features.resize(pixels);
        const unsigned char* px = img.data() + 16 + i * pixels;
        for (std::size_t p = 0; p < pixels; ++p) s.features[p] = px[p] / 255.0;
        s.label = lab[8 + i];
        s.id = first_id + i;
    }
    return out;
}

void write_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
               std::span<const LabeledSample> samples, std::uint32_t rows, std::uint32_t cols) {
    std::ofstream img(images, std::ios::binary | std::ios::trunc);
    std::ofstream lab(labels, std::ios::binary | std::ios::trunc);
    if (!img) throw IoError("cannot open " + images.string() + " for writing");
    if (!lab) throw IoError("cannot open " + labels.string() + " for writing");
    write_be32(img, kImageMagic);
    write_be32(img, static_cast<std::uint32_t>(samples.size()));
    write_be32(img, rows);
    write_be32(img, cols);
    write_be32(lab, kLabelMagic);
    write_be32(lab, static_cast<std::uint32_t>(samples.size()));
    for (const auto& s : samples) {
        if (s.features.size() != std::size_t{rows} * cols) {
            throw ShapeError("write_idx: sample " + std::to_string(s.id) + " has wrong length");
        }
        if (s.label > 255) throw ArgumentError("write_idx: label does not fit in a byte");
        for (double v : s.features) {
            img.put(static_cast<char>(std::clamp(std::lround(v * 255.0), 0L, 255L)));
        }
        lab.put(static_cast<char>(s.label));
    }
    if (!img || !lab) throw IoError("write failed for " + images.string());
}

DenseMatrix blob_centers(const BlobSpec& spec) {
    Rng rng(derive_seed(spec.seed, 0xC3));
    DenseMatrix centers(spec.num_classes, spec.dim);
    for (double& v : centers.values()) v = rng.uniform();
    return centers;
}

std::vector<LabeledSample> make_blobs(const BlobSpec& spec, std::uint64_t noise_stream,
                                      SampleId first_id) {
    if (spec.num_classes < 2) throw ArgumentError("make_blobs: num_classes must be >= 2");
    if (!(spec.spread > 0.0)) throw ArgumentError("make_blobs: spread must be > 0");
    if (spec.dim == 0) throw ArgumentError("make_blobs: dim must be >= 1");
    const DenseMatrix centers = blob_centers(spec);
    Rng rng(derive_seed(spec.seed, 0x1000 + noise_stream));
    std::vector<LabeledSample> out;
    out.reserve(spec.num_classes * spec.per_class);
    for (std::size_t c = 0; c < spec.num_classes; ++c) {
        auto center = centers.row(c);
        for (std::size_t i = 0; i < spec.per_class; ++i) {
            LabeledSample s;
            s.features.resize(spec.dim);
            for (std::size_t d = 0; d < spec.dim; ++d) {
                s.features[d] = center[d] + spec.spread * rng.normal();
            }
            s.label = c;
            s.id = first_id + out.size();
            out.push_back(std::move(s));
        }
    }
    return out;
}

ClassSchedule equal_schedule(std::vector<ClassId> order, std::size_t steps) {
    if (steps == 0 || order.size() % steps != 0) {
        throw ConfigError("cannot split " + std::to_string(order.size()) + " classes into " +
                          std::to_string(steps) + " equal increments");
    }
    ClassSchedule plan{std::move(order), {}};
    plan.increments.assign(steps, plan.order.size() / steps);
    return plan;
}

std::vector<ClassId> read_class_order(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open class order file " + path.string());
    std::vector<ClassId> order;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto last = line.find_last_not_of(" \t\r");
        const std::string token = line.substr(first, last - first + 1);
        std::size_t used = 0;
        unsigned long long v = 0;
        try {
            v = std::stoull(token, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != token.size() || token.front() == '-') {
            throw FormatError(path.string() + ":" + std::to_string(line_no) +
                              ": not a class id: '" + token + "'");
        }
        order.push_back(static_cast<ClassId>(v));
    }
    return order;
}

std::vector<ClassId> random_class_order(std::vector<ClassId> labels, std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0x0D));
    rng.shuffle(labels);
    return labels;
}

std::vector<ClassId> distinct_labels(std::span<const LabeledSample> samples) {
    std::set<ClassId> seen;
    for (const auto& s : samples) seen.insert(s.label);
    return {seen.begin(), seen.end()};
}

std::vector<IncrementData> schedule(const Dataset& dataset, const ClassSchedule& plan) {
    const auto labels = distinct_labels(dataset.train);
    std::map<ClassId, ClassId> remap;
    for (std::size_t i = 0; i < plan.order.size(); ++i) {
        if (!remap.emplace(plan.order[i], i).second) {
            throw ConfigError("class order lists class " + std::to_string(plan.order[i]) +
                              " twice");
        }
    }
    for (ClassId c : labels) {
        if (!remap.contains(c)) {
            throw ConfigError("class order is missing class " + std::to_string(c));
        }
    }
    if (remap.size() != labels.size()) {
        throw ConfigError("class order has " + std::to_string(remap.size()) +
                          " classes but the training data has " + std::to_string(labels.size()));
    }
    std::size_t total = 0;
    for (std::size_t m : plan.increments) {
        if (m == 0) throw ConfigError("increment sizes must be >= 1");
        total += m;
    }
    if (total != plan.order.size()) {
        throw ConfigError("increment sizes sum to " + std::to_string(total) + " but there are " +
                          std::to_string(plan.order.size()) + " classes");
    }

    std::vector<IncrementData> steps;
    std::size_t seen = 0;
    for (std::size_t t = 0; t < plan.increments.size(); ++t) {
        IncrementData inc;
        inc.step = t;
        inc.old_classes = seen;
        inc.new_classes = plan.increments[t];
        const std::size_t upto = seen + inc.new_classes;
        for (const auto& s : dataset.train) {
            const ClassId mapped = remap.at(s.label);
            if (mapped >= seen && mapped < upto) {
                inc.train.push_back(s);
                inc.train.back().label = mapped;
            }
        }
        for (const auto& s : dataset.test) {
            auto it = remap.find(s.label);
            if (it == remap.end()) {
                throw DataError("test label " + std::to_string(s.label) +
                                " never appears in the class order");
            }
            if (it->second < upto) {
                inc.test.push_back(s);
                inc.test.back().label = it->second;
            }
        }
        seen = upto;
        steps.push_back(std::move(inc));
    }
    return steps;
}

DenseMatrix feature_matrix(std::span<const LabeledSample> samples) {
    if (samples.empty()) return {};
    const std::size_t dim = samples.front().features.size();
    DenseMatrix out(samples.size(), dim);
    for (std::size_t r = 0; r < samples.size(); ++r) {
        if (samples[r].features.size() != dim) {
            throw ShapeError("sample " + std::to_string(samples[r].id) + " has " +
                             std::to_string(samples[r].features.size()) +
                             " features, expected " + std::to_string(dim));
        }
        std::copy(samples[r].features.begin(), samples[r].features.end(), out.row(r).begin());
    }
    return out;
}

std::vector<ClassId> label_vector(std::span<const LabeledSample> samples) {
    std::vector<ClassId> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(s.label);
    return out;
}

}  // namespace bic

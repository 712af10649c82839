#include "bic/exemplar_store.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <unordered_map>

#include "bic/errors.hpp"
#include "bic/random.hpp"

namespace bic {
namespace {

template <typename T>
void write_pod(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const std::filesystem::path& path) {
    T v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) {
        throw FormatError("truncated exemplar manifest " + path.string());
    }
    return v;
}

}  // namespace

std::string SplitRatio::to_string() const {
    return std::to_string(train_parts) + ":" + std::to_string(val_parts);
}

SplitRatio SplitRatio::parse(const std::string& text) {
    const auto colon = text.find(':');
    auto parse_part = [&](const std::string& part) -> std::size_t {
        if (part.empty() || !std::all_of(part.begin(), part.end(), ::isdigit)) {
            throw ConfigError("split ratio '" + text + "' must look like 9:1");
        }
        return std::stoul(part);
    };
    if (colon == std::string::npos) throw ConfigError("split ratio '" + text + "' must look like 9:1");
    SplitRatio r{parse_part(text.substr(0, colon)), parse_part(text.substr(colon + 1))};
    if (r.train_parts == 0 || r.val_parts == 0) {
        throw ConfigError("split ratio '" + text + "' needs non-zero parts");
    }
    return r;
}

std::size_t ExemplarStore::total() const {
    std::size_t n = 0;
    for (const auto& [c, samples] : per_class_) n += samples.size();
    return n;
}

std::size_t ExemplarStore::count(ClassId c) const {
    auto it = per_class_.find(c);
    return it == per_class_.end() ? 0 : it->second.size();
}

void ExemplarStore::add_class(ClassId c, std::vector<LabeledSample> ordered) {
    if (per_class_.contains(c)) {
        throw DataError("exemplar store already holds class " + std::to_string(c));
    }
    per_class_.emplace(c, std::move(ordered));
}

void ExemplarStore::rebalance(std::size_t classes_now_known) {
    if (classes_now_known == 0) throw ArgumentError("rebalance: no known classes");
    const auto quotas = class_quotas(budget_, classes_now_known);
    for (auto& [c, samples] : per_class_) {
        if (c >= classes_now_known) {
            throw DataError("rebalance: stored class " + std::to_string(c) + " is not among the " +
                            std::to_string(classes_now_known) + " known classes");
        }
        if (samples.size() > quotas[c]) samples.resize(quotas[c]);
    }
}

std::vector<LabeledSample> ExemplarStore::all() const {
    std::vector<LabeledSample> out;
    out.reserve(total());
    for (const auto& [c, samples] : per_class_) out.insert(out.end(), samples.begin(), samples.end());
    return out;
}

std::vector<std::size_t> class_quotas(std::size_t budget, std::size_t classes) {
    if (classes == 0) throw ArgumentError("class_quotas: classes must be >= 1");
    const std::size_t base = budget / classes;
    if (base == 0) {
        throw DataError("exemplar budget " + std::to_string(budget) + " is too small for " +
                        std::to_string(classes) + " classes");
    }
    std::vector<std::size_t> q(classes, base);
    for (std::size_t c = 0; c < budget % classes; ++c) ++q[c];
    return q;
}

std::vector<std::size_t> select_random(std::size_t population, std::size_t count,
                                       std::uint64_t seed, std::vector<std::string>* warnings) {
    if (count > population) {
        if (warnings) {
            warnings->push_back("select_random: requested " + std::to_string(count) +
                                " exemplars from " + std::to_string(population) +
                                " samples; taking all");
        }
        count = population;
    }
    Rng rng(seed);
    std::vector<std::size_t> idx(population);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    // Partial Fisher-Yates: the first `count` slots are the draw.
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(population - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(count);
    return idx;
}

std::vector<std::size_t> select_herding(const DenseMatrix& features, std::size_t count) {
    const std::size_t n = features.rows();
    const std::size_t dim = features.cols();
    if (n == 0) throw DataError("select_herding: empty feature set");
    count = std::min(count, n);

    std::vector<double> mu(dim, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        auto f = features.row(r);
        for (std::size_t d = 0; d < dim; ++d) mu[d] += f[d];
    }
    for (double& v : mu) v /= static_cast<double>(n);

    std::vector<double> running(dim, 0.0);
    std::vector<bool> taken(n, false);
    std::vector<std::size_t> order;
    order.reserve(count);
    for (std::size_t k = 1; k <= count; ++k) {
        const double inv = 1.0 / static_cast<double>(k);
        std::size_t best = n;
        double best_dist = std::numeric_limits<double>::infinity();
        for (std::size_t r = 0; r < n; ++r) {
            if (taken[r]) continue;
            auto f = features.row(r);
            double dist = 0.0;
            for (std::size_t d = 0; d < dim; ++d) {
                const double diff = mu[d] - (running[d] + f[d]) * inv;
                dist += diff * diff;
            }
            if (dist < best_dist) {
                best_dist = dist;
                best = r;
            }
        }
        taken[best] = true;
        order.push_back(best);
        auto f = features.row(best);
        for (std::size_t d = 0; d < dim; ++d) running[d] += f[d];
    }
    return order;
}

SplitSets split_train_val(const ExemplarStore& store,
                          std::span<const LabeledSample> new_class_samples, SplitRatio ratio,
                          std::uint64_t seed) {
    if (ratio.train_parts == 0 || ratio.val_parts == 0) {
        throw ConfigError("split ratio needs non-zero parts");
    }
    const double frac = ratio.val_fraction();
    auto val_size = [frac](std::size_t count) {
        return std::max<std::size_t>(1, static_cast<std::size_t>(
                                            std::llround(static_cast<double>(count) * frac)));
    };

    std::map<ClassId, std::vector<LabeledSample>> fresh;
    for (const auto& s : new_class_samples) {
        if (store.per_class().contains(s.label)) {
            throw DataError("new-class sample " + std::to_string(s.id) +
                            " belongs to stored class " + std::to_string(s.label));
        }
        fresh[s.label].push_back(s);
    }

    std::size_t per_class = std::numeric_limits<std::size_t>::max();
    for (const auto& [c, samples] : store.per_class()) {
        if (samples.empty()) throw DataError("old class " + std::to_string(c) + " has no exemplars");
        per_class = std::min(per_class, val_size(samples.size()));
    }
    for (const auto& [c, samples] : fresh) {
        per_class = std::min(per_class, store.empty() ? val_size(samples.size()) : samples.size());
    }
    if (per_class == std::numeric_limits<std::size_t>::max()) per_class = 0;

    SplitSets out;
    out.val_per_class = per_class;
    auto split_class = [&](ClassId c, const std::vector<LabeledSample>& samples,
                           std::vector<LabeledSample>& train, std::vector<LabeledSample>& val) {
        Rng rng(derive_seed(seed, c));
        auto perm = permutation(samples.size(), rng);
        std::vector<bool> held(samples.size(), false);
        for (std::size_t i = 0; i < per_class; ++i) held[perm[i]] = true;
        for (std::size_t i = 0; i < per_class; ++i) val.push_back(samples[perm[i]]);
        for (std::size_t i = 0; i < samples.size(); ++i) {
            if (!held[i]) train.push_back(samples[i]);
        }
    };
    for (const auto& [c, samples] : store.per_class()) split_class(c, samples, out.train_old, out.val_old);
    for (const auto& [c, samples] : fresh) split_class(c, samples, out.train_new, out.val_new);
    return out;
}

void save_manifest(const ExemplarStore& store, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os.write("BICX", 4);
    write_pod<std::uint32_t>(os, 1);
    write_pod<std::uint64_t>(os, store.budget());
    write_pod<std::uint64_t>(os, store.class_count());
    for (const auto& [c, samples] : store.per_class()) {
        write_pod<std::uint64_t>(os, c);
        write_pod<std::uint64_t>(os, samples.size());
        for (const auto& s : samples) write_pod<std::uint64_t>(os, s.id);
    }
    if (!os) throw IoError("write failed for " + path.string());
}

ExemplarStore load_manifest(const std::filesystem::path& path,
                            std::span<const LabeledSample> pool) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "BICX", 4) != 0) {
        throw FormatError("bad exemplar manifest magic in " + path.string());
    }
    if (read_pod<std::uint32_t>(is, path) != 1) {
        throw FormatError("unsupported exemplar manifest version in " + path.string());
    }
    std::unordered_map<SampleId, const LabeledSample*> by_id;
    for (const auto& s : pool) by_id.emplace(s.id, &s);

    ExemplarStore store(read_pod<std::uint64_t>(is, path));
    const auto classes = read_pod<std::uint64_t>(is, path);
    for (std::uint64_t i = 0; i < classes; ++i) {
        const auto c = static_cast<ClassId>(read_pod<std::uint64_t>(is, path));
        const auto n = read_pod<std::uint64_t>(is, path);
        std::vector<LabeledSample> samples;
        for (std::uint64_t j = 0; j < n; ++j) {
            const auto id = read_pod<std::uint64_t>(is, path);
            auto it = by_id.find(id);
            if (it == by_id.end()) {
                throw DataError("manifest " + path.string() + " references unknown sample " +
                                std::to_string(id));
            }
            samples.push_back(*it->second);
            samples.back().label = c;
        }
        store.add_class(c, std::move(samples));
    }
    return store;
}

}  // namespace bic

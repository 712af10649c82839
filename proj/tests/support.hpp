#pragma once

// Shared test helpers. Everything here is written independently of the
// library code it is used to check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "bic/data.hpp"
#include "bic/matrix.hpp"

namespace testing {

inline double relative_error(double analytic, double numeric) {
    const double scale = std::max(std::abs(analytic), std::abs(numeric));
    if (scale < 1e-9) return std::abs(analytic - numeric);
    return std::abs(analytic - numeric) / scale;
}

/// Central difference of f at x along coordinate i, step h.
inline double central_difference(const std::function<double(std::vector<double>&)>& f,
                                 std::vector<double> x, std::size_t i, double h = 1e-5) {
    const double orig = x[i];
    x[i] = orig + h;
    const double up = f(x);
    x[i] = orig - h;
    const double down = f(x);
    return (up - down) / (2.0 * h);
}

/// Softmax in long double with no shared code.
inline std::vector<double> ref_softmax(const std::vector<double>& z) {
    long double mx = z[0];
    for (double v : z) mx = std::max<long double>(mx, v);
    long double sum = 0;
    for (double v : z) sum += std::exp(static_cast<long double>(v) - mx);
    std::vector<double> p;
    for (double v : z) p.push_back(static_cast<double>(std::exp(static_cast<long double>(v) - mx) / sum));
    return p;
}

inline bic::DenseMatrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& gen,
                                      double scale = 1.0) {
    std::uniform_real_distribution<double> u(-scale, scale);
    bic::DenseMatrix m(rows, cols);
    for (double& v : m.values()) v = u(gen);
    return m;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path fresh_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "bic-tests" / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Ten well separated blob classes, small enough for sub-second runs.
inline bic::Dataset small_blobs(std::size_t per_class = 40, std::size_t test_per_class = 20,
                                double spread = 0.3) {
    bic::BlobSpec spec{10, per_class, 8, spread, 7};
    bic::Dataset d;
    d.train = bic::make_blobs(spec, 0, 0);
    bic::BlobSpec test_spec = spec;
    test_spec.per_class = test_per_class;
    d.test = bic::make_blobs(test_spec, 1, d.train.size());
    d.feature_dim = spec.dim;
    return d;
}

}  // namespace testing

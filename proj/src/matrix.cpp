#include "bic/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bic/errors.hpp"

namespace bic {

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols) {
        throw ShapeError("matrix data length " + std::to_string(data_.size()) + " != " +
                         std::to_string(rows) + "x" + std::to_string(cols));
    }
}

void DenseMatrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void DenseMatrix::append_rows(const DenseMatrix& other) {
    if (empty() && rows_ == 0) cols_ = other.cols_;
    if (other.cols_ != cols_) {
        throw ShapeError("append_rows: column count " + std::to_string(other.cols_) + " != " +
                         std::to_string(cols_));
    }
    data_.insert(data_.end(), other.data_.begin(), other.data_.end());
    rows_ += other.rows_;
}

DenseMatrix DenseMatrix::column_slice(std::size_t first, std::size_t count) const {
    if (first + count > cols_) {
        throw ShapeError("column_slice [" + std::to_string(first) + ", " +
                         std::to_string(first + count) + ") exceeds " + std::to_string(cols_) +
                         " columns");
    }
    DenseMatrix out(rows_, count);
    for (std::size_t r = 0; r < rows_; ++r) {
        auto src = row(r).subspan(first, count);
        std::copy(src.begin(), src.end(), out.row(r).begin());
    }
    return out;
}

bool DenseMatrix::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

DenseMatrix stack_rows(std::span<const std::vector<double>> rows) {
    if (rows.empty()) return {};
    const std::size_t cols = rows.front().size();
    DenseMatrix out(rows.size(), cols);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != cols) {
            throw ShapeError("stack_rows: row " + std::to_string(r) + " has length " +
                             std::to_string(rows[r].size()) + ", expected " +
                             std::to_string(cols));
        }
        std::copy(rows[r].begin(), rows[r].end(), out.row(r).begin());
    }
    return out;
}

}  // namespace bic

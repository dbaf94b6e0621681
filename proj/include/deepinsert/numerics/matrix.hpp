#pragma once

#include <algorithm>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace deepinsert::numerics {

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Dense row-major matrix. Vectors (norm gains, biases) are stored as 1 x n.
template <typename T>
class BasicMatrix {
public:
    using value_type = T;

    BasicMatrix() = default;
    BasicMatrix(std::size_t rows, std::size_t cols, T fill = T{0})
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    BasicMatrix(std::size_t rows, std::size_t cols, std::vector<T> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            throw ShapeError("matrix data length " + std::to_string(data_.size()) + " != " + std::to_string(rows_) +
                             "x" + std::to_string(cols_));
        }
    }

    static BasicMatrix from_rows(std::initializer_list<std::initializer_list<T>> rows) {
        const std::size_t r = rows.size();
        const std::size_t c = r ? rows.begin()->size() : 0;
        std::vector<T> data;
        data.reserve(r * c);
        for (const auto& row : rows) {
            if (row.size() != c) throw ShapeError("ragged initializer rows");
            data.insert(data.end(), row.begin(), row.end());
        }
        return BasicMatrix(r, c, std::move(data));
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::span<T> values() { return data_; }
    std::span<const T> values() const { return data_; }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    std::string shape_string() const { return std::to_string(rows_) + "x" + std::to_string(cols_); }

    friend bool operator==(const BasicMatrix& a, const BasicMatrix& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

using Matrix = BasicMatrix<float>;
using MatrixD = BasicMatrix<double>;

template <typename To, typename From>
BasicMatrix<To> matrix_cast(const BasicMatrix<From>& m) {
    std::vector<To> data(m.values().begin(), m.values().end());
    return BasicMatrix<To>(m.rows(), m.cols(), std::move(data));
}

// Rows [begin, end) of m.
template <typename T>
BasicMatrix<T> slice_rows(const BasicMatrix<T>& m, std::size_t begin, std::size_t end) {
    if (begin > end || end > m.rows()) throw ShapeError("row slice out of range for " + m.shape_string());
    std::vector<T> data(m.data() + begin * m.cols(), m.data() + end * m.cols());
    return BasicMatrix<T>(end - begin, m.cols(), std::move(data));
}

// Columns [begin, end) of m.
template <typename T>
BasicMatrix<T> slice_cols(const BasicMatrix<T>& m, std::size_t begin, std::size_t end) {
    if (begin > end || end > m.cols()) throw ShapeError("column slice out of range for " + m.shape_string());
    BasicMatrix<T> out(m.rows(), end - begin);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        auto src = m.row(r);
        std::copy(src.begin() + begin, src.begin() + end, out.row(r).begin());
    }
    return out;
}

template <typename T>
void write_cols(BasicMatrix<T>& dst, const BasicMatrix<T>& src, std::size_t col_offset) {
    if (src.rows() != dst.rows() || col_offset + src.cols() > dst.cols()) {
        throw ShapeError("cannot write " + src.shape_string() + " into " + dst.shape_string());
    }
    for (std::size_t r = 0; r < src.rows(); ++r) {
        auto s = src.row(r);
        std::copy(s.begin(), s.end(), dst.row(r).begin() + col_offset);
    }
}

template <typename T>
BasicMatrix<T> vstack(const BasicMatrix<T>& top, const BasicMatrix<T>& bottom) {
    if (top.rows() == 0) return bottom;
    if (bottom.rows() == 0) return top;
    if (top.cols() != bottom.cols()) {
        throw ShapeError("vstack width mismatch " + top.shape_string() + " vs " + bottom.shape_string());
    }
    std::vector<T> data(top.values().begin(), top.values().end());
    data.insert(data.end(), bottom.values().begin(), bottom.values().end());
    return BasicMatrix<T>(top.rows() + bottom.rows(), top.cols(), std::move(data));
}

template <typename T>
BasicMatrix<T> transpose(const BasicMatrix<T>& m) {
    BasicMatrix<T> out(m.cols(), m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c) out(c, r) = m(r, c);
    return out;
}

template <typename T>
void add_inplace(BasicMatrix<T>& dst, const BasicMatrix<T>& src) {
    if (dst.rows() != src.rows() || dst.cols() != src.cols()) {
        throw ShapeError("add shape mismatch " + dst.shape_string() + " vs " + src.shape_string());
    }
    T* d = dst.data();
    const T* s = src.data();
    for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

}  // namespace deepinsert::numerics

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace owdet::nn {

/// Dense row-major tensor. Shapes are (C,H,W) for feature maps and (N,M)
/// for matrices; the data layout is the natural nested row-major order.
template <typename T>
struct Tensor {
    std::vector<int> shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        data.assign(static_cast<size_t>(count()), T(0));
    }

    long long count() const {
        long long n = 1;
        for (int d : shape) n *= d;
        return n;
    }
    bool empty() const { return data.empty(); }
    void zero() { std::fill(data.begin(), data.end(), T(0)); }

    T& operator[](size_t i) { return data[i]; }
    const T& operator[](size_t i) const { return data[i]; }

    // (C,H,W) accessors
    T& at(int c, int y, int x) {
        return data[(static_cast<size_t>(c) * shape[1] + y) * shape[2] + x];
    }
    const T& at(int c, int y, int x) const {
        return data[(static_cast<size_t>(c) * shape[1] + y) * shape[2] + x];
    }
};

template <typename T>
using MatMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

template <typename T>
MatMap<T> as_matrix(Tensor<T>& t, long long rows, long long cols) {
    if (rows * cols != t.count()) throw std::logic_error("as_matrix: size mismatch");
    return MatMap<T>(t.data.data(), rows, cols);
}

template <typename T>
ConstMatMap<T> as_matrix(const Tensor<T>& t, long long rows, long long cols) {
    if (rows * cols != t.count()) throw std::logic_error("as_matrix: size mismatch");
    return ConstMatMap<T>(t.data.data(), rows, cols);
}

template <typename T>
T sigmoid(T x) {
    if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
    const T e = std::exp(x);
    return e / (T(1) + e);
}

template <typename T>
T softplus(T x) {
    if (x > T(30)) return x;
    if (x < T(-30)) return std::exp(x);
    return std::log1p(std::exp(x));
}

} // namespace owdet::nn

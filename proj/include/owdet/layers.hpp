#pragma once

#include <cmath>
#include <random>

#include "owdet/geometry.hpp"
#include "owdet/tensor.hpp"

namespace owdet::nn {

/// 2-D convolution, square kernel, zero padding. Weights live in a
/// (out_ch, in_ch*k*k) matrix so forward/backward are single GEMMs over an
/// im2col buffer. Gradients accumulate into dw/db until zero_grad().
template <typename T>
struct Conv2d {
    int in_ch = 0, out_ch = 0, k = 3, stride = 1, pad = 1;
    Tensor<T> w, b;
    Tensor<T> dw, db;

    Conv2d() = default;
    Conv2d(int in_c, int out_c, int kernel, int stride_, int pad_)
        : in_ch(in_c), out_ch(out_c), k(kernel), stride(stride_), pad(pad_),
          w({out_c, in_c * kernel * kernel}), b({out_c}),
          dw({out_c, in_c * kernel * kernel}), db({out_c}) {}

    void init(std::mt19937_64& rng) {
        const T std_dev = std::sqrt(T(2) / T(in_ch * k * k));
        std::normal_distribution<double> dist(0.0, 1.0);
        for (auto& v : w.data) v = static_cast<T>(dist(rng)) * std_dev;
        b.zero();
    }

    int out_dim(int in_dim) const { return (in_dim + 2 * pad - k) / stride + 1; }

    void im2col(const Tensor<T>& x, Tensor<T>& col) const {
        const int H = x.shape[1], W = x.shape[2];
        const int OH = out_dim(H), OW = out_dim(W);
        col = Tensor<T>({in_ch * k * k, OH * OW});
        for (int c = 0; c < in_ch; ++c)
            for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) {
                    const int row = (c * k + ky) * k + kx;
                    T* dst = &col.data[static_cast<size_t>(row) * OH * OW];
                    for (int oy = 0; oy < OH; ++oy) {
                        const int iy = oy * stride + ky - pad;
                        if (iy < 0 || iy >= H) {
                            dst += OW;
                            continue;
                        }
                        const T* src = &x.data[(static_cast<size_t>(c) * H + iy) * W];
                        for (int ox = 0; ox < OW; ++ox, ++dst) {
                            const int ix = ox * stride + kx - pad;
                            if (ix >= 0 && ix < W) *dst = src[ix];
                        }
                    }
                }
    }

    Tensor<T> forward(const Tensor<T>& x, Tensor<T>& col_cache) const {
        const int OH = out_dim(x.shape[1]), OW = out_dim(x.shape[2]);
        im2col(x, col_cache);
        Tensor<T> y({out_ch, OH, OW});
        auto ym = as_matrix(y, out_ch, OH * OW);
        ym.noalias() = as_matrix(w, out_ch, in_ch * k * k) *
                       as_matrix(col_cache, in_ch * k * k, OH * OW);
        for (int c = 0; c < out_ch; ++c) ym.row(c).array() += b[static_cast<size_t>(c)];
        return y;
    }

    /// dy: (out_ch, OH, OW). Returns dx with the shape of the forward input.
    Tensor<T> backward(const Tensor<T>& col_cache, const Tensor<T>& dy, int in_h, int in_w) {
        const int OH = dy.shape[1], OW = dy.shape[2];
        auto dym = as_matrix(dy, out_ch, OH * OW);
        as_matrix(dw, out_ch, in_ch * k * k).noalias() +=
            dym * as_matrix(col_cache, in_ch * k * k, OH * OW).transpose();
        for (int c = 0; c < out_ch; ++c) db[static_cast<size_t>(c)] += dym.row(c).sum();

        Tensor<T> dcol({in_ch * k * k, OH * OW});
        as_matrix(dcol, in_ch * k * k, OH * OW).noalias() =
            as_matrix(w, out_ch, in_ch * k * k).transpose() * dym;

        Tensor<T> dx({in_ch, in_h, in_w});
        for (int c = 0; c < in_ch; ++c)
            for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) {
                    const int row = (c * k + ky) * k + kx;
                    const T* src = &dcol.data[static_cast<size_t>(row) * OH * OW];
                    for (int oy = 0; oy < OH; ++oy) {
                        const int iy = oy * stride + ky - pad;
                        if (iy < 0 || iy >= in_h) {
                            src += OW;
                            continue;
                        }
                        T* dst = &dx.data[(static_cast<size_t>(c) * in_h + iy) * in_w];
                        for (int ox = 0; ox < OW; ++ox, ++src) {
                            const int ix = ox * stride + kx - pad;
                            if (ix >= 0 && ix < in_w) dst[ix] += *src;
                        }
                    }
                }
        return dx;
    }

    void zero_grad() {
        dw.zero();
        db.zero();
    }
};

/// Fully connected layer on (N, in) row-major matrices.
template <typename T>
struct Linear {
    int in_dim = 0, out_dim = 0;
    Tensor<T> w, b; // w: (out, in)
    Tensor<T> dw, db;

    Linear() = default;
    Linear(int in_d, int out_d)
        : in_dim(in_d), out_dim(out_d), w({out_d, in_d}), b({out_d}), dw({out_d, in_d}),
          db({out_d}) {}

    void init(std::mt19937_64& rng) {
        const T std_dev = std::sqrt(T(2) / T(in_dim));
        std::normal_distribution<double> dist(0.0, 1.0);
        for (auto& v : w.data) v = static_cast<T>(dist(rng)) * std_dev;
        b.zero();
    }

    Tensor<T> forward(const Tensor<T>& x) const {
        const int n = x.shape[0];
        Tensor<T> y({n, out_dim});
        as_matrix(y, n, out_dim).noalias() =
            as_matrix(x, n, in_dim) * as_matrix(w, out_dim, in_dim).transpose();
        auto ym = as_matrix(y, n, out_dim);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < out_dim; ++j) ym(i, j) += b[static_cast<size_t>(j)];
        return y;
    }

    Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& dy) {
        const int n = x.shape[0];
        as_matrix(dw, out_dim, in_dim).noalias() +=
            as_matrix(dy, n, out_dim).transpose() * as_matrix(x, n, in_dim);
        auto dbm = as_matrix(db, out_dim, 1);
        dbm.noalias() += as_matrix(dy, n, out_dim).transpose() *
                         Eigen::Matrix<T, Eigen::Dynamic, 1>::Ones(n);
        Tensor<T> dx({n, in_dim});
        as_matrix(dx, n, in_dim).noalias() =
            as_matrix(dy, n, out_dim) * as_matrix(w, out_dim, in_dim);
        return dx;
    }

    void zero_grad() {
        dw.zero();
        db.zero();
    }
};

template <typename T>
void relu_inplace(Tensor<T>& x) {
    for (auto& v : x.data)
        if (v < T(0)) v = T(0);
}

/// dy masked by the post-activation values (y==0 where the unit was off).
template <typename T>
void relu_backward_inplace(const Tensor<T>& y, Tensor<T>& dy) {
    for (size_t i = 0; i < y.data.size(); ++i)
        if (y.data[i] <= T(0)) dy.data[i] = T(0);
}

template <typename T>
Tensor<T> upsample2x(const Tensor<T>& x) {
    const int C = x.shape[0], H = x.shape[1], W = x.shape[2];
    Tensor<T> y({C, H * 2, W * 2});
    for (int c = 0; c < C; ++c)
        for (int yy = 0; yy < H * 2; ++yy)
            for (int xx = 0; xx < W * 2; ++xx) y.at(c, yy, xx) = x.at(c, yy / 2, xx / 2);
    return y;
}

template <typename T>
Tensor<T> upsample2x_backward(const Tensor<T>& dy) {
    const int C = dy.shape[0], H = dy.shape[1] / 2, W = dy.shape[2] / 2;
    Tensor<T> dx({C, H, W});
    for (int c = 0; c < C; ++c)
        for (int yy = 0; yy < dy.shape[1]; ++yy)
            for (int xx = 0; xx < dy.shape[2]; ++xx) dx.at(c, yy / 2, xx / 2) += dy.at(c, yy, xx);
    return dx;
}

/// RoIAlign with one bilinear sample at each bin centre.
struct RoiSamplePoint {
    int x0, y0;       // top-left feature cell
    double wx, wy;    // fractional offsets
};

template <typename T>
struct RoiAlignCache {
    std::vector<RoiSamplePoint> points; // pool*pool entries
};

template <typename T>
Tensor<T> roi_align(const Tensor<T>& feat, const BoundingBox& box, double stride, int pool,
                    RoiAlignCache<T>& cache) {
    const int C = feat.shape[0], H = feat.shape[1], W = feat.shape[2];
    Tensor<T> out({C, pool, pool});
    cache.points.resize(static_cast<size_t>(pool) * pool);
    const double bw = box.width() / pool, bh = box.height() / pool;
    for (int iy = 0; iy < pool; ++iy)
        for (int ix = 0; ix < pool; ++ix) {
            // sample at the bin centre, in feature-map coordinates
            const double sx = (box.x1 + (ix + 0.5) * bw) / stride - 0.5;
            const double sy = (box.y1 + (iy + 0.5) * bh) / stride - 0.5;
            const double cx = std::clamp(sx, 0.0, static_cast<double>(W - 1));
            const double cy = std::clamp(sy, 0.0, static_cast<double>(H - 1));
            RoiSamplePoint p;
            p.x0 = std::min(static_cast<int>(cx), W - 2 < 0 ? 0 : W - 2);
            p.y0 = std::min(static_cast<int>(cy), H - 2 < 0 ? 0 : H - 2);
            p.wx = cx - p.x0;
            p.wy = cy - p.y0;
            cache.points[static_cast<size_t>(iy) * pool + ix] = p;
            for (int c = 0; c < C; ++c) {
                const T v00 = feat.at(c, p.y0, p.x0);
                const T v01 = feat.at(c, p.y0, std::min(p.x0 + 1, W - 1));
                const T v10 = feat.at(c, std::min(p.y0 + 1, H - 1), p.x0);
                const T v11 = feat.at(c, std::min(p.y0 + 1, H - 1), std::min(p.x0 + 1, W - 1));
                const T top = v00 + static_cast<T>(p.wx) * (v01 - v00);
                const T bot = v10 + static_cast<T>(p.wx) * (v11 - v10);
                out.at(c, iy, ix) = top + static_cast<T>(p.wy) * (bot - top);
            }
        }
    return out;
}

template <typename T>
void roi_align_backward(const RoiAlignCache<T>& cache, const Tensor<T>& dout, Tensor<T>& dfeat) {
    const int C = dfeat.shape[0], H = dfeat.shape[1], W = dfeat.shape[2];
    const int pool = dout.shape[1];
    for (int iy = 0; iy < pool; ++iy)
        for (int ix = 0; ix < pool; ++ix) {
            const auto& p = cache.points[static_cast<size_t>(iy) * pool + ix];
            const int x1 = std::min(p.x0 + 1, W - 1), y1 = std::min(p.y0 + 1, H - 1);
            for (int c = 0; c < C; ++c) {
                const T g = dout.at(c, iy, ix);
                const T wx = static_cast<T>(p.wx), wy = static_cast<T>(p.wy);
                dfeat.at(c, p.y0, p.x0) += g * (T(1) - wx) * (T(1) - wy);
                dfeat.at(c, p.y0, x1) += g * wx * (T(1) - wy);
                dfeat.at(c, y1, p.x0) += g * (T(1) - wx) * wy;
                dfeat.at(c, y1, x1) += g * wx * wy;
            }
        }
}

} // namespace owdet::nn

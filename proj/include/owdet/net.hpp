#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "owdet/dataset.hpp"
#include "owdet/layers.hpp"
#include "owdet/targets.hpp"
#include "owdet/tensor.hpp"

namespace owdet::nn {

/// Architecture constants. The backbone is four conv blocks feeding a
/// two-level feature pyramid (strides 4 and 8).
struct NetShape {
    int image_size = 128;
    int in_channels = 3;
    int c1 = 16, c2 = 32, c3 = 32, c4 = 64;
    int fpn = 32;
    int roi_pool = 4;
    int fc_dim = 128;
    double level_split = 32.0; // sqrt(box area) below -> stride-4 level

    int h4() const { return image_size / 4; }
    int h8() const { return image_size / 8; }
    bool operator==(const NetShape&) const = default;
};

template <typename T>
struct BackboneActs {
    Tensor<T> x;
    Tensor<T> col1, col2, col3, col4;
    Tensor<T> a1, a2, a3, a4; // post-ReLU block outputs
    Tensor<T> col_lat4, col_lat8, col_s4, col_s8;
    Tensor<T> l4, l8, up8, sum4;
    Tensor<T> p4, p8; // pyramid features
};

template <typename T>
struct RpnActs {
    // per level: shared 3x3 conv output (post-ReLU) and the 1x1 head caches
    Tensor<T> col_conv[2], h[2];
    Tensor<T> col_ctr[2], col_box[2];
    Tensor<T> ctr[2];     // (1, H, W) logits
    Tensor<T> box_raw[2]; // (4, H, W) raw offsets; pixels = softplus(raw) * stride
};

template <typename T>
struct RoiActs {
    std::vector<int> levels;                 // pooling level per proposal
    std::vector<RoiAlignCache<T>> caches;
    Tensor<T> pooled;                        // (N, fpn*pool*pool)
    Tensor<T> f1, f2;                        // post-ReLU fc outputs
};

/// The four RoI head outputs, one row per proposal.
template <typename T>
struct RoIOutputs {
    Tensor<T> cls;     // (N, K+1) logits, background last
    Tensor<T> clsbox;  // (N, 4K) per-class deltas
    Tensor<T> agnbox;  // (N, 4) class-agnostic delta
    Tensor<T> iou;     // (N, 1) logit
    int known = 0;
};

template <typename T>
class DetectorNet {
  public:
    NetShape shape;
    int num_known = 0;
    std::uint64_t init_seed = 0;

    Conv2d<T> conv1, conv2, conv3, conv4;
    Conv2d<T> lat4, lat8, smooth4, smooth8;
    Conv2d<T> rpn_conv, rpn_ctr, rpn_box;
    Linear<T> fc1, fc2;
    Linear<T> head_cls, head_clsbox, head_agnbox, head_iou;

    DetectorNet() = default;
    DetectorNet(const NetShape& s, int known, std::uint64_t seed) { build(s, known, seed); }

    void build(const NetShape& s, int known, std::uint64_t seed) {
        shape = s;
        num_known = known;
        init_seed = seed;
        conv1 = Conv2d<T>(s.in_channels, s.c1, 3, 2, 1);
        conv2 = Conv2d<T>(s.c1, s.c2, 3, 2, 1);
        conv3 = Conv2d<T>(s.c2, s.c3, 3, 1, 1);
        conv4 = Conv2d<T>(s.c3, s.c4, 3, 2, 1);
        lat4 = Conv2d<T>(s.c3, s.fpn, 1, 1, 0);
        lat8 = Conv2d<T>(s.c4, s.fpn, 1, 1, 0);
        smooth4 = Conv2d<T>(s.fpn, s.fpn, 3, 1, 1);
        smooth8 = Conv2d<T>(s.fpn, s.fpn, 3, 1, 1);
        rpn_conv = Conv2d<T>(s.fpn, s.fpn, 3, 1, 1);
        rpn_ctr = Conv2d<T>(s.fpn, 1, 1, 1, 0);
        rpn_box = Conv2d<T>(s.fpn, 4, 1, 1, 0);
        const int pooled_dim = s.fpn * s.roi_pool * s.roi_pool;
        fc1 = Linear<T>(pooled_dim, s.fc_dim);
        fc2 = Linear<T>(s.fc_dim, s.fc_dim);
        head_cls = Linear<T>(s.fc_dim, known + 1);
        head_clsbox = Linear<T>(s.fc_dim, 4 * known);
        head_agnbox = Linear<T>(s.fc_dim, 4);
        head_iou = Linear<T>(s.fc_dim, 1);
        std::mt19937_64 rng(seed);
        conv1.init(rng);
        conv2.init(rng);
        conv3.init(rng);
        conv4.init(rng);
        lat4.init(rng);
        lat8.init(rng);
        smooth4.init(rng);
        smooth8.init(rng);
        rpn_conv.init(rng);
        rpn_ctr.init(rng);
        rpn_box.init(rng);
        fc1.init(rng);
        fc2.init(rng);
        head_cls.init(rng);
        head_clsbox.init(rng);
        head_agnbox.init(rng);
        head_iou.init(rng);
    }

    std::vector<double> strides() const { return {4.0, 8.0}; }
    std::vector<std::pair<int, int>> level_dims() const {
        return {{shape.h4(), shape.h4()}, {shape.h8(), shape.h8()}};
    }
    int level_for_box(const BoundingBox& b) const {
        return std::sqrt(b.area()) < shape.level_split ? 0 : 1;
    }

    Tensor<T> to_input(const Raster& raster) const {
        if (raster.width != shape.image_size || raster.height != shape.image_size ||
            raster.channels != shape.in_channels)
            throw std::invalid_argument("to_input: raster does not match the configured size");
        Tensor<T> x({shape.in_channels, raster.height, raster.width});
        for (int c = 0; c < shape.in_channels; ++c)
            for (int y = 0; y < raster.height; ++y)
                for (int xx = 0; xx < raster.width; ++xx)
                    x.at(c, y, xx) = static_cast<T>(raster.at(xx, y, c)) / T(255) - T(0.5);
        return x;
    }

    void backbone_forward(Tensor<T> x, BackboneActs<T>& acts) const {
        acts.x = std::move(x);
        acts.a1 = conv1.forward(acts.x, acts.col1);
        relu_inplace(acts.a1);
        acts.a2 = conv2.forward(acts.a1, acts.col2);
        relu_inplace(acts.a2);
        acts.a3 = conv3.forward(acts.a2, acts.col3);
        relu_inplace(acts.a3);
        acts.a4 = conv4.forward(acts.a3, acts.col4);
        relu_inplace(acts.a4);
        acts.l4 = lat4.forward(acts.a3, acts.col_lat4);
        acts.l8 = lat8.forward(acts.a4, acts.col_lat8);
        acts.up8 = upsample2x(acts.l8);
        acts.sum4 = acts.l4;
        for (size_t i = 0; i < acts.sum4.data.size(); ++i) acts.sum4.data[i] += acts.up8.data[i];
        acts.p4 = smooth4.forward(acts.sum4, acts.col_s4);
        acts.p8 = smooth8.forward(acts.l8, acts.col_s8);
    }

    void backbone_backward(const BackboneActs<T>& acts, const Tensor<T>& dp4, const Tensor<T>& dp8) {
        Tensor<T> dsum4 = smooth4.backward(acts.col_s4, dp4, acts.sum4.shape[1], acts.sum4.shape[2]);
        Tensor<T> dl8 = smooth8.backward(acts.col_s8, dp8, acts.l8.shape[1], acts.l8.shape[2]);
        Tensor<T> dup8 = upsample2x_backward(dsum4); // dsum4 flows to both l4 and up8
        for (size_t i = 0; i < dl8.data.size(); ++i) dl8.data[i] += dup8.data[i];
        Tensor<T> da3 = lat4.backward(acts.col_lat4, dsum4, acts.a3.shape[1], acts.a3.shape[2]);
        Tensor<T> da4 = lat8.backward(acts.col_lat8, dl8, acts.a4.shape[1], acts.a4.shape[2]);
        relu_backward_inplace(acts.a4, da4);
        Tensor<T> da3_b = conv4.backward(acts.col4, da4, acts.a3.shape[1], acts.a3.shape[2]);
        for (size_t i = 0; i < da3.data.size(); ++i) da3.data[i] += da3_b.data[i];
        relu_backward_inplace(acts.a3, da3);
        Tensor<T> da2 = conv3.backward(acts.col3, da3, acts.a2.shape[1], acts.a2.shape[2]);
        relu_backward_inplace(acts.a2, da2);
        Tensor<T> da1 = conv2.backward(acts.col2, da2, acts.a1.shape[1], acts.a1.shape[2]);
        relu_backward_inplace(acts.a1, da1);
        conv1.backward(acts.col1, da1, acts.x.shape[1], acts.x.shape[2]); // dx discarded
    }

    void rpn_forward(const BackboneActs<T>& bb, RpnActs<T>& acts) const {
        const Tensor<T>* feats[2] = {&bb.p4, &bb.p8};
        for (int lvl = 0; lvl < 2; ++lvl) {
            acts.h[lvl] = rpn_conv.forward(*feats[lvl], acts.col_conv[lvl]);
            relu_inplace(acts.h[lvl]);
            acts.ctr[lvl] = rpn_ctr.forward(acts.h[lvl], acts.col_ctr[lvl]);
            acts.box_raw[lvl] = rpn_box.forward(acts.h[lvl], acts.col_box[lvl]);
        }
    }

    /// dctr/dbox are gradients at the logit / raw-offset maps.
    void rpn_backward(const RpnActs<T>& acts, const Tensor<T> dctr[2], const Tensor<T> dbox[2],
                      Tensor<T>& dp4, Tensor<T>& dp8) {
        Tensor<T>* dps[2] = {&dp4, &dp8};
        for (int lvl = 0; lvl < 2; ++lvl) {
            const int H = acts.h[lvl].shape[1], W = acts.h[lvl].shape[2];
            Tensor<T> dh = rpn_ctr.backward(acts.col_ctr[lvl], dctr[lvl], H, W);
            Tensor<T> dh2 = rpn_box.backward(acts.col_box[lvl], dbox[lvl], H, W);
            for (size_t i = 0; i < dh.data.size(); ++i) dh.data[i] += dh2.data[i];
            relu_backward_inplace(acts.h[lvl], dh);
            Tensor<T> dp = rpn_conv.backward(acts.col_conv[lvl], dh, H, W);
            for (size_t i = 0; i < dp.data.size(); ++i) dps[lvl]->data[i] += dp.data[i];
        }
    }

    RoIOutputs<T> roi_forward(const BackboneActs<T>& bb, const std::vector<BoundingBox>& proposals,
                              RoiActs<T>& acts) const {
        const int n = static_cast<int>(proposals.size());
        const int pooled_dim = shape.fpn * shape.roi_pool * shape.roi_pool;
        acts.levels.resize(static_cast<size_t>(n));
        acts.caches.resize(static_cast<size_t>(n));
        acts.pooled = Tensor<T>({n, pooled_dim});
        const Tensor<T>* feats[2] = {&bb.p4, &bb.p8};
        const auto strd = strides();
        for (int i = 0; i < n; ++i) {
            const int lvl = level_for_box(proposals[static_cast<size_t>(i)]);
            acts.levels[static_cast<size_t>(i)] = lvl;
            Tensor<T> pooled = roi_align(*feats[lvl], proposals[static_cast<size_t>(i)], strd[lvl],
                                         shape.roi_pool, acts.caches[static_cast<size_t>(i)]);
            std::copy(pooled.data.begin(), pooled.data.end(),
                      acts.pooled.data.begin() + static_cast<long long>(i) * pooled_dim);
        }
        acts.f1 = fc1.forward(acts.pooled);
        relu_inplace(acts.f1);
        acts.f2 = fc2.forward(acts.f1);
        relu_inplace(acts.f2);
        RoIOutputs<T> out;
        out.known = num_known;
        out.cls = head_cls.forward(acts.f2);
        out.clsbox = head_clsbox.forward(acts.f2);
        out.agnbox = head_agnbox.forward(acts.f2);
        out.iou = head_iou.forward(acts.f2);
        return out;
    }

    void roi_backward(const RoiActs<T>& acts, const Tensor<T>& dcls, const Tensor<T>& dclsbox,
                      const Tensor<T>& dagnbox, const Tensor<T>& diou, Tensor<T>& dp4,
                      Tensor<T>& dp8) {
        Tensor<T> df2 = head_cls.backward(acts.f2, dcls);
        Tensor<T> t = head_clsbox.backward(acts.f2, dclsbox);
        for (size_t i = 0; i < df2.data.size(); ++i) df2.data[i] += t.data[i];
        t = head_agnbox.backward(acts.f2, dagnbox);
        for (size_t i = 0; i < df2.data.size(); ++i) df2.data[i] += t.data[i];
        t = head_iou.backward(acts.f2, diou);
        for (size_t i = 0; i < df2.data.size(); ++i) df2.data[i] += t.data[i];
        relu_backward_inplace(acts.f2, df2);
        Tensor<T> df1 = fc2.backward(acts.f1, df2);
        relu_backward_inplace(acts.f1, df1);
        Tensor<T> dpooled = fc1.backward(acts.pooled, df1);

        const int pooled_dim = shape.fpn * shape.roi_pool * shape.roi_pool;
        Tensor<T>* dps[2] = {&dp4, &dp8};
        for (size_t i = 0; i < acts.levels.size(); ++i) {
            Tensor<T> drow({shape.fpn, shape.roi_pool, shape.roi_pool});
            std::copy(dpooled.data.begin() + static_cast<long long>(i) * pooled_dim,
                      dpooled.data.begin() + static_cast<long long>(i + 1) * pooled_dim,
                      drow.data.begin());
            roi_align_backward(acts.caches[i], drow, *dps[static_cast<size_t>(acts.levels[i])]);
        }
    }

    // --- parameter bookkeeping ----------------------------------------

    std::vector<std::pair<Tensor<T>*, Tensor<T>*>> param_refs() {
        std::vector<std::pair<Tensor<T>*, Tensor<T>*>> out;
        auto add_conv = [&](Conv2d<T>& c) {
            out.push_back({&c.w, &c.dw});
            out.push_back({&c.b, &c.db});
        };
        auto add_lin = [&](Linear<T>& l) {
            out.push_back({&l.w, &l.dw});
            out.push_back({&l.b, &l.db});
        };
        add_conv(conv1);
        add_conv(conv2);
        add_conv(conv3);
        add_conv(conv4);
        add_conv(lat4);
        add_conv(lat8);
        add_conv(smooth4);
        add_conv(smooth8);
        add_conv(rpn_conv);
        add_conv(rpn_ctr);
        add_conv(rpn_box);
        add_lin(fc1);
        add_lin(fc2);
        add_lin(head_cls);
        add_lin(head_clsbox);
        add_lin(head_agnbox);
        add_lin(head_iou);
        return out;
    }

    long long param_count() {
        long long n = 0;
        for (auto& [w, g] : param_refs()) n += w->count();
        return n;
    }

    T get_param(long long flat) {
        for (auto& [w, g] : param_refs()) {
            if (flat < w->count()) return w->data[static_cast<size_t>(flat)];
            flat -= w->count();
        }
        throw std::out_of_range("get_param");
    }

    void set_param(long long flat, T v) {
        for (auto& [w, g] : param_refs()) {
            if (flat < w->count()) {
                w->data[static_cast<size_t>(flat)] = v;
                return;
            }
            flat -= w->count();
        }
        throw std::out_of_range("set_param");
    }

    T get_grad(long long flat) {
        for (auto& [w, g] : param_refs()) {
            if (flat < g->count()) return g->data[static_cast<size_t>(flat)];
            flat -= g->count();
        }
        throw std::out_of_range("get_grad");
    }

    void zero_grads() {
        for (auto& [w, g] : param_refs()) g->zero();
    }
};

} // namespace owdet::nn

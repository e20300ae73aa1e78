#pragma once

#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "owdet/dataset.hpp"
#include "owdet/losses.hpp"
#include "owdet/net.hpp"

namespace owdet::nn {

struct TrainConfig {
    int epochs = 30;
    int batch_size = 8;
    double lr = 0.02;
    double momentum = 0.9;
    double lr_decay = 0.1;
    std::vector<double> decay_at = {0.75, 0.92}; // fractions of total epochs
    int proposals = 64;
    int anchor_samples = 96;
    int pre_nms_topk = 256;
    double rpn_nms_iou = 0.7;
    bool add_gt_proposals = true;
    double pos_iou = 0.5;
    double neg_iou = 0.3;
    std::uint64_t seed = 1;
    double theta_cls = 0.5;  // exclusion-mask confidence gate
    double theta_obj = 0.69; // exclusion-mask objectness gate
    bool prior_class_handling = true;

    CaptureConfig capture() const {
        CaptureConfig c;
        c.anchor_samples = anchor_samples;
        c.proposals = proposals;
        c.pre_nms_topk = pre_nms_topk;
        c.rpn_nms_iou = rpn_nms_iou;
        c.add_gt_proposals = add_gt_proposals;
        c.pos_iou = pos_iou;
        c.neg_iou = neg_iou;
        c.theta_cls = theta_cls;
        c.theta_obj = theta_obj;
        c.prior_class_handling = prior_class_handling;
        return c;
    }
};

struct TrainResult {
    std::vector<double> epoch_loss; // mean total loss per epoch
    double first_step_loss = 0;
    double last_step_loss = 0;
    long long steps = 0;
};

template <typename T>
class SgdOptimizer {
  public:
    SgdOptimizer(DetectorNet<T>& net, double lr, double momentum)
        : net_(net), lr_(lr), momentum_(momentum) {
        for (auto& [w, g] : net.param_refs()) velocity_.emplace_back(w->shape);
    }

    void set_lr(double lr) { lr_ = lr; }
    double lr() const { return lr_; }

    /// One momentum step using the accumulated gradients scaled by 1/scale.
    void step(double scale) {
        auto refs = net_.param_refs();
        for (size_t i = 0; i < refs.size(); ++i) {
            auto& [w, g] = refs[i];
            auto& v = velocity_[i];
            for (size_t j = 0; j < w->data.size(); ++j) {
                v.data[j] = static_cast<T>(momentum_) * v.data[j] -
                            static_cast<T>(lr_) * g->data[j] / static_cast<T>(scale);
                w->data[j] += v.data[j];
            }
        }
    }

  private:
    DetectorNet<T>& net_;
    double lr_, momentum_;
    std::vector<Tensor<T>> velocity_;
};

/// End-to-end training on a task view. `gt_dense_of` maps raw class ids to
/// the dense classifier index for this task. Deterministic per cfg.seed.
/// Throws on a non-finite loss with the offending step in the message.
template <typename T>
TrainResult train(DetectorNet<T>& net, const std::vector<ImageRecord>& dataset,
                  const std::vector<int>& prior_dense,
                  const std::function<int(int)>& gt_dense_of, const TrainConfig& cfg) {
    if (dataset.empty()) throw std::invalid_argument("train: empty dataset view");
    TrainResult result;
    SgdOptimizer<T> opt(net, cfg.lr, cfg.momentum);
    const CaptureConfig capture_cfg = cfg.capture();

    std::vector<std::vector<int>> dense_per_image;
    for (const auto& rec : dataset) {
        std::vector<int> d;
        for (const auto& a : rec.annotations) d.push_back(gt_dense_of(a.class_id));
        dense_per_image.push_back(std::move(d));
    }

    std::vector<int> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double lr = cfg.lr;
        for (double frac : cfg.decay_at)
            if (epoch >= static_cast<int>(frac * cfg.epochs)) lr *= cfg.lr_decay;
        opt.set_lr(lr);

        std::mt19937_64 epoch_rng(cfg.seed * 1315423911ull + static_cast<std::uint64_t>(epoch));
        std::shuffle(order.begin(), order.end(), epoch_rng);

        double epoch_total = 0;
        long long epoch_steps = 0;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
            const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
            net.zero_grads();
            double batch_total = 0;
            for (size_t bi = start; bi < end; ++bi) {
                const int idx = order[bi];
                ImagePass<T> pass;
                const TrainStructure s = capture_structure(
                    net, dataset[static_cast<size_t>(idx)], dense_per_image[static_cast<size_t>(idx)],
                    prior_dense, capture_cfg, epoch_rng, pass);
                const LossBreakdown lb = backprop_image(net, pass, s);
                const double total = lb.total();
                if (!std::isfinite(total)) {
                    std::ostringstream oss;
                    oss << "train: non-finite loss at epoch " << epoch << " image " << idx
                        << " (ctr=" << lb.ctr << " box=" << lb.box << " cls=" << lb.cls
                        << " clsbox=" << lb.clsbox << " agnbox=" << lb.agnbox << " iou=" << lb.iou
                        << ")";
                    throw std::runtime_error(oss.str());
                }
                batch_total += total;
                if (result.steps == 0) result.first_step_loss = total;
                result.last_step_loss = total;
                ++result.steps;
            }
            opt.step(static_cast<double>(end - start));
            epoch_total += batch_total;
            epoch_steps += static_cast<long long>(end - start);
        }
        result.epoch_loss.push_back(epoch_total / static_cast<double>(epoch_steps));
    }
    return result;
}

/// Central finite differences of the total loss at one parameter coordinate
/// under a frozen structure.
template <typename T>
double finite_difference_grad(DetectorNet<T>& net, const ImageRecord& record,
                              const TrainStructure& s, long long flat, double eps) {
    const T original = net.get_param(flat);
    net.set_param(flat, original + static_cast<T>(eps));
    const double up = loss_for_image(net, record, s).total();
    net.set_param(flat, original - static_cast<T>(eps));
    const double down = loss_for_image(net, record, s).total();
    net.set_param(flat, original);
    return (up - down) / (2.0 * eps);
}

} // namespace owdet::nn

#pragma once

#include <functional>
#include <iostream>

#include "owdet/checkpoint.hpp"
#include "owdet/dataset.hpp"
#include "owdet/detect.hpp"
#include "owdet/exemplars.hpp"
#include "owdet/gmm.hpp"
#include "owdet/net.hpp"
#include "owdet/train.hpp"

namespace owdet {

struct TaskRunConfig {
    nn::NetShape shape;
    nn::TrainConfig train;
    GmmFitConfig gmm;
    bool fine_tune_only = true;   // off: resume from M^{t-1} on D^t, then fine-tune on exemplars
    double finetune_lr_scale = 0.1;
    double finetune_epoch_scale = 0.5;
    std::uint64_t base_model_seed = 1; // fixed random init for M^0
};

template <typename T>
struct TaskState {
    int task = 1;
    nn::DetectorNet<T> model;
    GmmStore gmms;
    ClassRegistry registry;
    std::vector<std::string> train_image_ids; // what training actually read
    nn::TrainResult train_result;
};

/// Yields the labeled data D^t for a task (already filtered to C^t labels).
using TaskDataProvider = std::function<std::vector<ImageRecord>(int)>;

/// Rebuilds the per-class mixtures from the designated source (D^1 after the
/// first task, the exemplar union afterwards) by running the classification
/// head with ground-truth boxes as proposals.
template <typename T>
void refresh_gmms(TaskState<T>& state, const std::vector<ImageRecord>& training_source,
                  const GmmFitConfig& cfg) {
    auto per_class = collect_gt_logits(state.model, training_source);
    // restrict to the classes known at this task
    std::map<int, std::vector<std::vector<double>>> known_only;
    for (int c : state.registry.known()) {
        auto it = per_class.find(c);
        if (it != per_class.end())
            known_only[c] = std::move(it->second);
        else
            known_only[c] = {};
    }
    state.gmms = fit_gmms(known_only, cfg);
    for (int c : state.gmms.bypassed)
        std::cerr << "[gmm] class " << c << " below the minimum sample count; "
                  << "overconfidence handling bypassed\n";
}

/// Grows the classifier heads of a trained model to a larger known set,
/// copying shared weights and prior-class rows; new class rows keep their
/// fresh initialization. Used only by the legacy (non fine-tune-only) regime.
template <typename T>
nn::DetectorNet<T> expand_model(nn::DetectorNet<T>& prev, int new_known, std::uint64_t seed) {
    nn::DetectorNet<T> grown(prev.shape, new_known, seed);
    const int old_known = prev.num_known;
    auto copy_tensor = [](const nn::Tensor<T>& src, nn::Tensor<T>& dst) { dst.data = src.data; };
    // everything except the class-sized heads transfers verbatim
    auto prev_refs = prev.param_refs();
    auto grown_refs = grown.param_refs();
    for (size_t i = 0; i < prev_refs.size(); ++i)
        if (prev_refs[i].first->shape == grown_refs[i].first->shape)
            copy_tensor(*prev_refs[i].first, *grown_refs[i].first);
    // cls head: old class rows + background row (kept last)
    const int fc = prev.shape.fc_dim;
    for (int r = 0; r < old_known; ++r)
        for (int c = 0; c < fc; ++c)
            grown.head_cls.w[static_cast<size_t>(r * fc + c)] =
                prev.head_cls.w[static_cast<size_t>(r * fc + c)];
    for (int c = 0; c < fc; ++c)
        grown.head_cls.w[static_cast<size_t>(new_known * fc + c)] =
            prev.head_cls.w[static_cast<size_t>(old_known * fc + c)];
    for (int r = 0; r < old_known; ++r) grown.head_cls.b[static_cast<size_t>(r)] = prev.head_cls.b[static_cast<size_t>(r)];
    grown.head_cls.b[static_cast<size_t>(new_known)] = prev.head_cls.b[static_cast<size_t>(old_known)];
    // clsbox head: 4 rows per old class
    for (int r = 0; r < 4 * old_known; ++r) {
        for (int c = 0; c < fc; ++c)
            grown.head_clsbox.w[static_cast<size_t>(r * fc + c)] =
                prev.head_clsbox.w[static_cast<size_t>(r * fc + c)];
        grown.head_clsbox.b[static_cast<size_t>(r)] = prev.head_clsbox.b[static_cast<size_t>(r)];
    }
    return grown;
}

/// Runs one task of the protocol. Task 1 trains from the fixed random base
/// model on the full D^1; later tasks train from the base model again on the
/// exemplar union R^1..R^t (fine-tune-only regime), with the prior-class
/// exclusion mask active. R^t is always built from D^t and appended.
template <typename T>
TaskState<T> run_task(int t, const TaskSchedule& schedule, const TaskDataProvider& provider,
                      ExemplarStore& store, const TaskRunConfig& cfg,
                      TaskState<T>* prev = nullptr) {
    for (int u = 1; u < t; ++u)
        if (!store.has_task(u))
            throw std::runtime_error("run_task: missing exemplar set for task " + std::to_string(u));

    TaskState<T> state;
    state.task = t;
    state.registry = ClassRegistry(schedule, t);
    const auto known = state.registry.known();
    const int num_known = static_cast<int>(known.size());

    const std::vector<ImageRecord> task_data = provider(t);
    store.add_task(t, task_data, state.registry.task_classes(t));

    std::vector<int> prior_dense;
    for (int c : state.registry.prior_known()) prior_dense.push_back(state.registry.dense_index(c));
    auto dense_of = [&](int class_id) { return state.registry.dense_index(class_id); };

    nn::TrainConfig tc = cfg.train;
    tc.seed = cfg.train.seed * 0x9e3779b9ull + static_cast<std::uint64_t>(t);

    if (t == 1) {
        state.model.build(cfg.shape, num_known, cfg.base_model_seed);
        for (const auto& r : task_data) state.train_image_ids.push_back(r.image_id);
        state.train_result = nn::train(state.model, task_data, prior_dense, dense_of, tc);
    } else if (cfg.fine_tune_only) {
        // restart from the fixed base model; only exemplars are read
        const std::vector<ImageRecord> replay = store.merged_union(t);
        state.model.build(cfg.shape, num_known, cfg.base_model_seed);
        for (const auto& r : replay) state.train_image_ids.push_back(r.image_id);
        state.train_result = nn::train(state.model, replay, prior_dense, dense_of, tc);
    } else {
        // legacy regime: continue from M^{t-1} on D^t, then fine-tune on exemplars
        if (!prev) throw std::invalid_argument("run_task: legacy regime needs the previous state");
        state.model = expand_model(prev->model, num_known, cfg.base_model_seed + t);
        for (const auto& r : task_data) state.train_image_ids.push_back(r.image_id);
        state.train_result = nn::train(state.model, task_data, prior_dense, dense_of, tc);
        nn::TrainConfig ft = tc;
        ft.lr *= cfg.finetune_lr_scale;
        ft.epochs = std::max(1, static_cast<int>(tc.epochs * cfg.finetune_epoch_scale));
        ft.seed = tc.seed ^ 0x5bd1e995ull;
        const std::vector<ImageRecord> replay = store.merged_union(t);
        for (const auto& r : replay) state.train_image_ids.push_back(r.image_id);
        nn::train(state.model, replay, prior_dense, dense_of, ft);
    }

    const std::vector<ImageRecord> gmm_source =
        (t == 1) ? task_data : store.merged_union(t);
    refresh_gmms(state, gmm_source, cfg.gmm);
    return state;
}

} // namespace owdet

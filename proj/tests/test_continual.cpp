#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "owdet/exemplars.hpp"
#include "owdet/synthetic.hpp"
#include "owdet/task_loop.hpp"

using namespace owdet;

namespace {

ImageRecord img(std::string id, std::vector<int> classes) {
    ImageRecord rec;
    rec.image_id = std::move(id);
    rec.width = rec.height = 100;
    double x = 0;
    for (int c : classes) {
        rec.annotations.push_back({c, BoundingBox(x, 0, x + 8, 8)});
        x += 10;
    }
    return rec;
}

} // namespace

TEST_CASE("exemplar sampling keeps the first image per class at n=1") {
    const std::vector<ImageRecord> ds = {img("a", {1}), img("b", {2}), img("c", {1}),
                                         img("d", {3}), img("e", {2})};
    const auto r = build_exemplar_set(ds, {1, 2, 3}, 1);
    CHECK(r.image_ids == std::vector<std::string>{"a", "b", "d"});
    CHECK(r.undersampled.empty());
    CHECK(r.instance_counts.at(1) == 1);
}

TEST_CASE("exemplar sampling reproduces the hand-traced 6-image fixture") {
    // classes {1,2,3}, n=2
    // A{1}: q1=[A]; B{1,2}: q1=[A,B] q2=[B]; C{2}: q2=[B,C]; D{3}: q3=[D];
    // E{1,3}: q1 full -> drop, q3=[D,E] -> all full, stop before F
    const std::vector<ImageRecord> ds = {img("A", {1}), img("B", {1, 2}), img("C", {2}),
                                         img("D", {3}), img("E", {1, 3}), img("F", {3})};
    const auto r = build_exemplar_set(ds, {1, 2, 3}, 2);
    CHECK(r.image_ids == std::vector<std::string>{"A", "B", "C", "D", "E"});
    CHECK(r.instance_counts.at(1) == 2);
    CHECK(r.instance_counts.at(2) == 2);
    CHECK(r.instance_counts.at(3) == 2);
    CHECK(r.undersampled.empty());
}

TEST_CASE("one image containing every class is the whole set at n=1") {
    const std::vector<ImageRecord> ds = {img("all", {1, 2, 3}), img("x", {1})};
    const auto r = build_exemplar_set(ds, {1, 2, 3}, 1);
    CHECK(r.image_ids == std::vector<std::string>{"all"});
}

TEST_CASE("exemplar sampling is a pure function of its inputs") {
    const std::vector<ImageRecord> ds = {img("a", {1, 1}), img("b", {2}), img("c", {1, 2}),
                                         img("d", {2, 1})};
    const auto r1 = build_exemplar_set(ds, {1, 2}, 3);
    const auto r2 = build_exemplar_set(ds, {1, 2}, 3);
    CHECK(r1.image_ids == r2.image_ids);
    CHECK(r1.instance_counts == r2.instance_counts);
    // multi-instance images fill a queue with repeated entries
    CHECK(r1.instance_counts.at(1) == 3); // a contributes 2, c contributes 1
}

TEST_CASE("exhausted data yields partial queues with a report") {
    const std::vector<ImageRecord> ds = {img("a", {1}), img("b", {1})};
    const auto r = build_exemplar_set(ds, {1, 2}, 5);
    CHECK(r.instance_counts.at(1) == 2);
    CHECK(r.instance_counts.at(2) == 0);
    CHECK(r.undersampled == std::vector<int>{2});
    CHECK(r.image_ids == std::vector<std::string>{"a", "b"});
}

TEST_CASE("exemplar store enforces its size fraction") {
    std::vector<ImageRecord> ds;
    for (int i = 0; i < 10; ++i) ds.push_back(img("i" + std::to_string(i), {1}));
    ExemplarStore store;
    store.per_class_n = 8; // would need 8 of 10 images
    store.max_fraction = 0.3;
    CHECK_THROWS_AS(store.add_task(1, ds, {1}), std::runtime_error);

    ExemplarStore ok;
    ok.per_class_n = 2;
    ok.max_fraction = 0.3;
    const auto& e = ok.add_task(1, ds, {1});
    CHECK(e.records.size() == 2);
    CHECK_THROWS_AS(ok.add_task(1, ds, {1}), std::logic_error); // duplicate task
}

TEST_CASE("merged union unions label views of a shared image") {
    ImageRecord shared_t1 = img("shared", {1});
    ImageRecord shared_t2 = img("shared", {4});
    ExemplarStore store;
    store.per_class_n = 1;
    store.max_fraction = 1.0;
    store.add_task(1, {shared_t1, img("only1", {2})}, {1, 2});
    store.add_task(2, {shared_t2, img("only2", {4})}, {4});
    const auto merged = store.merged_union(2);
    bool found = false;
    for (const auto& rec : merged)
        if (rec.image_id == "shared") {
            found = true;
            std::set<int> classes;
            for (const auto& a : rec.annotations) classes.insert(a.class_id);
            CHECK(classes == std::set<int>{1, 4});
        }
    CHECK(found);
}

namespace {

struct LoopFixture {
    TaskSchedule schedule{{{1, 2}, {3}}};
    std::vector<ImageRecord> train_data;
    TaskRunConfig cfg;

    LoopFixture() {
        SceneConfig sc;
        sc.image_size = 64;
        auto all = default_shape_classes();
        sc.shape_classes.assign(all.begin(), all.begin() + 3);
        sc.objects_min = 1;
        sc.objects_max = 2;
        sc.scale_min = 0.25;
        sc.scale_max = 0.45;
        sc.clutter_level = 2;
        sc.seed = 99;
        train_data = generate_dataset(sc, 24);

        cfg.shape.image_size = 64;
        cfg.shape.c1 = 6;
        cfg.shape.c2 = 12;
        cfg.shape.c3 = 12;
        cfg.shape.c4 = 16;
        cfg.shape.fpn = 12;
        cfg.shape.fc_dim = 48;
        cfg.shape.level_split = 20.0;
        cfg.train.epochs = 8;
        cfg.train.batch_size = 4;
        cfg.train.lr = 0.02;
        cfg.train.proposals = 32;
        cfg.train.anchor_samples = 64;
        cfg.train.seed = 10;
        cfg.gmm.min_samples = 4;
        cfg.base_model_seed = 555;
    }

    TaskDataProvider provider() const {
        return [this](int t) {
            return make_task_view(train_data, ClassRegistry(schedule, t), t);
        };
    }
};

} // namespace

TEST_CASE("task loop: first task trains on the full view and later tasks on exemplars only") {
    LoopFixture f;
    ExemplarStore store;
    store.per_class_n = 6;
    store.max_fraction = 0.9;

    auto s1 = run_task<double>(1, f.schedule, f.provider(), store, f.cfg);
    const auto d1 = f.provider()(1);
    CHECK(s1.train_image_ids.size() == d1.size());
    CHECK(s1.registry.known() == std::vector<int>{1, 2});
    CHECK(store.has_task(1));
    // gmm store covers exactly the known classes (fitted or bypassed)
    for (int c : s1.registry.known()) {
        const bool covered = s1.gmms.has(c) ||
                             std::find(s1.gmms.bypassed.begin(), s1.gmms.bypassed.end(), c) !=
                                 s1.gmms.bypassed.end();
        CHECK(covered);
    }

    auto s2 = run_task<double>(2, f.schedule, f.provider(), store, f.cfg, &s1);
    // regime isolation: training read only exemplar-union images
    std::set<std::string> allowed;
    for (const auto& rec : store.merged_union(2)) allowed.insert(rec.image_id);
    for (const auto& id : s2.train_image_ids) CHECK(allowed.count(id) == 1);
    const auto d2 = f.provider()(2);
    CHECK(s2.train_image_ids.size() < d1.size() + d2.size());
    CHECK(s2.model.num_known == 3);

    // theta_like is a lower bound over the refresh source
    const auto source = store.merged_union(2);
    const auto logits = collect_gt_logits(s2.model, source);
    for (const auto& [cls, samples] : logits) {
        if (!s2.gmms.has(cls)) continue;
        for (const auto& s : samples)
            CHECK(s2.gmms.at(cls).mixture.log_pdf(s) >= s2.gmms.at(cls).theta_like - 1e-9);
    }
}

TEST_CASE("task loop: reruns with the same seeds are identical") {
    LoopFixture f;
    ExemplarStore store_a, store_b;
    store_a.per_class_n = store_b.per_class_n = 6;
    store_a.max_fraction = store_b.max_fraction = 0.9;
    auto a1 = run_task<double>(1, f.schedule, f.provider(), store_a, f.cfg);
    auto a2 = run_task<double>(2, f.schedule, f.provider(), store_a, f.cfg, &a1);
    auto b1 = run_task<double>(1, f.schedule, f.provider(), store_b, f.cfg);
    auto b2 = run_task<double>(2, f.schedule, f.provider(), store_b, f.cfg, &b1);
    for (long long i : {0LL, 777LL, 4242LL}) {
        CHECK(a2.model.get_param(i % a2.model.param_count()) ==
              b2.model.get_param(i % b2.model.param_count()));
    }
    CHECK(a2.train_image_ids == b2.train_image_ids);
}

TEST_CASE("task loop: missing prior exemplars is an error") {
    LoopFixture f;
    ExemplarStore empty;
    CHECK_THROWS_AS(run_task<double>(2, f.schedule, f.provider(), empty, f.cfg),
                    std::runtime_error);
}

TEST_CASE("gmm refresh bypasses under-sampled classes") {
    LoopFixture f;
    f.cfg.gmm.min_samples = 100000; // force bypass
    ExemplarStore store;
    store.per_class_n = 6;
    store.max_fraction = 0.9;
    auto s1 = run_task<double>(1, f.schedule, f.provider(), store, f.cfg);
    CHECK(s1.gmms.per_class.empty());
    CHECK(s1.gmms.bypassed.size() == 2);
}

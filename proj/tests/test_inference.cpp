#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "owdet/detect.hpp"
#include "owdet/gmm.hpp"
#include "owdet/nms.hpp"
#include "owdet/scoring.hpp"
#include "owdet/synthetic.hpp"
#include "owdet/train.hpp"

using namespace owdet;

namespace {

RegionOutput make_region(std::vector<double> cls_logits, int known) {
    RegionOutput r;
    r.cls_logits = std::move(cls_logits);
    r.clsbox.assign(static_cast<size_t>(4 * known), 0.0);
    r.agnbox = {0.1, -0.1, 0.0, 0.0};
    r.proposal = BoundingBox(10, 10, 30, 30);
    return r;
}

/// logits that softmax to (approximately) the given probabilities
std::vector<double> logits_for(const std::vector<double>& probs) {
    std::vector<double> l;
    for (double p : probs) l.push_back(std::log(std::max(p, 1e-12)));
    return l;
}

std::vector<Detection> reference_nms(const std::vector<Detection>& dets, double thr) {
    // independent O(n^2) formulation: a detection survives iff no
    // surviving same-label detection with higher (score, order) rank
    // overlaps it beyond the threshold
    std::vector<size_t> rank(dets.size());
    std::iota(rank.begin(), rank.end(), size_t{0});
    std::sort(rank.begin(), rank.end(), [&](size_t a, size_t b) {
        if (dets[a].score != dets[b].score) return dets[a].score > dets[b].score;
        return a < b;
    });
    std::vector<bool> alive(dets.size(), false);
    for (size_t i = 0; i < rank.size(); ++i) {
        bool ok = true;
        for (size_t j = 0; j < i; ++j) {
            if (!alive[rank[j]]) continue;
            if (dets[rank[j]].label != dets[rank[i]].label) continue;
            if (iou(dets[rank[j]].box, dets[rank[i]].box) > thr) ok = false;
        }
        alive[rank[i]] = ok;
    }
    std::vector<Detection> out;
    for (size_t i : rank)
        if (alive[i]) out.push_back(dets[i]);
    return out;
}

} // namespace

TEST_CASE("objectness formula") {
    CHECK(objectness(0.0, 0.0) == doctest::Approx(0.5).epsilon(1e-12));
    // frozen from direct evaluation of sqrt(sigma(2) * sigma(-1))
    CHECK(objectness(2.0, -1.0) == doctest::Approx(0.4867060900481009).epsilon(1e-12));
    CHECK(objectness(40.0, 40.0) > 0.999);
    CHECK(objectness(40.0, 40.0) < 1.0);
    CHECK_THROWS(objectness(std::nan(""), 0.0));
}

TEST_CASE("objectness is strictly increasing in each logit") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    for (int i = 0; i < 100; ++i) {
        const double a = u(rng), b = u(rng);
        const double v = objectness(a, b);
        CHECK(v > 0.0);
        CHECK(v < 1.0);
        CHECK(objectness(a + 0.1, b) > v);
        CHECK(objectness(a, b + 0.1) > v);
    }
}

TEST_CASE("class score calculation follows the unknown branch rules") {
    Thresholds th;

    SUBCASE("a confident known score keeps unknown at zero regardless of objectness") {
        const RegionOutput r = make_region(logits_for({0.9, 0.03, 0.03, 0.04}), 3);
        const ClassScores cs = calculate_class_scores_and_boxes(r, 0.95, th, 3, 100, 100);
        CHECK(cs.unknown == 0.0);
        CHECK(cs.known[0] == doctest::Approx(0.9));
        CHECK(cs.background == doctest::Approx(0.04));
    }

    SUBCASE("all-low known scores with high objectness fire the branch") {
        const RegionOutput r = make_region(logits_for({0.02, 0.02, 0.02, 0.94}), 3);
        const ClassScores cs = calculate_class_scores_and_boxes(r, 0.8, th, 3, 100, 100);
        CHECK(cs.unknown == doctest::Approx(0.8));
        CHECK(cs.background == 0.0); // zeroed by the branch
        // known scores are untouched by the branch
        CHECK(cs.known[0] == doctest::Approx(0.02));
        // at most one of unknown/background is nonzero
        CHECK((cs.unknown == 0.0 || cs.background == 0.0));
    }

    SUBCASE("objectness at or below the gate leaves the region as background") {
        const RegionOutput r = make_region(logits_for({0.02, 0.02, 0.02, 0.94}), 3);
        const ClassScores cs = calculate_class_scores_and_boxes(r, 0.5, th, 3, 100, 100);
        CHECK(cs.unknown == 0.0);
        CHECK(cs.background == doctest::Approx(0.94));
        CHECK(cs.argmax() == 4); // background wins
    }

    SUBCASE("unknown box comes from the agnostic head") {
        RegionOutput r = make_region(logits_for({0.02, 0.02, 0.02, 0.94}), 3);
        const ClassScores cs = calculate_class_scores_and_boxes(r, 0.9, th, 3, 100, 100);
        const BoundingBox expected = decode_box_delta(r.proposal, r.agnbox);
        CHECK(cs.unknown_box == expected);
        CHECK(cs.argmax() == 3); // the unknown slot
    }

    SUBCASE("disabled branch never fires") {
        const RegionOutput r = make_region(logits_for({0.02, 0.02, 0.02, 0.94}), 3);
        const ClassScores cs = calculate_class_scores_and_boxes(r, 0.99, th, 3, 100, 100, false);
        CHECK(cs.unknown == 0.0);
    }
}

TEST_CASE("gmm fitting") {
    GmmFitConfig cfg;
    cfg.min_samples = 3;
    cfg.seed = 11;

    SUBCASE("identical samples hit the covariance floor and define theta_like") {
        std::map<int, std::vector<std::vector<double>>> data;
        data[1] = {{1.0, 2.0}, {1.0, 2.0}, {1.0, 2.0}, {1.0, 2.0}};
        const GmmStore store = fit_gmms(data, cfg);
        REQUIRE(store.has(1));
        const auto& e = store.at(1);
        CHECK(e.sample_count == 4);
        CHECK(e.theta_like == doctest::Approx(e.mixture.log_pdf({1.0, 2.0})));
        CHECK(std::isfinite(e.theta_like));
    }

    SUBCASE("every training sample scores at or above theta_like") {
        std::mt19937_64 rng(4);
        std::normal_distribution<double> n(0.0, 1.0);
        std::map<int, std::vector<std::vector<double>>> data;
        for (int i = 0; i < 60; ++i) data[7].push_back({n(rng), n(rng) + 3, n(rng) * 2});
        const GmmStore store = fit_gmms(data, cfg);
        const auto& e = store.at(7);
        for (const auto& s : data[7]) CHECK(e.mixture.log_pdf(s) >= e.theta_like - 1e-12);
    }

    SUBCASE("two separated clusters get clean responsibilities with 2 components") {
        std::mt19937_64 rng(9);
        std::normal_distribution<double> n(0.0, 0.3);
        std::vector<std::vector<double>> samples;
        for (int i = 0; i < 40; ++i) samples.push_back({n(rng) - 5, n(rng) - 5});
        for (int i = 0; i < 40; ++i) samples.push_back({n(rng) + 5, n(rng) + 5});
        const GaussianMixture g = GaussianMixture::fit(samples, 2, 13);
        for (size_t i = 0; i < samples.size(); ++i) {
            const auto r = g.responsibilities(samples[i]);
            CHECK(*std::max_element(r.begin(), r.end()) > 0.9);
        }
        // the two in-cluster points land in different components
        const auto r0 = g.responsibilities(samples[0]);
        const auto r1 = g.responsibilities(samples[70]);
        const int c0 = static_cast<int>(std::max_element(r0.begin(), r0.end()) - r0.begin());
        const int c1 = static_cast<int>(std::max_element(r1.begin(), r1.end()) - r1.begin());
        CHECK(c0 != c1);
    }

    SUBCASE("under-sampled classes are bypassed") {
        std::map<int, std::vector<std::vector<double>>> data;
        data[1] = {{0.0}, {0.1}};
        data[2] = {{0.0}, {0.1}, {0.2}, {0.3}};
        const GmmStore store = fit_gmms(data, cfg);
        CHECK(!store.has(1));
        CHECK(store.has(2));
        CHECK(store.bypassed == std::vector<int>{1});
    }

    SUBCASE("fitting is deterministic per seed") {
        std::mt19937_64 rng(4);
        std::normal_distribution<double> n(0.0, 1.0);
        std::vector<std::vector<double>> samples;
        for (int i = 0; i < 30; ++i) samples.push_back({n(rng), n(rng)});
        const GaussianMixture a = GaussianMixture::fit(samples, 2, 21);
        const GaussianMixture b = GaussianMixture::fit(samples, 2, 21);
        CHECK(a.log_pdf(samples[5]) == b.log_pdf(samples[5]));
    }
}

TEST_CASE("gmm store round-trips through its file") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "owdet_gmm_test";
    fs::create_directories(dir);
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n(0.0, 1.0);
    std::map<int, std::vector<std::vector<double>>> data;
    for (int i = 0; i < 30; ++i) data[3].push_back({n(rng), n(rng), n(rng)});
    GmmFitConfig cfg;
    cfg.seed = 3;
    GmmStore store = fit_gmms(data, cfg);
    store.bypassed = {9};
    store.save(dir / "gmms.json");
    const GmmStore back = GmmStore::load(dir / "gmms.json");
    REQUIRE(back.has(3));
    CHECK(back.bypassed == std::vector<int>{9});
    CHECK(back.at(3).theta_like == doctest::Approx(store.at(3).theta_like).epsilon(1e-12));
    const std::vector<double> probe = {0.3, -0.2, 1.0};
    CHECK(back.at(3).mixture.log_pdf(probe) ==
          doctest::Approx(store.at(3).mixture.log_pdf(probe)).epsilon(1e-12));
}

TEST_CASE("overconfidence handling") {
    // one known class (id 5) with a tight cloud around (4, -1)
    std::map<int, std::vector<std::vector<double>>> data;
    std::mt19937_64 rng(8);
    std::normal_distribution<double> n(0.0, 0.2);
    for (int i = 0; i < 50; ++i) data[5].push_back({4.0 + n(rng), -1.0 + n(rng)});
    GmmFitConfig cfg;
    cfg.seed = 1;
    const GmmStore store = fit_gmms(data, cfg);
    const std::vector<int> known_ids = {5};
    Thresholds th;

    RegionOutput in_cloud;
    in_cloud.cls_logits = data[5][0];
    RegionOutput far_out;
    far_out.cls_logits = {-8.0, 9.0};

    SUBCASE("confident predictions pass through untouched") {
        const auto r = handle_overconfident(0, 0.9, far_out, 0.8, store, th, known_ids);
        CHECK(!r.relabeled);
    }
    SUBCASE("low-confidence atypical logits become unknown with the objectness score") {
        const auto r = handle_overconfident(0, 0.3, far_out, 0.77, store, th, known_ids);
        CHECK(r.relabeled);
        CHECK(r.score == doctest::Approx(0.77));
    }
    SUBCASE("low-confidence logits at a training sample stay put") {
        const auto r = handle_overconfident(0, 0.3, in_cloud, 0.8, store, th, known_ids);
        CHECK(!r.relabeled);
        CHECK(r.s_like >= store.at(5).theta_like);
    }
    SUBCASE("missing mixture passes through and is flagged") {
        const GmmStore empty;
        const auto r = handle_overconfident(0, 0.3, far_out, 0.8, empty, th, known_ids);
        CHECK(!r.relabeled);
        CHECK(r.mixture_missing);
    }
}

TEST_CASE("nms basics and oracle equivalence") {
    auto det = [](int label, double score, double x, double y) {
        Detection d;
        d.label = label;
        d.score = score;
        d.box = BoundingBox(x, y, x + 10, y + 10);
        return d;
    };

    SUBCASE("identical boxes with one label collapse to the top score") {
        const auto out = nms({det(1, 0.5, 0, 0), det(1, 0.9, 0, 0)}, 0.5);
        REQUIRE(out.size() == 1);
        CHECK(out[0].score == 0.9);
    }
    SUBCASE("disjoint boxes all survive") {
        const auto out = nms({det(1, 0.5, 0, 0), det(1, 0.9, 50, 50), det(2, 0.2, 0, 0)}, 0.5);
        CHECK(out.size() == 3);
    }
    SUBCASE("labels suppress independently; unknown is its own group") {
        const auto out = nms({det(1, 0.9, 0, 0), det(UNKNOWN_CLASS, 0.5, 0, 0)}, 0.5);
        CHECK(out.size() == 2);
    }
    SUBCASE("random instances match the reference implementation") {
        std::mt19937_64 rng(33);
        std::uniform_real_distribution<double> pos(0.0, 40.0), score(0.0, 1.0);
        std::uniform_int_distribution<int> label(0, 2);
        for (int it = 0; it < 50; ++it) {
            std::vector<Detection> dets;
            const int n = 5 + static_cast<int>(rng() % 16); // up to 20 boxes
            for (int i = 0; i < n; ++i) {
                Detection d;
                d.label = label(rng) == 2 ? UNKNOWN_CLASS : label(rng);
                d.score = score(rng);
                const double x = pos(rng), y = pos(rng);
                d.box = BoundingBox(x, y, x + 5 + pos(rng) / 4, y + 5 + pos(rng) / 4);
                dets.push_back(d);
            }
            const auto a = nms(dets, 0.4);
            const auto b = reference_nms(dets, 0.4);
            REQUIRE(a.size() == b.size());
            for (size_t i = 0; i < a.size(); ++i) {
                CHECK(a[i].score == b[i].score);
                CHECK(a[i].label == b[i].label);
                CHECK(a[i].box == b[i].box);
            }
        }
    }
    SUBCASE("non-finite scores are rejected") {
        CHECK_THROWS(nms({det(1, std::nan(""), 0, 0)}, 0.5));
    }
}

namespace {

struct TrainedFixture {
    nn::NetShape shape;
    nn::DetectorNet<double> net;
    GmmStore gmms;
    std::vector<ImageRecord> scenes;
    std::vector<int> known_ids;

    TrainedFixture() {
        shape.image_size = 64;
        shape.c1 = 6;
        shape.c2 = 12;
        shape.c3 = 12;
        shape.c4 = 16;
        shape.fpn = 12;
        shape.fc_dim = 48;
        shape.level_split = 20.0;

        SceneConfig sc;
        sc.image_size = 64;
        auto all = default_shape_classes();
        sc.shape_classes.assign(all.begin(), all.begin() + 3);
        sc.objects_min = 1;
        sc.objects_max = 2;
        sc.scale_min = 0.25;
        sc.scale_max = 0.45;
        sc.clutter_level = 2;
        sc.seed = 321;
        scenes = generate_dataset(sc, 6);

        net.build(shape, 3, 2);
        nn::TrainConfig tc;
        tc.epochs = 50;
        tc.batch_size = 3;
        tc.lr = 0.02;
        tc.proposals = 32;
        tc.anchor_samples = 64;
        tc.seed = 9;
        nn::train(net, scenes, {}, [](int c) { return c - 1; }, tc);
        gmms = fit_gmms(collect_gt_logits(net, scenes), GmmFitConfig{1, 4, 1e-6, 5});
        known_ids = {1, 2, 3};
    }
};

const TrainedFixture& fixture() {
    static TrainedFixture f;
    return f;
}

} // namespace

TEST_CASE("detect pipeline structure") {
    const auto& f = fixture();
    Thresholds th;
    DetectConfig dc;
    dc.k_proposals = 48;
    dc.score_floor = 0.05;

    SUBCASE("trained model finds objects in a training scene") {
        const auto dets = detect(f.net, f.scenes[0].raster, f.gmms, f.known_ids, th, dc);
        CHECK(!dets.empty());
        for (const auto& d : dets) {
            CHECK(d.score >= dc.score_floor);
            const bool known = std::find(f.known_ids.begin(), f.known_ids.end(), d.label) !=
                               f.known_ids.end();
            CHECK((known || d.label == UNKNOWN_CLASS)); // background is never emitted
            if (d.label == UNKNOWN_CLASS)
                CHECK(d.provenance == Detection::Provenance::objectness);
        }
    }

    SUBCASE("blank raster yields no confident classifier detections") {
        Raster blank;
        blank.width = blank.height = 64;
        blank.channels = 3;
        blank.pixels.assign(64 * 64 * 3, 40);
        const auto dets = detect(f.net, blank, f.gmms, f.known_ids, th, dc);
        for (const auto& d : dets)
            if (d.provenance == Detection::Provenance::classifier) CHECK(d.score < 0.5);
    }

    SUBCASE("overconfidence handling only touches low-confidence known labels") {
        DetectConfig on = dc, off = dc;
        off.gmm_correction = false;
        for (int i = 0; i < 3; ++i) {
            const auto with_corr = detect(f.net, f.scenes[static_cast<size_t>(i)].raster, f.gmms,
                                          f.known_ids, th, on);
            const auto without = detect(f.net, f.scenes[static_cast<size_t>(i)].raster, f.gmms,
                                        f.known_ids, th, off);
            // every confident known detection survives identically
            for (const auto& d : without) {
                if (d.label == UNKNOWN_CLASS || d.score < th.theta_cls) continue;
                bool found = false;
                for (const auto& e : with_corr)
                    if (e.label == d.label && e.score == d.score && e.box == d.box) found = true;
                CHECK(found);
            }
        }
    }
}

TEST_CASE("baseline threshold detector relabels by score") {
    const auto& f = fixture();
    Thresholds th;
    DetectConfig dc;
    dc.k_proposals = 48;
    dc.score_floor = 0.05;
    for (int i = 0; i < 3; ++i) {
        const auto dets =
            baseline_threshold_detect(f.net, f.scenes[static_cast<size_t>(i)].raster, f.known_ids, th, dc);
        for (const auto& d : dets) {
            if (d.label == UNKNOWN_CLASS)
                CHECK(d.score < th.baseline_unknown); // relabeled, score kept
            else
                CHECK(d.score >= th.baseline_unknown);
        }
    }
}

TEST_CASE("detection dump round-trips") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "owdet_dump_test";
    fs::create_directories(dir);
    std::vector<std::pair<std::string, Detection>> dets;
    Detection a;
    a.label = 2;
    a.score = 0.75;
    a.box = BoundingBox(1, 2, 11, 22);
    Detection b;
    b.label = UNKNOWN_CLASS;
    b.score = 0.8;
    b.box = BoundingBox(5, 5, 9, 9);
    b.provenance = Detection::Provenance::objectness;
    dets.emplace_back("img1", a);
    dets.emplace_back("img2", b);
    write_detection_dump(dir / "dets.jsonl", dets);
    const auto back = read_detection_dump(dir / "dets.jsonl");
    REQUIRE(back.size() == 2);
    CHECK(back[0].first == "img1");
    CHECK(back[0].second.label == 2);
    CHECK(back[1].second.label == UNKNOWN_CLASS);
    CHECK(back[1].second.provenance == Detection::Provenance::objectness);
    CHECK(back[1].second.box == b.box);

    // schema violations carry line numbers
    {
        std::ofstream os(dir / "bad.jsonl");
        os << R"({"image_id":"x","label":1,"score":0.5})" << '\n'; // missing box
    }
    try {
        read_detection_dump(dir / "bad.jsonl");
        CHECK(false);
    } catch (const std::exception& e) {
        CHECK(std::string(e.what()).find(":1:") != std::string::npos);
    }
}

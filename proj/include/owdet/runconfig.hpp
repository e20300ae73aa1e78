#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "owdet/detect.hpp"
#include "owdet/gmm.hpp"
#include "owdet/net.hpp"
#include "owdet/scoring.hpp"
#include "owdet/synthetic.hpp"
#include "owdet/train.hpp"

namespace owdet {

/// Component toggles matching the ablation rows: the full detector has all
/// four on; switching one off removes exactly that mechanism.
struct AblationToggles {
    bool fine_tune_only = true;
    bool class_agnostic_detection = true;
    bool gmm_correction = true;
    bool prior_class_handling = true;
};

struct EvalConfig {
    double iou = 0.5;
    double wi_recall = 0.8;
};

/// Everything a command needs, loadable from one JSON file. The master seed
/// derives every per-stage seed, so a config hash pins the whole run.
struct RunConfig {
    std::string data_dir = "data";
    std::string run_dir = "runs/default";
    std::vector<std::vector<int>> schedule = {{1, 2, 3}, {4, 5}};
    SceneConfig scene;
    int train_images = 200;
    int test_images = 100;
    std::string raster_storage = "png"; // "png" | "archive"
    nn::NetShape shape;
    nn::TrainConfig train;
    Thresholds thresholds;
    DetectConfig detect;
    EvalConfig eval;
    int exemplars_per_class = 20;
    double exemplar_max_fraction = 0.25;
    GmmFitConfig gmm;
    AblationToggles toggles;
    std::string detector = "owrcnn"; // "owrcnn" | "frcnn_threshold"
    std::uint64_t seed = 7;

    /// Re-derives stage seeds from the master seed and pushes toggles into
    /// the stage configs. Called after loading/overrides.
    void finalize();
};

RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const std::filesystem::path& path, const RunConfig& cfg);
RunConfig default_run_config();

/// FNV-1a over the canonical JSON serialization.
std::string config_hash(const RunConfig& cfg);

void write_manifest(const std::filesystem::path& dir, const std::string& command,
                    const RunConfig& cfg);

inline constexpr const char* kVersion = "0.1.0";

} // namespace owdet

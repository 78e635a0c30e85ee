#pragma once

// JSON run configuration with sections model / schedule / train / data / metrics.
// Every section is optional; unknown keys anywhere are rejected.

#include "mcm/conditioning.hpp"
#include "mcm/mcm_bridge.hpp"
#include "mcm/mwnet.hpp"
#include "mcm/schedule.hpp"
#include "mcm/training.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>

namespace mcm::config {

using Json = nlohmann::json;

struct ModelSection {
    mwnet::MwNetConfig net;
    int text_heads = 4;
    int max_tokens = 64;
    int audio_bands = 8;
    int control_dim = 16;
    std::uint64_t init_seed = 0;
};

struct ScheduleSection {
    int t_diff = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    diffusion::PredictionTarget target = diffusion::PredictionTarget::kX0;
};

struct TrainSection {
    double lr = 2e-4;
    int batch = 16;
    int epochs_stage1 = 400;
    int epochs_stage2 = 200;
    int max_steps = 0;
    std::uint64_t seed = 0;
};

struct DataSection {
    std::string dir;  // empty: generate in memory from the fields below
    int n = 256;
    int frames = 40;
    std::uint64_t seed = 0;
    bool with_control = false;
};

struct MetricsSection {
    double sigma = 3.0;
    int smooth_window = 5;
    int diversity_pairs = 0;  // 0: exhaustive
    int top_k = 3;
    int r_batch = 32;
    std::uint64_t seed = 0;
};

struct RunConfig {
    ModelSection model;
    ScheduleSection schedule;
    TrainSection train;
    DataSection data;
    MetricsSection metrics;

    /// Cross-field checks (model divisibility, schedule bounds, positive sizes).
    void validate() const;
    train::TrainConfig train_config(int stage) const;
};

/// Parses and validates; throws ConfigError on unknown keys, wrong types or bad values.
RunConfig parse_run_config(const Json& j);
RunConfig load_run_config(const std::filesystem::path& path);

/// Freshly initialized stage-1 model (main branch, encoders, control copy, zero bridges) from model.init_seed.
bridge::McmModel build_model(const RunConfig& cfg);
Json to_json(const RunConfig& cfg);

Json to_json(const mwnet::MwNetConfig& cfg);
mwnet::MwNetConfig mwnet_config_from_json(const Json& j);

}  // namespace mcm::config

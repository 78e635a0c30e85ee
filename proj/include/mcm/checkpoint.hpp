#pragma once

// "MCMW" model checkpoints: magic, u32 version, u32 manifest length, a JSON
// manifest (parameter name/shape/byte offset plus model metadata), then the
// float32 parameter payload. Little-endian throughout.

#include "mcm/mcm_bridge.hpp"
#include "mcm/training.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace mcm::ckpt {

inline constexpr std::array<char, 4> kMagic{'M', 'C', 'M', 'W'};
inline constexpr std::uint32_t kVersion = 1;

struct Checkpoint {
    bridge::McmModel model;
    train::Normalizer norm;
    nlohmann::json extra;        // free-form (run config, schedule) carried alongside
    std::uint64_t checksum = 0;  // over all parameters as stored (float32-rounded)
};

/// Rounds every parameter to float32 precision, the resolution a checkpoint keeps.
void round_to_float(bridge::McmModel& model);

std::string encode_checkpoint(const bridge::McmModel& model, const train::Normalizer& norm,
                              const nlohmann::json& extra = nlohmann::json::object());
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const bridge::McmModel& model, const train::Normalizer& norm,
                     const nlohmann::json& extra = nlohmann::json::object());
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mcm::ckpt

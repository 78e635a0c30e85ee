#pragma once

// Binary tensor containers ("MCMV" motion, "MCMF" external features), the JSON
// motion fixture form, beat-track JSON and atomic file writes.

#include "mcm/motion_repr.hpp"
#include "mcm/types.hpp"

#include <array>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace mcm::io {

inline constexpr std::array<char, 4> kMotionMagic{'M', 'C', 'M', 'V'};
inline constexpr std::array<char, 4> kFeatureMagic{'M', 'C', 'M', 'F'};
inline constexpr std::uint32_t kContainerVersion = 1;

/// rows x cols float32 payload plus a rate (fps, or 0 for token sequences).
struct TensorFile {
    std::array<char, 4> magic = kFeatureMagic;
    Mat data;
    float rate = 0.0F;
};

std::string encode_tensor(const TensorFile& file);
TensorFile decode_tensor(std::string_view bytes, const std::array<char, 4>& expected_magic);

/// Writes to a temporary sibling and renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

void write_motion(const std::filesystem::path& path, const motion::MotionSequence& seq);
motion::MotionSequence read_motion(const std::filesystem::path& path);

void write_features(const std::filesystem::path& path, const Mat& features, float rate);
TensorFile read_features(const std::filesystem::path& path);

std::string motion_to_json(const motion::MotionSequence& seq);
motion::MotionSequence motion_from_json(std::string_view text);

void write_beats(const std::filesystem::path& path, const std::vector<double>& times);
std::vector<double> read_beats(const std::filesystem::path& path);

}  // namespace mcm::io

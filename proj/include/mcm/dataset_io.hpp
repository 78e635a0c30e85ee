#pragma once

// On-disk toy datasets: one "MCMV" motion, caption sidecar and optional beat
// JSON per sample, plus manifest.json describing the generator settings.

#include "mcm/training.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace mcm::data {

struct DatasetInfo {
    int n = 0;
    int frames = 0;
    std::uint64_t seed = 0;
    bool with_control = false;
};

/// Refuses an existing non-empty directory unless `force` is set.
void write_dataset(const std::filesystem::path& dir, const std::vector<train::ToySample>& samples,
                   const DatasetInfo& info, bool force);

std::vector<train::ToySample> read_dataset(const std::filesystem::path& dir, DatasetInfo* info = nullptr);

}  // namespace mcm::data

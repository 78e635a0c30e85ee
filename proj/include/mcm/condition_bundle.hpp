#pragma once

#include "mcm/types.hpp"

#include <optional>

namespace mcm {

/// Encoded conditions for one sequence, consumed by both branches.
struct ConditionBundle {
    Mat text_seq;     // L x d cross-attention context (L >= 1)
    Vec text_global;  // d, feature at the EOS position of text_seq
    std::optional<Mat> audio_seq;  // T x d_c control features
    bool has_text = true;
    bool has_music = false;
    bool has_vocal = false;
};

}  // namespace mcm

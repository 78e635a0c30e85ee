#pragma once

// Toy condition encoders standing in for pretrained text/audio feature
// extractors. They expose the same shapes the denoiser consumes: a token
// sequence with an EOS global feature, and per-frame audio features fused from
// optional music and vocal inputs (absent inputs use a learned placeholder).

#include "mcm/autodiff.hpp"
#include "mcm/condition_bundle.hpp"
#include "mcm/mwnet.hpp"
#include "mcm/types.hpp"

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mcm::cond {

using Rng = mwnet::Rng;

/// Lowercase, strip punctuation, split on whitespace.
std::vector<std::string> tokenize(std::string_view text);

class Vocabulary {
public:
    static constexpr int kUnk = 0;
    static constexpr int kEos = 1;

    Vocabulary();
    /// Reserved tokens followed by `words` in first-seen order (duplicates ignored).
    explicit Vocabulary(std::span<const std::string> words);

    int id(const std::string& token) const;
    int size() const { return static_cast<int>(words_.size()); }
    const std::vector<std::string>& words() const { return words_; }

    /// Token ids for `tokens` followed by EOS.
    std::vector<int> encode(std::span<const std::string> tokens) const;

private:
    void add(const std::string& w);

    std::vector<std::string> words_;
    std::map<std::string, int> index_;
};

struct TextEncoderConfig {
    int width = 64;
    int heads = 4;
    int max_tokens = 64;
};

/// Embedding table plus one time-wise self-attention mixing layer and a final layer norm.
class ToyTextEncoder {
public:
    ToyTextEncoder() = default;
    ToyTextEncoder(Vocabulary vocab, const TextEncoderConfig& cfg, Rng& rng);

    const Vocabulary& vocab() const { return vocab_; }
    const TextEncoderConfig& config() const { return cfg_; }

    /// Batched encoding: one id list (ending in EOS) per sequence.
    mwnet::TextContext encode(ad::Tape& tape, const std::vector<std::vector<int>>& ids) const;

    template <class Fn>
    void visit(const std::string& prefix, Fn&& fn) { visit_impl(*this, prefix, fn); }
    template <class Fn>
    void visit(const std::string& prefix, Fn&& fn) const { visit_impl(*this, prefix, fn); }

private:
    template <class Self, class Fn>
    static void visit_impl(Self& self, const std::string& prefix, Fn& fn) {
        fn(prefix + "embedding", self.embedding_);
        mwnet::AttentionParams::visit(self.mix_, prefix + "mix", fn);
        fn(prefix + "ln_gain", self.ln_gain_);
        fn(prefix + "ln_bias", self.ln_bias_);
    }

    Vocabulary vocab_;
    TextEncoderConfig cfg_;
    ad::Parameter embedding_;  // V x d
    mwnet::AttentionParams mix_;
    ad::Parameter ln_gain_;
    ad::Parameter ln_bias_;
    Mat positions_;
};

struct TextEncoding {
    Mat text_seq;     // L x d
    Vec text_global;  // d
};

/// Appends EOS; text_global is the mixed feature at the EOS position.
TextEncoding encode_text(std::span<const std::string> tokens, const ToyTextEncoder& enc);

struct AudioEncoderConfig {
    int bands = 8;         // F
    int control_dim = 16;  // d_c; each modality gets d_c / 2
};

class ToyAudioEncoder {
public:
    ToyAudioEncoder() = default;
    ToyAudioEncoder(const AudioEncoderConfig& cfg, Rng& rng);

    const AudioEncoderConfig& config() const { return cfg_; }

    /// [music | vocal] per frame; absent modalities become their placeholder row.
    ad::Var fuse(ad::Tape& tape, const std::optional<Mat>& vocal, const std::optional<Mat>& music,
                 Eigen::Index rows) const;

    template <class Fn>
    void visit(const std::string& prefix, Fn&& fn) { visit_impl(*this, prefix, fn); }
    template <class Fn>
    void visit(const std::string& prefix, Fn&& fn) const { visit_impl(*this, prefix, fn); }

    mwnet::Linear& music_proj() { return music_proj_; }
    mwnet::Linear& vocal_proj() { return vocal_proj_; }

private:
    template <class Self, class Fn>
    static void visit_impl(Self& self, const std::string& prefix, Fn& fn) {
        mwnet::Linear::visit(self.music_proj_, prefix + "music_proj", fn);
        mwnet::Linear::visit(self.vocal_proj_, prefix + "vocal_proj", fn);
        fn(prefix + "music_placeholder", self.music_placeholder_);
        fn(prefix + "vocal_placeholder", self.vocal_placeholder_);
    }

    AudioEncoderConfig cfg_;
    mwnet::Linear music_proj_;
    mwnet::Linear vocal_proj_;
    ad::Parameter music_placeholder_;
    ad::Parameter vocal_placeholder_;
};

/// Forward-only fusion; output is rows x d_c.
Mat fuse_audio(const std::optional<Mat>& vocal, const std::optional<Mat>& music, const ToyAudioEncoder& enc,
               Eigen::Index rows);

/// Nearest-frame resampling onto the motion timeline; pads with the last frame, truncates to `frames`.
Mat align_audio_to_motion(const Mat& audio, double audio_rate, int frames, double motion_fps);

/// Per-frame log band energies of a mono waveform (rectangular bands over a naive DFT).
Mat band_energies(std::span<const double> waveform, double sample_rate, double fps, int bands);

/// Synthetic percussive waveform with a decaying burst at each beat time.
std::vector<double> click_track(std::span<const double> beat_times, double duration, double sample_rate);

/// Music features for a beat track on the motion timeline (T x bands).
Mat beat_features(std::span<const double> beat_times, int frames, double fps, int bands);

struct CaptionMeta {
    std::optional<std::string> gender;
    std::optional<std::string> genre;
    std::optional<std::string> situation;
};

/// "A {gender} dancer performs {genre} in {situation} to music."
std::string pseudo_caption(const CaptionMeta& meta);

}  // namespace mcm::cond

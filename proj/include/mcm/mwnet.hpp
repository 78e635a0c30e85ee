#pragma once

// MWNet denoiser: input projection, sinusoidal positions, a stack of multi-wise
// attention blocks (channel-wise SA, time-wise SA, cross-attention and FFN, each
// followed by FiLM timestep modulation) and an output projection.

#include "mcm/autodiff.hpp"
#include "mcm/condition_bundle.hpp"
#include "mcm/types.hpp"

#include <array>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace mcm::mwnet {

using Rng = std::mt19937_64;

enum class BlockLayout { kChannelFirst, kChannelPost };

std::string to_string(BlockLayout layout);
BlockLayout parse_layout(const std::string& name);

struct MwNetConfig {
    int input_dim = 263;
    int width = 64;       // d
    int time_dim = 64;    // d_t
    int blocks = 2;
    int heads = 4;        // N_h, time-wise and cross attention
    int groups = 4;       // N_g, channel-wise attention
    int ff_mult = 4;
    int max_len = 256;
    BlockLayout layout = BlockLayout::kChannelFirst;

    void validate() const;
    bool operator==(const MwNetConfig&) const = default;
};

struct Linear {
    ad::Parameter weight;  // in x out
    ad::Parameter bias;    // 1 x out (unused when !use_bias)
    bool use_bias = true;

    Linear() = default;
    Linear(int in, int out, bool with_bias, Rng& rng);

    ad::Var forward(ad::Tape& tape, const ad::Var& x) const;

    template <class Self, class Fn>
    static void visit(Self& self, const std::string& prefix, Fn&& fn) {
        fn(prefix + ".weight", self.weight);
        if (self.use_bias) fn(prefix + ".bias", self.bias);
    }
};

struct AttentionParams {
    ad::Parameter wq, wk, wv, wo;  // d x d
    int splits = 1;                // heads (time/cross) or groups (channel)

    AttentionParams() = default;
    AttentionParams(int width, int splits, Rng& rng);
    /// Identity projections, for tests and degenerate checks.
    static AttentionParams identity(int width, int splits);

    template <class Self, class Fn>
    static void visit(Self& self, const std::string& prefix, Fn&& fn) {
        fn(prefix + ".wq", self.wq);
        fn(prefix + ".wk", self.wk);
        fn(prefix + ".wv", self.wv);
        fn(prefix + ".wo", self.wo);
    }
};

struct FilmParams {
    ad::Parameter w_scale;  // d_t x d
    ad::Parameter w_shift;  // d_t x d
    ad::Parameter ln_gain;  // 1 x d
    ad::Parameter ln_bias;  // 1 x d

    FilmParams() = default;
    FilmParams(int width, int time_dim, Rng& rng);

    template <class Self, class Fn>
    static void visit(Self& self, const std::string& prefix, Fn&& fn) {
        fn(prefix + ".w_scale", self.w_scale);
        fn(prefix + ".w_shift", self.w_shift);
        fn(prefix + ".ln_gain", self.ln_gain);
        fn(prefix + ".ln_bias", self.ln_bias);
    }
};

struct NormParams {
    ad::Parameter gain;  // 1 x d
    ad::Parameter bias;  // 1 x d

    NormParams() = default;
    explicit NormParams(int width) : gain(Mat::Ones(1, width)), bias(Mat::Zero(1, width)) {}

    ad::Var forward(ad::Tape& tape, const ad::Var& x) const;

    template <class Self, class Fn>
    static void visit(Self& self, const std::string& prefix, Fn&& fn) {
        fn(prefix + ".gain", self.gain);
        fn(prefix + ".bias", self.bias);
    }
};

struct FeedForward {
    Linear up;
    Linear down;

    template <class Self, class Fn>
    static void visit(Self& self, const std::string& prefix, Fn&& fn) {
        Linear::visit(self.up, prefix + ".up", fn);
        Linear::visit(self.down, prefix + ".down", fn);
    }
};

struct MultiWiseBlock {
    AttentionParams channel_sa;
    AttentionParams time_sa;
    AttentionParams cross;
    FeedForward ffn;
    std::array<NormParams, 4> norm;  // on each sub-layer input, in execution order
    std::array<FilmParams, 4> film;

    MultiWiseBlock() = default;
    MultiWiseBlock(const MwNetConfig& cfg, Rng& rng);

    template <class Self, class Fn>
    static void visit(Self& self, const std::string& prefix, Fn&& fn) {
        AttentionParams::visit(self.channel_sa, prefix + ".channel_sa", fn);
        AttentionParams::visit(self.time_sa, prefix + ".time_sa", fn);
        AttentionParams::visit(self.cross, prefix + ".cross", fn);
        FeedForward::visit(self.ffn, prefix + ".ffn", fn);
        for (std::size_t i = 0; i < self.norm.size(); ++i) {
            NormParams::visit(self.norm[i], prefix + ".norm" + std::to_string(i), fn);
        }
        for (std::size_t i = 0; i < self.film.size(); ++i) {
            FilmParams::visit(self.film[i], prefix + ".film" + std::to_string(i), fn);
        }
    }
};

/// Batched text context on a tape: stacked token features plus per-sequence offsets.
struct TextContext {
    ad::Var tokens;            // (sum L_b) x d
    std::vector<int> offsets;  // B + 1 entries
    ad::Var global;            // B x d
};

/// Geometry of a batch of equally long sequences stacked along rows.
struct SequenceBatch {
    int batch = 1;
    int frames = 1;
    std::vector<unsigned char> frame_valid;  // empty, or batch*frames key-validity flags
};

// Sub-layers on a tape. x is (B*T) x d; t_emb is B x d_t.
ad::Var film(ad::Tape& tape, const ad::Var& x, const ad::Var& t_emb, const FilmParams& p, int frames);
ad::Var time_wise_sa(ad::Tape& tape, const ad::Var& x, const AttentionParams& p, const SequenceBatch& seq);
ad::Var channel_wise_sa(ad::Tape& tape, const ad::Var& x, const AttentionParams& p, int frames);
ad::Var cross_attention(ad::Tape& tape, const ad::Var& x, const TextContext& ctx, const AttentionParams& p,
                        const SequenceBatch& seq);
ad::Var feed_forward(ad::Tape& tape, const ad::Var& x, const FeedForward& p);
ad::Var block_forward(ad::Tape& tape, const ad::Var& x, const ad::Var& t_emb, const TextContext& ctx,
                      const MultiWiseBlock& block, BlockLayout layout, const SequenceBatch& seq);

Mat sinusoidal_table(int length, int width);
Mat timestep_sinusoid(std::span<const int> steps, int width);

class MwNetModel {
public:
    MwNetModel() = default;
    MwNetModel(const MwNetConfig& cfg, Rng& rng);

    const MwNetConfig& config() const { return cfg_; }

    /// in_proj followed by positional encoding; x_t is (B*T) x 263.
    ad::Var embed(ad::Tape& tape, const ad::Var& x_t, const SequenceBatch& seq) const;
    /// Timestep embedding merged with the projected global text feature: B x d_t.
    ad::Var time_embedding(ad::Tape& tape, std::span<const int> steps, const ad::Var& text_global) const;
    /// Runs all blocks. `injections[k]`, when given, is added to the input of block k.
    /// `block_outputs`, when non-null, receives each block's output.
    ad::Var run_blocks(ad::Tape& tape, ad::Var h, const ad::Var& t_emb, const TextContext& ctx,
                       const SequenceBatch& seq, std::span<const ad::Var> injections = {},
                       std::vector<ad::Var>* block_outputs = nullptr) const;
    /// Final layer norm and output projection back to input_dim.
    ad::Var project_out(ad::Tape& tape, const ad::Var& h) const;

    ad::Var forward(ad::Tape& tape, const ad::Var& x_t, std::span<const int> steps, const TextContext& ctx,
                    const SequenceBatch& seq) const;

    template <class Fn>
    void visit(const std::string& prefix, Fn&& fn) { visit_impl(*this, prefix, fn); }
    template <class Fn>
    void visit(const std::string& prefix, Fn&& fn) const { visit_impl(*this, prefix, fn); }

    std::vector<MultiWiseBlock>& blocks() { return blocks_; }
    const std::vector<MultiWiseBlock>& blocks() const { return blocks_; }
    Linear& in_proj() { return in_proj_; }
    Linear& out_proj() { return out_proj_; }

private:
    template <class Self, class Fn>
    static void visit_impl(Self& self, const std::string& prefix, Fn& fn) {
        Linear::visit(self.in_proj_, prefix + "in_proj", fn);
        Linear::visit(self.time_l1_, prefix + "time.l1", fn);
        Linear::visit(self.time_l2_, prefix + "time.l2", fn);
        Linear::visit(self.text_global_proj_, prefix + "time.text", fn);
        for (std::size_t k = 0; k < self.blocks_.size(); ++k) {
            MultiWiseBlock::visit(self.blocks_[k], prefix + "block" + std::to_string(k), fn);
        }
        NormParams::visit(self.out_norm_, prefix + "out_norm", fn);
        Linear::visit(self.out_proj_, prefix + "out_proj", fn);
    }

    MwNetConfig cfg_;
    Linear in_proj_;
    NormParams out_norm_;
    Linear out_proj_;
    Linear time_l1_;
    Linear time_l2_;
    Linear text_global_proj_;
    std::vector<MultiWiseBlock> blocks_;
    Mat positions_;  // max_len x d, constant
};

// Single-sequence, forward-only entry points (no gradient recording).
Mat film(const Mat& x, const Vec& t_emb, const FilmParams& p);
Mat time_wise_sa(const Mat& x, const AttentionParams& p, const std::vector<unsigned char>& mask = {});
Mat channel_wise_sa(const Mat& x, const AttentionParams& p);
Mat cross_attention(const Mat& x, const Mat& context, const AttentionParams& p);
Mat block_forward(const Mat& x, const Vec& t_emb, const Mat& context, const MultiWiseBlock& block,
                  BlockLayout layout);
Mat mwnet_forward(const Mat& x_t, int t, const ConditionBundle& cond, const MwNetModel& model);

}  // namespace mcm::mwnet

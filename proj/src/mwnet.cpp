#include "mcm/mwnet.hpp"

#include "mcm/error.hpp"

#include <cmath>

namespace mcm::mwnet {

std::string to_string(BlockLayout layout) {
    return layout == BlockLayout::kChannelFirst ? "channel_first" : "channel_post";
}

BlockLayout parse_layout(const std::string& name) {
    if (name == "channel_first") return BlockLayout::kChannelFirst;
    if (name == "channel_post") return BlockLayout::kChannelPost;
    throw ConfigError("layout must be channel_first or channel_post, got \"" + name + "\"");
}

void MwNetConfig::validate() const {
    if (input_dim < 1 || width < 1 || time_dim < 2 || blocks < 1 || ff_mult < 1 || max_len < 1) {
        throw ConfigError("model sizes must be positive (time_dim >= 2)");
    }
    if (time_dim % 2 != 0) throw ConfigError("time_dim must be even");
    if (heads < 1 || width % heads != 0) {
        throw ConfigError("width " + std::to_string(width) + " not divisible by heads " + std::to_string(heads));
    }
    if (groups < 1 || width % groups != 0) {
        throw ConfigError("width " + std::to_string(width) + " not divisible by groups " + std::to_string(groups));
    }
}

namespace {

Mat random_normal(int rows, int cols, double stddev, Rng& rng) {
    std::normal_distribution<double> n(0.0, stddev);
    Mat m(rows, cols);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) m(r, c) = n(rng);
    }
    return m;
}

ad::Parameter fan_in_weight(int in, int out, Rng& rng) {
    return ad::Parameter(random_normal(in, out, 1.0 / std::sqrt(static_cast<double>(in)), rng));
}

}  // namespace

Linear::Linear(int in, int out, bool with_bias, Rng& rng)
    : weight(fan_in_weight(in, out, rng)), bias(Mat::Zero(1, out)), use_bias(with_bias) {}

ad::Var Linear::forward(ad::Tape& tape, const ad::Var& x) const {
    ad::Var y = ad::matmul(x, tape.param(weight));
    return use_bias ? ad::add_row(y, tape.param(bias)) : y;
}

ad::Var NormParams::forward(ad::Tape& tape, const ad::Var& x) const {
    return ad::layer_norm(x, tape.param(gain), tape.param(bias));
}

AttentionParams::AttentionParams(int width, int s, Rng& rng)
    : wq(fan_in_weight(width, width, rng)),
      wk(fan_in_weight(width, width, rng)),
      wv(fan_in_weight(width, width, rng)),
      wo(fan_in_weight(width, width, rng)),
      splits(s) {}

AttentionParams AttentionParams::identity(int width, int s) {
    AttentionParams p;
    const Mat eye = Mat::Identity(width, width);
    p.wq = ad::Parameter(eye);
    p.wk = ad::Parameter(eye);
    p.wv = ad::Parameter(eye);
    p.wo = ad::Parameter(eye);
    p.splits = s;
    return p;
}

FilmParams::FilmParams(int width, int time_dim, Rng& rng)
    : w_scale(ad::Parameter(random_normal(time_dim, width, 0.1 / std::sqrt(static_cast<double>(time_dim)), rng))),
      w_shift(ad::Parameter(random_normal(time_dim, width, 0.1 / std::sqrt(static_cast<double>(time_dim)), rng))),
      ln_gain(ad::Parameter(Mat::Ones(1, width))),
      ln_bias(ad::Parameter(Mat::Zero(1, width))) {}

MultiWiseBlock::MultiWiseBlock(const MwNetConfig& cfg, Rng& rng)
    : channel_sa(cfg.width, cfg.groups, rng),
      time_sa(cfg.width, cfg.heads, rng),
      cross(cfg.width, cfg.heads, rng),
      ffn{Linear(cfg.width, cfg.ff_mult * cfg.width, true, rng), Linear(cfg.ff_mult * cfg.width, cfg.width, true, rng)},
      norm{NormParams(cfg.width), NormParams(cfg.width), NormParams(cfg.width), NormParams(cfg.width)},
      film{FilmParams(cfg.width, cfg.time_dim, rng), FilmParams(cfg.width, cfg.time_dim, rng),
           FilmParams(cfg.width, cfg.time_dim, rng), FilmParams(cfg.width, cfg.time_dim, rng)} {}

// out = x + LN(x * (1 + W1 e)) + W2 e, with e broadcast over the frames of each sequence.
ad::Var film(ad::Tape& tape, const ad::Var& x, const ad::Var& t_emb, const FilmParams& p, int frames) {
    ad::Var scale = ad::matmul(t_emb, tape.param(p.w_scale));
    ad::Var shift = ad::matmul(t_emb, tape.param(p.w_shift));
    ad::Var modulated = ad::add(x, ad::seg_mul(x, scale, frames));
    ad::Var normed = ad::layer_norm(modulated, tape.param(p.ln_gain), tape.param(p.ln_bias));
    return ad::seg_add(ad::add(x, normed), shift, frames);
}

namespace {

ad::Var project(ad::Tape& tape, const ad::Var& x, const ad::Parameter& w) { return ad::matmul(x, tape.param(w)); }

}  // namespace

ad::Var time_wise_sa(ad::Tape& tape, const ad::Var& x, const AttentionParams& p, const SequenceBatch& seq) {
    ad::AttentionLayout layout = ad::AttentionLayout::uniform(seq.batch, seq.frames, seq.frames);
    layout.key_valid = seq.frame_valid;
    ad::Var o = ad::multi_head_attention(project(tape, x, p.wq), project(tape, x, p.wk), project(tape, x, p.wv),
                                         p.splits, layout);
    return project(tape, o, p.wo);
}

ad::Var channel_wise_sa(ad::Tape& tape, const ad::Var& x, const AttentionParams& p, int frames) {
    ad::Var o = ad::channel_attention(project(tape, x, p.wq), project(tape, x, p.wk), project(tape, x, p.wv), p.splits,
                                      frames);
    return project(tape, o, p.wo);
}

ad::Var cross_attention(ad::Tape& tape, const ad::Var& x, const TextContext& ctx, const AttentionParams& p,
                        const SequenceBatch& seq) {
    if (ctx.offsets.size() != static_cast<std::size_t>(seq.batch) + 1) {
        throw DimensionError("cross attention: context offsets do not match batch size");
    }
    ad::AttentionLayout layout;
    layout.k_offsets = ctx.offsets;
    for (int b = 0; b <= seq.batch; ++b) layout.q_offsets.push_back(b * seq.frames);
    ad::Var o = ad::multi_head_attention(project(tape, x, p.wq), project(tape, ctx.tokens, p.wk),
                                         project(tape, ctx.tokens, p.wv), p.splits, layout);
    return project(tape, o, p.wo);
}

ad::Var feed_forward(ad::Tape& tape, const ad::Var& x, const FeedForward& p) {
    return p.down.forward(tape, ad::gelu(p.up.forward(tape, x)));
}

ad::Var block_forward(ad::Tape& tape, const ad::Var& x, const ad::Var& t_emb, const TextContext& ctx,
                      const MultiWiseBlock& block, BlockLayout layout, const SequenceBatch& seq) {
    enum class Sub { kChannel, kTime, kCross, kFfn };
    static constexpr std::array<Sub, 4> kChannelFirst{Sub::kChannel, Sub::kTime, Sub::kCross, Sub::kFfn};
    static constexpr std::array<Sub, 4> kChannelPost{Sub::kTime, Sub::kCross, Sub::kChannel, Sub::kFfn};
    const auto& order = layout == BlockLayout::kChannelFirst ? kChannelFirst : kChannelPost;

    // Each sub-layer reads a normalized copy of the stream; the residual and FiLM act on the raw stream.
    ad::Var h = x;
    for (std::size_t i = 0; i < order.size(); ++i) {
        const ad::Var in = block.norm[i].forward(tape, h);
        ad::Var sub;
        switch (order[i]) {
            case Sub::kChannel: sub = channel_wise_sa(tape, in, block.channel_sa, seq.frames); break;
            case Sub::kTime: sub = time_wise_sa(tape, in, block.time_sa, seq); break;
            case Sub::kCross: sub = cross_attention(tape, in, ctx, block.cross, seq); break;
            case Sub::kFfn: sub = feed_forward(tape, in, block.ffn); break;
        }
        h = film(tape, ad::add(h, sub), t_emb, block.film[i], seq.frames);
    }
    return h;
}

Mat sinusoidal_table(int length, int width) {
    Mat table(length, width);
    for (int p = 0; p < length; ++p) {
        for (int i = 0; i < width; ++i) {
            const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / width);
            table(p, i) = (i % 2 == 0) ? std::sin(p * freq) : std::cos(p * freq);
        }
    }
    return table;
}

Mat timestep_sinusoid(std::span<const int> steps, int width) {
    const int half = width / 2;
    Mat out(static_cast<Eigen::Index>(steps.size()), width);
    for (std::size_t b = 0; b < steps.size(); ++b) {
        for (int i = 0; i < half; ++i) {
            const double freq = std::exp(-std::log(10000.0) * i / half);
            out(static_cast<Eigen::Index>(b), i) = std::sin(steps[b] * freq);
            out(static_cast<Eigen::Index>(b), half + i) = std::cos(steps[b] * freq);
        }
    }
    return out;
}

MwNetModel::MwNetModel(const MwNetConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    in_proj_ = Linear(cfg.input_dim, cfg.width, true, rng);
    time_l1_ = Linear(cfg.time_dim, cfg.time_dim, true, rng);
    time_l2_ = Linear(cfg.time_dim, cfg.time_dim, true, rng);
    text_global_proj_ = Linear(cfg.width, cfg.time_dim, false, rng);
    for (int k = 0; k < cfg.blocks; ++k) blocks_.emplace_back(cfg_, rng);
    out_norm_ = NormParams(cfg.width);
    out_proj_ = Linear(cfg.width, cfg.input_dim, true, rng);
    positions_ = sinusoidal_table(cfg.max_len, cfg.width);
}

ad::Var MwNetModel::embed(ad::Tape& tape, const ad::Var& x_t, const SequenceBatch& seq) const {
    if (seq.frames > cfg_.max_len) {
        throw ConfigError("sequence of " + std::to_string(seq.frames) + " frames exceeds positional table of " +
                          std::to_string(cfg_.max_len));
    }
    if (x_t.rows() != static_cast<Eigen::Index>(seq.batch) * seq.frames || x_t.cols() != cfg_.input_dim) {
        throw DimensionError("mwnet input must be (batch*frames) x " + std::to_string(cfg_.input_dim));
    }
    ad::Var h = in_proj_.forward(tape, x_t);
    return ad::add(h, tape.constant(positions_.topRows(seq.frames).replicate(seq.batch, 1)));
}

ad::Var MwNetModel::time_embedding(ad::Tape& tape, std::span<const int> steps, const ad::Var& text_global) const {
    ad::Var e = tape.constant(timestep_sinusoid(steps, cfg_.time_dim));
    e = time_l2_.forward(tape, ad::silu(time_l1_.forward(tape, e)));
    return ad::add(e, text_global_proj_.forward(tape, text_global));
}

ad::Var MwNetModel::run_blocks(ad::Tape& tape, ad::Var h, const ad::Var& t_emb, const TextContext& ctx,
                               const SequenceBatch& seq, std::span<const ad::Var> injections,
                               std::vector<ad::Var>* block_outputs) const {
    if (!injections.empty() && injections.size() != blocks_.size()) {
        throw DimensionError("expected one injection per block");
    }
    for (std::size_t k = 0; k < blocks_.size(); ++k) {
        if (!injections.empty()) h = ad::add(h, injections[k]);
        h = block_forward(tape, h, t_emb, ctx, blocks_[k], cfg_.layout, seq);
        if (block_outputs != nullptr) block_outputs->push_back(h);
    }
    return h;
}

ad::Var MwNetModel::project_out(ad::Tape& tape, const ad::Var& h) const {
    return out_proj_.forward(tape, out_norm_.forward(tape, h));
}

ad::Var MwNetModel::forward(ad::Tape& tape, const ad::Var& x_t, std::span<const int> steps, const TextContext& ctx,
                            const SequenceBatch& seq) const {
    if (steps.size() != static_cast<std::size_t>(seq.batch)) throw DimensionError("one timestep per sequence required");
    ad::Var h = embed(tape, x_t, seq);
    ad::Var t_emb = time_embedding(tape, steps, ctx.global);
    return project_out(tape, run_blocks(tape, h, t_emb, ctx, seq));
}

namespace {

TextContext single_context(ad::Tape& tape, const Mat& context, const Vec& global) {
    if (context.rows() < 1) throw ValidationError("cross attention context is empty");
    return TextContext{tape.constant(context), {0, static_cast<int>(context.rows())},
                       tape.constant(global.transpose())};
}

}  // namespace

Mat film(const Mat& x, const Vec& t_emb, const FilmParams& p) {
    if (t_emb.size() != p.w_scale.value.rows() || x.cols() != p.w_scale.value.cols()) {
        throw DimensionError("film: x or t_emb width does not match parameters");
    }
    ad::Tape tape(false);
    return film(tape, tape.constant(x), tape.constant(t_emb.transpose()), p, static_cast<int>(x.rows())).value();
}

Mat time_wise_sa(const Mat& x, const AttentionParams& p, const std::vector<unsigned char>& mask) {
    if (mask.size() > static_cast<std::size_t>(x.rows())) {
        throw ValidationError("mask of length " + std::to_string(mask.size()) + " exceeds " +
                              std::to_string(x.rows()) + " frames");
    }
    SequenceBatch seq{1, static_cast<int>(x.rows()), {}};
    if (!mask.empty()) {
        seq.frame_valid = mask;
        seq.frame_valid.resize(static_cast<std::size_t>(x.rows()), 0);
    }
    ad::Tape tape(false);
    return time_wise_sa(tape, tape.constant(x), p, seq).value();
}

Mat channel_wise_sa(const Mat& x, const AttentionParams& p) {
    ad::Tape tape(false);
    return channel_wise_sa(tape, tape.constant(x), p, static_cast<int>(x.rows())).value();
}

Mat cross_attention(const Mat& x, const Mat& context, const AttentionParams& p) {
    ad::Tape tape(false);
    const TextContext ctx = single_context(tape, context, Vec::Zero(context.cols()));
    return cross_attention(tape, tape.constant(x), ctx, p, SequenceBatch{1, static_cast<int>(x.rows()), {}}).value();
}

Mat block_forward(const Mat& x, const Vec& t_emb, const Mat& context, const MultiWiseBlock& block,
                  BlockLayout layout) {
    ad::Tape tape(false);
    const TextContext ctx = single_context(tape, context, Vec::Zero(context.cols()));
    return block_forward(tape, tape.constant(x), tape.constant(t_emb.transpose()), ctx, block, layout,
                         SequenceBatch{1, static_cast<int>(x.rows()), {}})
        .value();
}

Mat mwnet_forward(const Mat& x_t, int t, const ConditionBundle& cond, const MwNetModel& model) {
    ad::Tape tape(false);
    const TextContext ctx = single_context(tape, cond.text_seq, cond.text_global);
    const int steps[1] = {t};
    return model.forward(tape, tape.constant(x_t), steps, ctx, SequenceBatch{1, static_cast<int>(x_t.rows()), {}})
        .value();
}

}  // namespace mcm::mwnet

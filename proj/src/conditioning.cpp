#include "mcm/conditioning.hpp"

#include "mcm/error.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>

namespace mcm::cond {

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isspace(c)) {
            if (!cur.empty()) out.push_back(std::move(cur));
            cur.clear();
        } else if (!std::ispunct(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

Vocabulary::Vocabulary() {
    add("<unk>");
    add("<eos>");
}

Vocabulary::Vocabulary(std::span<const std::string> words) : Vocabulary() {
    for (const auto& w : words) add(w);
}

void Vocabulary::add(const std::string& w) {
    if (index_.contains(w)) return;
    index_.emplace(w, static_cast<int>(words_.size()));
    words_.push_back(w);
}

int Vocabulary::id(const std::string& token) const {
    const auto it = index_.find(token);
    return it == index_.end() ? kUnk : it->second;
}

std::vector<int> Vocabulary::encode(std::span<const std::string> tokens) const {
    std::vector<int> ids;
    ids.reserve(tokens.size() + 1);
    for (const auto& t : tokens) ids.push_back(id(t));
    ids.push_back(kEos);
    return ids;
}

ToyTextEncoder::ToyTextEncoder(Vocabulary vocab, const TextEncoderConfig& cfg, Rng& rng)
    : vocab_(std::move(vocab)), cfg_(cfg) {
    if (cfg.width < 1 || cfg.heads < 1 || cfg.width % cfg.heads != 0 || cfg.max_tokens < 1) {
        throw ConfigError("text encoder width must be divisible by heads");
    }
    std::normal_distribution<double> n01(0.0, 1.0);
    Mat emb(vocab_.size(), cfg.width);
    for (Eigen::Index r = 0; r < emb.rows(); ++r) {
        for (Eigen::Index c = 0; c < emb.cols(); ++c) emb(r, c) = n01(rng);
    }
    embedding_ = ad::Parameter(std::move(emb));
    mix_ = mwnet::AttentionParams(cfg.width, cfg.heads, rng);
    ln_gain_ = ad::Parameter(Mat::Ones(1, cfg.width));
    ln_bias_ = ad::Parameter(Mat::Zero(1, cfg.width));
    positions_ = mwnet::sinusoidal_table(cfg.max_tokens, cfg.width);
}

mwnet::TextContext ToyTextEncoder::encode(ad::Tape& tape, const std::vector<std::vector<int>>& ids) const {
    std::vector<int> flat;
    std::vector<int> offsets{0};
    std::vector<int> eos_rows;
    Mat pos(0, cfg_.width);
    for (const auto& seq : ids) {
        if (seq.empty()) throw ValidationError("text encoder: empty id list (EOS required)");
        if (static_cast<int>(seq.size()) > cfg_.max_tokens) {
            throw ValidationError("caption of " + std::to_string(seq.size()) + " tokens exceeds max_tokens " +
                                  std::to_string(cfg_.max_tokens));
        }
        flat.insert(flat.end(), seq.begin(), seq.end());
        offsets.push_back(static_cast<int>(flat.size()));
        eos_rows.push_back(offsets.back() - 1);
    }
    Mat positions(static_cast<Eigen::Index>(flat.size()), cfg_.width);
    for (std::size_t b = 0; b < ids.size(); ++b) {
        const int n = offsets[b + 1] - offsets[b];
        positions.middleRows(offsets[b], n) = positions_.topRows(n);
    }

    ad::Var h = ad::add(ad::gather_rows(tape.param(embedding_), flat), tape.constant(std::move(positions)));
    ad::AttentionLayout layout;
    layout.q_offsets = offsets;
    layout.k_offsets = offsets;
    ad::Var q = ad::matmul(h, tape.param(mix_.wq));
    ad::Var k = ad::matmul(h, tape.param(mix_.wk));
    ad::Var v = ad::matmul(h, tape.param(mix_.wv));
    ad::Var mixed = ad::matmul(ad::multi_head_attention(q, k, v, mix_.splits, layout), tape.param(mix_.wo));
    ad::Var out = ad::layer_norm(ad::add(h, mixed), tape.param(ln_gain_), tape.param(ln_bias_));
    return mwnet::TextContext{out, offsets, ad::gather_rows(out, eos_rows)};
}

TextEncoding encode_text(std::span<const std::string> tokens, const ToyTextEncoder& enc) {
    ad::Tape tape(false);
    const mwnet::TextContext ctx = enc.encode(tape, {enc.vocab().encode(tokens)});
    return {ctx.tokens.value(), ctx.global.value().row(0).transpose()};
}

ToyAudioEncoder::ToyAudioEncoder(const AudioEncoderConfig& cfg, Rng& rng) : cfg_(cfg) {
    if (cfg.bands < 1 || cfg.control_dim < 2 || cfg.control_dim % 2 != 0) {
        throw ConfigError("audio encoder needs bands >= 1 and an even control_dim");
    }
    const int half = cfg.control_dim / 2;
    music_proj_ = mwnet::Linear(cfg.bands, half, true, rng);
    vocal_proj_ = mwnet::Linear(cfg.bands, half, true, rng);
    std::normal_distribution<double> n01(0.0, 1.0);
    Mat mp(1, half);
    Mat vp(1, half);
    for (int i = 0; i < half; ++i) mp(0, i) = n01(rng);
    for (int i = 0; i < half; ++i) vp(0, i) = n01(rng);
    music_placeholder_ = ad::Parameter(std::move(mp));
    vocal_placeholder_ = ad::Parameter(std::move(vp));
}

ad::Var ToyAudioEncoder::fuse(ad::Tape& tape, const std::optional<Mat>& vocal, const std::optional<Mat>& music,
                              Eigen::Index rows) const {
    auto branch = [&](const std::optional<Mat>& feats, const mwnet::Linear& proj, const ad::Parameter& placeholder,
                      const char* name) {
        if (!feats) return ad::broadcast_rows(tape.param(placeholder), rows);
        if (feats->rows() != rows || feats->cols() != cfg_.bands) {
            throw DimensionError(std::string(name) + " features must be " + std::to_string(rows) + " x " +
                                 std::to_string(cfg_.bands));
        }
        return proj.forward(tape, tape.constant(*feats));
    };
    const ad::Var parts[2] = {branch(music, music_proj_, music_placeholder_, "music"),
                              branch(vocal, vocal_proj_, vocal_placeholder_, "vocal")};
    return ad::concat_cols(parts);
}

Mat fuse_audio(const std::optional<Mat>& vocal, const std::optional<Mat>& music, const ToyAudioEncoder& enc,
               Eigen::Index rows) {
    ad::Tape tape(false);
    return enc.fuse(tape, vocal, music, rows).value();
}

Mat align_audio_to_motion(const Mat& audio, double audio_rate, int frames, double motion_fps) {
    if (frames < 1) throw ValidationError("align_audio_to_motion: frames must be >= 1");
    if (!(audio_rate > 0.0) || !(motion_fps > 0.0)) throw ValidationError("align_audio_to_motion: rates must be positive");
    if (audio.rows() < 1) throw ValidationError("align_audio_to_motion: empty audio features");
    Mat out(frames, audio.cols());
    const double ratio = audio_rate / motion_fps;
    for (int t = 0; t < frames; ++t) {
        const long idx = std::lround(t * ratio);
        out.row(t) = audio.row(std::min<long>(idx, audio.rows() - 1));
    }
    return out;
}

Mat band_energies(std::span<const double> waveform, double sample_rate, double fps, int bands) {
    if (!(sample_rate > 0.0) || !(fps > 0.0) || bands < 1) throw ValidationError("band_energies: bad rates or bands");
    const int hop = static_cast<int>(std::lround(sample_rate / fps));
    const int nyquist_bins = hop / 2;
    if (hop < 2 || nyquist_bins < bands) throw ValidationError("band_energies: frame too short for band count");
    const int frames = static_cast<int>(waveform.size()) / hop;
    Mat out(frames, bands);
    std::vector<double> power(static_cast<std::size_t>(nyquist_bins));
    for (int f = 0; f < frames; ++f) {
        const double* x = waveform.data() + static_cast<std::ptrdiff_t>(f) * hop;
        for (int k = 1; k <= nyquist_bins; ++k) {
            double re = 0.0;
            double im = 0.0;
            const double w = 2.0 * std::numbers::pi * k / hop;
            for (int n = 0; n < hop; ++n) {
                re += x[n] * std::cos(w * n);
                im -= x[n] * std::sin(w * n);
            }
            power[static_cast<std::size_t>(k - 1)] = (re * re + im * im) / hop;
        }
        for (int b = 0; b < bands; ++b) {
            const int lo = b * nyquist_bins / bands;
            const int hi = (b + 1) * nyquist_bins / bands;
            double e = 0.0;
            for (int k = lo; k < hi; ++k) e += power[static_cast<std::size_t>(k)];
            out(f, b) = std::log10(1e-3 + e) + 3.0;
        }
    }
    return out;
}

std::vector<double> click_track(std::span<const double> beat_times, double duration, double sample_rate) {
    const auto n = static_cast<std::size_t>(std::max(0.0, std::floor(duration * sample_rate)));
    std::vector<double> wave(n, 0.0);
    constexpr double kBurst = 0.15;
    constexpr double kDecay = 0.04;
    constexpr double kTones[] = {300.0, 900.0, 1500.0};
    for (double tb : beat_times) {
        const auto start = static_cast<long>(std::lround(tb * sample_rate));
        const auto len = static_cast<long>(kBurst * sample_rate);
        for (long i = 0; i < len; ++i) {
            const long idx = start + i;
            if (idx < 0 || idx >= static_cast<long>(n)) continue;
            const double s = i / sample_rate;
            double v = 0.0;
            for (double f : kTones) v += std::sin(2.0 * std::numbers::pi * f * s);
            wave[static_cast<std::size_t>(idx)] += std::exp(-s / kDecay) * v;
        }
    }
    return wave;
}

Mat beat_features(std::span<const double> beat_times, int frames, double fps, int bands) {
    constexpr double kSampleRate = 4000.0;
    const std::vector<double> wave = click_track(beat_times, frames / fps, kSampleRate);
    const Mat feats = band_energies(wave, kSampleRate, fps, bands);
    return align_audio_to_motion(feats, fps, frames, fps);
}

std::string pseudo_caption(const CaptionMeta& meta) {
    std::string s = "A ";
    if (meta.gender && !meta.gender->empty()) s += *meta.gender + " ";
    s += "dancer performs ";
    s += (meta.genre && !meta.genre->empty()) ? *meta.genre : std::string("a dance");
    if (meta.situation && !meta.situation->empty()) s += " in " + *meta.situation;
    s += " to music.";
    return s;
}

}  // namespace mcm::cond

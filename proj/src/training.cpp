#include "mcm/training.hpp"

#include "mcm/conditioning.hpp"
#include "mcm/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>

namespace mcm::train {

namespace {

using motion::joint_pos_channel;
using motion::joint_vel_channel;

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Joints driven by each body part and their base z amplitudes (metres).
struct Driver {
    int joint;
    double amplitude;
    double sign;  // left and right limbs swing in antiphase
};

const std::vector<Driver>& drivers(bool arm) {
    static const std::vector<Driver> kArm{{18, 0.3, 1.0}, {19, 0.3, -1.0}, {20, 0.5, 1.0}, {21, 0.5, -1.0}};
    static const std::vector<Driver> kLeg{{4, 0.2, 1.0},  {5, 0.2, -1.0},  {7, 0.4, 1.0},
                                          {8, 0.4, -1.0}, {10, 0.45, 1.0}, {11, 0.45, -1.0}};
    return arm ? kArm : kLeg;
}

constexpr int kFootJoints[4] = {7, 10, 8, 11};  // left heel, left toe, right heel, right toe

}  // namespace

std::vector<std::string> toy_words() { return {"a", "person", "moves", "the", "arm", "leg", "slow", "fast"}; }

std::string toy_caption(bool arm, bool fast) {
    return std::string("a person moves the ") + (arm ? "arm" : "leg") + (fast ? " fast" : " slow");
}

Mat rest_pose() {
    Mat p(motion::kNonRootJoints, 3);
    // Rows are joints 1..21; y is height above the ground.
    p << 0.06, 0.82, 0.0,     // 1 left hip
        -0.06, 0.82, 0.0,     // 2 right hip
        0.0, 1.00, 0.0,       // 3 spine
        0.10, 0.50, 0.0,      // 4 left knee
        -0.10, 0.50, 0.0,     // 5 right knee
        0.0, 1.13, 0.0,       // 6 spine
        0.10, 0.10, 0.0,      // 7 left ankle
        -0.10, 0.10, 0.0,     // 8 right ankle
        0.0, 1.18, 0.0,       // 9 spine
        0.12, 0.02, 0.10,     // 10 left foot
        -0.12, 0.02, 0.10,    // 11 right foot
        0.0, 1.40, 0.0,       // 12 neck
        0.08, 1.35, 0.0,      // 13 left collar
        -0.08, 1.35, 0.0,     // 14 right collar
        0.0, 1.55, 0.03,      // 15 head
        0.18, 1.35, 0.0,      // 16 left shoulder
        -0.18, 1.35, 0.0,     // 17 right shoulder
        0.42, 1.35, 0.0,      // 18 left elbow
        -0.42, 1.35, 0.0,     // 19 right elbow
        0.65, 1.35, 0.0,      // 20 left wrist
        -0.65, 1.35, 0.0;     // 21 right wrist
    return p;
}

int active_channel(bool arm) { return joint_pos_channel(arm ? 20 : 7, 2); }

ToySample make_toy_sample(const ToyMeta& meta, int frames, const metrics::BeatTrack& beats) {
    if (frames < 2) throw ValidationError("toy samples need at least 2 frames");
    const double fps = motion::kCanonicalFps;
    const Mat rest = rest_pose();
    const auto& drv = drivers(meta.arm);

    // Positions are evaluated one frame past the end so every frame has a forward difference.
    std::vector<Mat> pose(static_cast<std::size_t>(frames) + 1, rest);
    for (int t = 0; t <= frames; ++t) {
        const double s = std::sin(kTwoPi * meta.frequency * t / fps + meta.phase);
        for (const Driver& d : drv) pose[static_cast<std::size_t>(t)](d.joint - 1, 2) += d.sign * meta.amplitude * d.amplitude * s;
    }

    Mat out(frames, motion::kFrameDim);
    for (int t = 0; t < frames; ++t) {
        motion::MotionFrame f;
        f.root_height = 0.9;
        f.joint_pos = pose[static_cast<std::size_t>(t)];
        for (int j = 0; j < motion::kNonRootJoints; ++j) {
            f.joint_rot(j, 0) = 1.0;
            f.joint_rot(j, 4) = 1.0;
        }
        f.joint_vel.bottomRows(motion::kNonRootJoints) =
            pose[static_cast<std::size_t>(t) + 1] - pose[static_cast<std::size_t>(t)];
        for (int c = 0; c < 4; ++c) {
            const double speed = f.joint_vel.row(kFootJoints[c]).norm();
            f.foot_contacts[static_cast<std::size_t>(c)] = speed < 0.002 ? 1.0 : 0.0;
        }
        out.row(t) = motion::pack_frame(f).transpose();
    }

    ToySample s;
    s.motion.frames = std::move(out);
    s.motion.fps = fps;
    s.motion.label = toy_caption(meta.arm, meta.fast);
    s.caption = cond::tokenize(*s.motion.label);
    s.beats = beats;
    s.meta = meta;
    return s;
}

std::vector<ToySample> make_toy_dataset(int n, int frames, std::uint64_t seed, bool with_control) {
    if (n < 0) throw ValidationError("dataset size must be >= 0");
    Rng rng(seed);
    std::uniform_real_distribution<double> phase01(0.0, 1.0);
    std::uniform_real_distribution<double> amp(0.9, 1.1);
    std::uniform_int_distribution<int> offset_frames(0, motion::kCanonicalFps - 1);
    const double fps = motion::kCanonicalFps;
    const double duration = frames / fps;

    std::vector<ToySample> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        ToyMeta m;
        m.arm = i % 2 == 0;
        m.fast = (i / 2) % 2 == 1;
        m.frequency = m.fast ? kFastHz : kSlowHz;
        m.amplitude = amp(rng);
        metrics::BeatTrack beats;
        if (with_control) {
            const double offset = offset_frames(rng) / fps;
            for (double tb = offset; tb < duration; tb += kBeatPeriod) beats.times.push_back(tb);
            // Forward-difference speed at frame t is centred half a frame later; shift so minima land on beats.
            m.phase = std::numbers::pi / 2.0 - kTwoPi * m.frequency * (offset + 0.5 / fps);
        } else {
            m.phase = kTwoPi * phase01(rng);
        }
        out.push_back(make_toy_sample(m, frames, beats));
    }
    return out;
}

int zero_crossings(const Mat& frames, int channel) {
    if (channel < 0 || channel >= frames.cols()) throw IndexError("channel " + std::to_string(channel) + " out of range");
    const Vec x = frames.col(channel).array() - frames.col(channel).mean();
    int n = 0;
    for (Eigen::Index t = 1; t < x.size(); ++t) {
        if ((x[t - 1] >= 0.0) != (x[t] >= 0.0)) ++n;
    }
    return n;
}

double crossing_frequency(const Mat& frames, int channel, double fps) {
    if (channel < 0 || channel >= frames.cols()) throw IndexError("channel " + std::to_string(channel) + " out of range");
    const Vec x = frames.col(channel).array() - frames.col(channel).mean();
    std::vector<double> times;
    for (Eigen::Index t = 1; t < x.size(); ++t) {
        if ((x[t - 1] >= 0.0) != (x[t] >= 0.0)) {
            const double frac = x[t - 1] / (x[t - 1] - x[t]);
            times.push_back((static_cast<double>(t - 1) + frac) / fps);
        }
    }
    if (times.size() < 2) return 0.0;
    // Consecutive crossings are half a period apart.
    return static_cast<double>(times.size() - 1) / (2.0 * (times.back() - times.front()));
}

Normalizer Normalizer::identity(int dim) { return {Vec::Zero(dim), Vec::Ones(dim)}; }

Normalizer Normalizer::fit(const std::vector<ToySample>& data) {
    if (data.empty()) throw ValidationError("cannot fit a normalizer on an empty dataset");
    const Eigen::Index dim = data.front().motion.frames.cols();
    Vec sum = Vec::Zero(dim);
    Vec sq = Vec::Zero(dim);
    double count = 0.0;
    for (const auto& s : data) {
        if (s.motion.frames.cols() != dim) throw DimensionError("samples differ in frame dimension");
        sum += s.motion.frames.colwise().sum().transpose();
        count += static_cast<double>(s.motion.frames.rows());
    }
    Normalizer n;
    n.mean = sum / count;
    for (const auto& s : data) {
        sq += (s.motion.frames.rowwise() - n.mean.transpose()).array().square().colwise().sum().matrix().transpose();
    }
    n.std = (sq / count).cwiseSqrt();
    for (Eigen::Index c = 0; c < dim; ++c) {
        if (n.std[c] < 1e-4) n.std[c] = 1.0;
    }
    return n;
}

Mat Normalizer::apply(const Mat& frames) const {
    if (frames.cols() != mean.size()) throw DimensionError("normalizer dimension mismatch");
    return (frames.rowwise() - mean.transpose()).array().rowwise() / std.transpose().array();
}

Mat Normalizer::invert(const Mat& frames) const {
    if (frames.cols() != mean.size()) throw DimensionError("normalizer dimension mismatch");
    return (frames.array().rowwise() * std.transpose().array()).matrix().rowwise() + mean.transpose();
}

double mse_loss(const Mat& pred, const Mat& target) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols()) throw DimensionError("mse_loss: shape mismatch");
    if (pred.size() == 0) throw ValidationError("mse_loss: empty input");
    return (pred - target).squaredNorm() / static_cast<double>(pred.size());
}

Adam::Adam(double lr, double beta1, double beta2, double eps) : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    if (!(lr >= 0.0)) throw ValidationError("learning rate must be >= 0");
}

void Adam::update(const std::string& name, ad::Parameter& p) {
    if (t_ < 1) throw ValidationError("Adam::update before begin_step");
    auto [it, inserted] = state_.try_emplace(name);
    Moments& s = it->second;
    if (inserted) {
        s.m = Mat::Zero(p.value.rows(), p.value.cols());
        s.v = Mat::Zero(p.value.rows(), p.value.cols());
    }
    s.m = beta1_ * s.m + (1.0 - beta1_) * p.grad;
    s.v = beta2_ * s.v + (1.0 - beta2_) * p.grad.cwiseProduct(p.grad);
    const double c1 = 1.0 - std::pow(beta1_, t_);
    const double c2 = 1.0 - std::pow(beta2_, t_);
    p.value.array() -= lr_ * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + eps_);
}

void TrainConfig::validate() const {
    if (stage != 1 && stage != 2) throw ConfigError("stage must be 1 or 2");
    if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
    if (batch < 1) throw ConfigError("batch must be >= 1");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (max_steps < 0) throw ConfigError("max_steps must be >= 0");
    if (t_diff < 1) throw ConfigError("t_diff must be >= 1");
}

diffusion::NoiseSchedule TrainConfig::schedule() const { return diffusion::linear_beta_schedule(t_diff, beta_start, beta_end); }

std::string TrainLog::to_jsonl() const {
    std::string out;
    for (const auto& e : epochs) {
        nlohmann::json j{{"epoch", e.epoch}, {"loss", e.loss}, {"wall_ms", e.wall_ms}, {"checksum", e.checksum}};
        out += j.dump() + "\n";
    }
    return out;
}

namespace {

using Forward = std::function<ad::Var(ad::Tape&, const ad::Var& x_t, std::span<const int> steps,
                                      const mwnet::TextContext& ctx, const mwnet::SequenceBatch& seq,
                                      std::span<const std::size_t> members)>;

TrainLog run_training(bridge::McmModel& model, const std::vector<ToySample>& data, const Normalizer& norm,
                      const TrainConfig& cfg, const Forward& forward, const EpochCallback& on_epoch) {
    if (data.empty()) throw ValidationError("training data is empty");
    const int frames = data.front().motion.length();
    for (const auto& s : data) {
        if (s.motion.length() != frames) throw ValidationError("all training samples must have the same frame count");
        if (s.motion.frames.cols() != model.main.config().input_dim) throw DimensionError("sample width differs from model input");
    }
    const diffusion::NoiseSchedule sched = cfg.schedule();

    // Everything constant across epochs is prepared once.
    std::vector<Mat> x0(data.size());
    std::vector<std::vector<int>> ids(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        x0[i] = norm.apply(data[i].motion.frames);
        ids[i] = model.encoders.text.vocab().encode(data[i].caption);
    }

    NamedParams trainable;
    model.visit([&](const std::string& name, ad::Parameter& p) {
        if (p.trainable) trainable.emplace_back(name, &p);
    });

    Rng rng(cfg.seed);
    std::uniform_int_distribution<int> pick_t(0, sched.steps - 1);
    Adam adam(cfg.lr);
    TrainLog log;
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    const int dim = model.main.config().input_dim;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        if (cfg.max_steps > 0 && log.steps >= cfg.max_steps) break;
        const auto start = std::chrono::steady_clock::now();
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        int batches = 0;
        for (std::size_t b0 = 0; b0 < order.size(); b0 += static_cast<std::size_t>(cfg.batch)) {
            if (cfg.max_steps > 0 && log.steps >= cfg.max_steps) break;
            const std::size_t b1 = std::min(order.size(), b0 + static_cast<std::size_t>(cfg.batch));
            const std::span<const std::size_t> members(order.data() + b0, b1 - b0);
            const int bsz = static_cast<int>(members.size());

            std::vector<int> steps(members.size());
            std::vector<std::vector<int>> batch_ids;
            Mat target(bsz * frames, dim);
            Mat x_t(bsz * frames, dim);
            for (int b = 0; b < bsz; ++b) {
                const std::size_t idx = members[static_cast<std::size_t>(b)];
                steps[static_cast<std::size_t>(b)] = pick_t(rng);
                const Mat eps = diffusion::gaussian(frames, dim, rng);
                x_t.middleRows(b * frames, frames) = diffusion::q_sample(x0[idx], steps[static_cast<std::size_t>(b)], eps, sched);
                target.middleRows(b * frames, frames) = cfg.target == diffusion::PredictionTarget::kX0 ? x0[idx] : eps;
                batch_ids.push_back(ids[idx]);
            }

            ad::Tape tape;
            const mwnet::TextContext ctx = model.encoders.text.encode(tape, batch_ids);
            const mwnet::SequenceBatch seq{bsz, frames, {}};
            const ad::Var pred = forward(tape, tape.constant(std::move(x_t)), steps, ctx, seq, members);
            const ad::Var loss = ad::mse(pred, target);
            const double value = loss.value()(0, 0);
            if (!std::isfinite(value)) throw NumericError("non-finite training loss at epoch " + std::to_string(epoch));

            for (auto& [name, p] : trainable) p->zero_grad();
            tape.backward(loss);
            adam.begin_step();
            for (auto& [name, p] : trainable) adam.update(name, *p);

            loss_sum += value;
            ++batches;
            ++log.steps;
        }
        if (batches == 0) break;
        EpochRecord rec;
        rec.epoch = epoch;
        rec.loss = loss_sum / batches;
        rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        rec.checksum = bridge::checksum(model, "");
        log.epochs.push_back(rec);
        if (on_epoch) on_epoch(rec);
    }
    return log;
}

}  // namespace

TrainLog train_stage1(bridge::McmModel& model, const std::vector<ToySample>& data, const Normalizer& norm,
                      const TrainConfig& cfg, const EpochCallback& on_epoch) {
    cfg.validate();
    if (cfg.stage != 1 || model.stage() != 1) throw ValidationError("train_stage1 needs stage 1 in both config and model");
    const Forward fwd = [&model](ad::Tape& tape, const ad::Var& x_t, std::span<const int> steps,
                                 const mwnet::TextContext& ctx, const mwnet::SequenceBatch& seq,
                                 std::span<const std::size_t>) { return model.main.forward(tape, x_t, steps, ctx, seq); };
    return run_training(model, data, norm, cfg, fwd, on_epoch);
}

TrainLog train_stage2(bridge::McmModel& model, const std::vector<ToySample>& data, const Normalizer& norm,
                      const TrainConfig& cfg, const EpochCallback& on_epoch) {
    cfg.validate();
    if (cfg.stage != 2 || model.stage() != 2) throw ValidationError("train_stage2 needs stage 2 in both config and model");
    if (data.empty()) throw ValidationError("training data is empty");
    std::vector<Mat> signals(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (data[i].beats.empty()) throw ValidationError("stage 2 samples need control beat tracks");
        signals[i] = control_signal(model, data[i].beats, data[i].motion.length(), data[i].motion.fps);
    }
    const Forward fwd = [&model, &signals](ad::Tape& tape, const ad::Var& x_t, std::span<const int> steps,
                                           const mwnet::TextContext& ctx, const mwnet::SequenceBatch& seq,
                                           std::span<const std::size_t> members) {
        Mat sig(x_t.rows(), model.control_dim());
        for (std::size_t b = 0; b < members.size(); ++b) {
            sig.middleRows(static_cast<Eigen::Index>(b) * seq.frames, seq.frames) = signals[members[b]];
        }
        return model.forward(tape, x_t, steps, ctx, tape.constant(std::move(sig)), seq);
    };
    return run_training(model, data, norm, cfg, fwd, on_epoch);
}

Mat control_signal(const bridge::McmModel& model, const metrics::BeatTrack& beats, int frames, double fps) {
    beats.validate();
    const Mat music = cond::beat_features(beats.times, frames, fps, model.encoders.audio.config().bands);
    return cond::fuse_audio(std::nullopt, music, model.encoders.audio, frames);
}

motion::MotionSequence generate(const bridge::McmModel& model, const Normalizer& norm,
                                const diffusion::NoiseSchedule& sched, const std::vector<std::string>& caption,
                                const GenerateOptions& opts) {
    if (opts.frames < 1) throw ValidationError("frames must be >= 1");
    if (opts.beats && model.stage() != 2) throw ValidationError("control beats need a stage-2 model");
    const cond::TextEncoding te = cond::encode_text(caption, model.encoders.text);
    ConditionBundle bundle;
    bundle.text_seq = te.text_seq;
    bundle.text_global = te.text_global;
    const double fps = motion::kCanonicalFps;

    diffusion::DenoiseFn fn;
    Mat sig;
    if (opts.beats) {
        sig = control_signal(model, *opts.beats, opts.frames, fps);
        bundle.has_music = true;
        fn = [&](const Mat& x, int t) { return bridge::mcm_forward(x, t, bundle, sig, model); };
    } else {
        fn = [&](const Mat& x, int t) { return mwnet::mwnet_forward(x, t, bundle, model.main); };
    }
    Rng rng(opts.seed);
    const Mat x = diffusion::sample_loop(fn, opts.frames, model.main.config().input_dim, sched, rng, opts.target);
    motion::MotionSequence out;
    out.frames = norm.invert(x);
    out.fps = fps;
    out.label = std::accumulate(caption.begin(), caption.end(), std::string(),
                                [](std::string a, const std::string& w) { return a.empty() ? w : a + " " + w; });
    return out;
}

GradCheckResult grad_check(const NamedParams& params, const Objective& objective, double h) {
    if (!(h > 0.0)) throw ValidationError("finite-difference step must be > 0");
    for (auto& [name, p] : params) p->zero_grad();
    {
        ad::Tape tape;
        const ad::Var f = objective(tape);
        if (f.rows() != 1 || f.cols() != 1) throw DimensionError("grad_check objective must be a scalar");
        tape.backward(f);
    }
    auto eval = [&objective] {
        ad::Tape tape(false);
        return objective(tape).value()(0, 0);
    };

    GradCheckResult res;
    for (auto& [name, p] : params) {
        const Mat analytic = p->grad;
        Mat numeric(p->value.rows(), p->value.cols());
        for (Eigen::Index i = 0; i < p->value.size(); ++i) {
            const double orig = p->value.data()[i];
            p->value.data()[i] = orig + h;
            const double fp = eval();
            p->value.data()[i] = orig - h;
            const double fm = eval();
            p->value.data()[i] = orig;
            numeric.data()[i] = (fp - fm) / (2.0 * h);
        }
        const double denom = analytic.norm() + numeric.norm();
        const double err = denom < 1e-12 ? 0.0 : (analytic - numeric).norm() / denom;
        res.per_tensor.emplace_back(name, err);
        if (err >= res.max_rel_error) {
            res.max_rel_error = err;
            res.worst = name;
        }
    }
    return res;
}

GradCheckScope parse_grad_check_scope(const std::string& name) {
    if (name == "model" || name == "all") return GradCheckScope::kModel;
    if (name == "block") return GradCheckScope::kBlock;
    if (name == "film") return GradCheckScope::kFilm;
    if (name == "time_sa") return GradCheckScope::kTimeSa;
    if (name == "channel_sa") return GradCheckScope::kChannelSa;
    if (name == "cross") return GradCheckScope::kCross;
    if (name == "ffn") return GradCheckScope::kFfn;
    throw ValidationError("unknown gradcheck block \"" + name +
                          "\" (model, block, film, time_sa, channel_sa, cross, ffn)");
}

GradCheckResult grad_check_model(GradCheckScope scope, mwnet::BlockLayout layout, std::uint64_t seed, double h) {
    constexpr int kWidth = 8;
    constexpr int kFrames = 4;
    constexpr int kTokens = 2;
    mwnet::MwNetConfig cfg;
    cfg.width = kWidth;
    cfg.time_dim = kWidth;
    cfg.blocks = 1;
    cfg.heads = 2;
    cfg.groups = 2;
    cfg.max_len = 16;
    cfg.layout = layout;

    Rng rng(seed);
    mwnet::MwNetModel model(cfg, rng);
    // Perturb the FiLM and layer-norm parameters away from their structured
    // initial values so every path carries a generic gradient.
    model.visit("", [&rng](const std::string&, ad::Parameter& p) {
        p.value += 0.1 * diffusion::gaussian(p.value.rows(), p.value.cols(), rng);
    });
    const Mat x_in = diffusion::gaussian(kFrames, cfg.input_dim, rng);
    const Mat hidden = diffusion::gaussian(kFrames, kWidth, rng);
    const Mat temb = diffusion::gaussian(1, kWidth, rng);
    const Mat text = diffusion::gaussian(kTokens, kWidth, rng);
    const Mat global = diffusion::gaussian(1, kWidth, rng);
    const int steps[1] = {7};
    const mwnet::SequenceBatch seq{1, kFrames, {}};

    auto context = [&](ad::Tape& tape) {
        return mwnet::TextContext{tape.constant(text), {0, kTokens}, tape.constant(global)};
    };

    NamedParams params;
    Objective objective;
    auto& block = model.blocks().front();
    const std::string bp = "block0";
    switch (scope) {
        case GradCheckScope::kModel:
            model.visit("", [&](const std::string& n, ad::Parameter& p) { params.emplace_back(n, &p); });
            objective = [&](ad::Tape& tape) {
                return ad::half_sum_squares(model.forward(tape, tape.constant(x_in), steps, context(tape), seq));
            };
            break;
        case GradCheckScope::kBlock:
            mwnet::MultiWiseBlock::visit(block, bp, [&](const std::string& n, ad::Parameter& p) { params.emplace_back(n, &p); });
            objective = [&](ad::Tape& tape) {
                return ad::half_sum_squares(mwnet::block_forward(tape, tape.constant(hidden), tape.constant(temb),
                                                                 context(tape), block, layout, seq));
            };
            break;
        case GradCheckScope::kFilm:
            mwnet::FilmParams::visit(block.film[0], bp + ".film0", [&](const std::string& n, ad::Parameter& p) {
                params.emplace_back(n, &p);
            });
            objective = [&](ad::Tape& tape) {
                return ad::half_sum_squares(
                    mwnet::film(tape, tape.constant(hidden), tape.constant(temb), block.film[0], kFrames));
            };
            break;
        case GradCheckScope::kTimeSa:
            mwnet::AttentionParams::visit(block.time_sa, bp + ".time_sa", [&](const std::string& n, ad::Parameter& p) {
                params.emplace_back(n, &p);
            });
            objective = [&](ad::Tape& tape) {
                return ad::half_sum_squares(mwnet::time_wise_sa(tape, tape.constant(hidden), block.time_sa, seq));
            };
            break;
        case GradCheckScope::kChannelSa:
            mwnet::AttentionParams::visit(block.channel_sa, bp + ".channel_sa",
                                          [&](const std::string& n, ad::Parameter& p) { params.emplace_back(n, &p); });
            objective = [&](ad::Tape& tape) {
                return ad::half_sum_squares(mwnet::channel_wise_sa(tape, tape.constant(hidden), block.channel_sa, kFrames));
            };
            break;
        case GradCheckScope::kCross:
            mwnet::AttentionParams::visit(block.cross, bp + ".cross", [&](const std::string& n, ad::Parameter& p) {
                params.emplace_back(n, &p);
            });
            objective = [&](ad::Tape& tape) {
                return ad::half_sum_squares(
                    mwnet::cross_attention(tape, tape.constant(hidden), context(tape), block.cross, seq));
            };
            break;
        case GradCheckScope::kFfn:
            mwnet::FeedForward::visit(block.ffn, bp + ".ffn", [&](const std::string& n, ad::Parameter& p) {
                params.emplace_back(n, &p);
            });
            objective = [&](ad::Tape& tape) {
                return ad::half_sum_squares(mwnet::feed_forward(tape, tape.constant(hidden), block.ffn));
            };
            break;
    }
    return grad_check(params, objective, h);
}

}  // namespace mcm::train

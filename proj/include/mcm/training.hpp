#pragma once

// Toy dataset with known conditional structure, Adam, the two training stages,
// seeded generation and finite-difference gradient checks.

#include "mcm/mcm_bridge.hpp"
#include "mcm/metrics.hpp"
#include "mcm/motion_repr.hpp"
#include "mcm/schedule.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mcm::train {

using Rng = std::mt19937_64;

// --- toy data ---------------------------------------------------------------

inline constexpr double kSlowHz = 0.5;
inline constexpr double kFastHz = 2.0;
inline constexpr double kBeatPeriod = 1.0;  // seconds between control beats

struct ToyMeta {
    bool arm = true;         // "arm" vs "leg"
    bool fast = false;       // "fast" vs "slow"
    double frequency = 0.0;  // Hz
    double phase = 0.0;      // radians
    double amplitude = 1.0;  // multiplier on the base amplitudes
};

struct ToySample {
    motion::MotionSequence motion;
    std::vector<std::string> caption;  // tokens, without EOS
    metrics::BeatTrack beats;          // empty unless built with control
    ToyMeta meta;
};

/// The fixed word list of the toy captions.
std::vector<std::string> toy_words();
std::string toy_caption(bool arm, bool fast);

/// Root-space rest pose of the 21 non-root joints (21 x 3).
Mat rest_pose();

/// Channel of the packed vector whose oscillation carries the frequency (wrist z or ankle z).
int active_channel(bool arm);

/// Builds one sample with the given parameters; `beats` only affects the stored track.
ToySample make_toy_sample(const ToyMeta& meta, int frames, const metrics::BeatTrack& beats = {});

/// n samples cycling through (arm, leg) x (slow, fast). With `with_control` each
/// sample gets a 1 s beat track and its speed minima are phase-locked to it.
std::vector<ToySample> make_toy_dataset(int n, int frames, std::uint64_t seed, bool with_control = false);

/// Sign changes of the mean-centred channel.
int zero_crossings(const Mat& frames, int channel);
/// Oscillation frequency (Hz) from linearly interpolated crossing times; 0 if fewer than 2 crossings.
double crossing_frequency(const Mat& frames, int channel, double fps);

// --- normalization ------------------------------------------------------------

/// Per-channel standardization fitted on the training frames. Channels with
/// (near) zero spread keep unit scale so they only get centred.
struct Normalizer {
    Vec mean;
    Vec std;

    static Normalizer identity(int dim);
    static Normalizer fit(const std::vector<ToySample>& data);

    Mat apply(const Mat& frames) const;
    Mat invert(const Mat& frames) const;
};

// --- optimization ---------------------------------------------------------------

/// Mean squared error over all entries.
double mse_loss(const Mat& pred, const Mat& target);

/// Adam with first/second moments keyed by parameter name.
class Adam {
public:
    explicit Adam(double lr = 2e-4, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    /// Advances the step counter; call once per optimizer step before `update`.
    void begin_step() { ++t_; }
    void update(const std::string& name, ad::Parameter& p);
    int steps() const { return t_; }

private:
    struct Moments {
        Mat m;
        Mat v;
    };
    double lr_, beta1_, beta2_, eps_;
    int t_ = 0;
    std::map<std::string, Moments> state_;
};

struct TrainConfig {
    int stage = 1;
    double lr = 2e-4;
    int batch = 16;
    int epochs = 400;
    int max_steps = 0;  // 0: no cap
    diffusion::PredictionTarget target = diffusion::PredictionTarget::kX0;
    std::uint64_t seed = 0;
    int t_diff = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;

    void validate() const;
    diffusion::NoiseSchedule schedule() const;
};

struct EpochRecord {
    int epoch = 0;
    double loss = 0.0;
    double wall_ms = 0.0;
    std::uint64_t checksum = 0;
};

struct TrainLog {
    std::vector<EpochRecord> epochs;
    int steps = 0;

    std::string to_jsonl() const;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Stage 1: main branch and text encoder on (text, motion) pairs.
TrainLog train_stage1(bridge::McmModel& model, const std::vector<ToySample>& data, const Normalizer& norm,
                      const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// Stage 2: control branch, bridges and control input only; samples must carry beat tracks.
TrainLog train_stage2(bridge::McmModel& model, const std::vector<ToySample>& data, const Normalizer& norm,
                      const TrainConfig& cfg, const EpochCallback& on_epoch = {});

// --- generation --------------------------------------------------------------------

/// T x d_c control features for a beat track (music branch from a click track, vocal absent).
Mat control_signal(const bridge::McmModel& model, const metrics::BeatTrack& beats, int frames, double fps);

struct GenerateOptions {
    int frames = 40;
    std::uint64_t seed = 0;
    diffusion::PredictionTarget target = diffusion::PredictionTarget::kX0;
    std::optional<metrics::BeatTrack> beats;  // control path when set
};

/// Runs the reverse chain and returns a de-normalized motion at 20 fps.
motion::MotionSequence generate(const bridge::McmModel& model, const Normalizer& norm,
                                const diffusion::NoiseSchedule& sched, const std::vector<std::string>& caption,
                                const GenerateOptions& opts);

// --- gradient checks ------------------------------------------------------------------

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst;
    std::vector<std::pair<std::string, double>> per_tensor;
};

using NamedParams = std::vector<std::pair<std::string, ad::Parameter*>>;
/// Builds the scalar objective on `tape` from the current parameter values.
using Objective = std::function<ad::Var(ad::Tape& tape)>;

/// Central differences (f(p+h) - f(p-h)) / 2h against the tape gradient, per tensor
/// error |a - n| / (|a| + |n|) in the Frobenius norm (0 when both vanish).
GradCheckResult grad_check(const NamedParams& params, const Objective& objective, double h = 1e-5);

/// Sub-layer selection for the standard model check.
enum class GradCheckScope { kModel, kBlock, kFilm, kTimeSa, kChannelSa, kCross, kFfn };
GradCheckScope parse_grad_check_scope(const std::string& name);

/// 1-block MWNet (d = d_t = 8, T = 4, text length 2, 2 heads, 2 groups), objective ||forward||^2 / 2.
GradCheckResult grad_check_model(GradCheckScope scope, mwnet::BlockLayout layout, std::uint64_t seed,
                                 double h = 1e-5);

}  // namespace mcm::train

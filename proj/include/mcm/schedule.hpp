#pragma once

// DDPM noise schedule, closed-form forward noising and the reverse posterior step.

#include "mcm/types.hpp"

#include <functional>
#include <optional>
#include <random>
#include <string>

namespace mcm::diffusion {

enum class PredictionTarget { kX0, kEps };

std::string to_string(PredictionTarget target);
PredictionTarget parse_target(const std::string& name);

struct NoiseSchedule {
    int steps = 0;
    Vec betas;
    Vec alphas;
    Vec alpha_bars;

    double alpha_bar_prev(int t) const { return t == 0 ? 1.0 : alpha_bars[t - 1]; }
};

NoiseSchedule linear_beta_schedule(int steps = 1000, double beta_start = 1e-4, double beta_end = 0.02);

/// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps
Mat q_sample(const Mat& x0, int t, const Mat& eps, const NoiseSchedule& sched);

struct Prediction {
    Mat x0;
    Mat eps;
};

Prediction convert_prediction(const Mat& pred, const Mat& x_t, int t, PredictionTarget mode,
                              const NoiseSchedule& sched);

/// Network evaluation at (x_t, t); returns its raw prediction.
using DenoiseFn = std::function<Mat(const Mat& x_t, int t)>;

using Rng = std::mt19937_64;

Mat gaussian(Eigen::Index rows, Eigen::Index cols, Rng& rng);

/// One reverse step using the posterior mean and variance beta_tilde.
/// Passing a null `rng` drops the noise term (deterministic chain).
Mat p_sample_step(const DenoiseFn& model, const Mat& x_t, int t, const NoiseSchedule& sched, Rng* rng,
                  PredictionTarget mode);

/// Optional classifier-free style hook: combines conditional and unconditional predictions.
struct Guidance {
    DenoiseFn unconditional;
    double scale = 1.0;
};

struct SampleOptions {
    std::optional<Guidance> guidance;
    bool stochastic = true;  // false: posterior means only after the initial noise draw
};

/// Full reverse chain from N(0, I) noise of shape frames x dim.
Mat sample_loop(const DenoiseFn& model, int frames, int dim, const NoiseSchedule& sched, Rng& rng,
                PredictionTarget mode, const SampleOptions& options = {});

}  // namespace mcm::diffusion

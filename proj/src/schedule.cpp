#include "mcm/schedule.hpp"

#include "mcm/error.hpp"

#include <cmath>

namespace mcm::diffusion {

std::string to_string(PredictionTarget target) { return target == PredictionTarget::kX0 ? "x0" : "eps"; }

PredictionTarget parse_target(const std::string& name) {
    if (name == "x0") return PredictionTarget::kX0;
    if (name == "eps") return PredictionTarget::kEps;
    throw ValidationError("prediction target must be \"x0\" or \"eps\", got \"" + name + "\"");
}

NoiseSchedule linear_beta_schedule(int steps, double beta_start, double beta_end) {
    if (steps < 1) throw ValidationError("diffusion steps must be >= 1");
    if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0)) {
        throw ValidationError("beta bounds must satisfy 0 < start <= end < 1");
    }
    NoiseSchedule s;
    s.steps = steps;
    s.betas.resize(steps);
    for (int t = 0; t < steps; ++t) {
        s.betas[t] = steps == 1 ? beta_start
                                : beta_start + (beta_end - beta_start) * static_cast<double>(t) / (steps - 1);
    }
    s.alphas = (1.0 - s.betas.array()).matrix();
    s.alpha_bars.resize(steps);
    double running = 1.0;
    for (int t = 0; t < steps; ++t) {
        running *= s.alphas[t];
        s.alpha_bars[t] = running;
    }
    return s;
}

namespace {

void check_step(int t, const NoiseSchedule& sched) {
    if (t < 0 || t >= sched.steps) {
        throw IndexError("timestep " + std::to_string(t) + " outside [0, " + std::to_string(sched.steps) + ")");
    }
}

}  // namespace

Mat q_sample(const Mat& x0, int t, const Mat& eps, const NoiseSchedule& sched) {
    check_step(t, sched);
    if (x0.rows() != eps.rows() || x0.cols() != eps.cols()) throw DimensionError("q_sample: eps shape differs from x0");
    const double ab = sched.alpha_bars[t];
    return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
}

Prediction convert_prediction(const Mat& pred, const Mat& x_t, int t, PredictionTarget mode,
                              const NoiseSchedule& sched) {
    check_step(t, sched);
    const double ab = sched.alpha_bars[t];
    if (ab >= 1.0) throw NumericError("alpha_bar == 1: prediction conversion is singular");
    const double sa = std::sqrt(ab);
    const double sn = std::sqrt(1.0 - ab);
    if (mode == PredictionTarget::kX0) return {pred, (x_t - sa * pred) / sn};
    return {(x_t - sn * pred) / sa, pred};
}

Mat gaussian(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    std::normal_distribution<double> n01(0.0, 1.0);
    Mat m(rows, cols);
    // Fill row-major so the draw order does not depend on Eigen's storage order.
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = n01(rng);
    }
    return m;
}

Mat p_sample_step(const DenoiseFn& model, const Mat& x_t, int t, const NoiseSchedule& sched, Rng* rng,
                  PredictionTarget mode) {
    check_step(t, sched);
    const Prediction p = convert_prediction(model(x_t, t), x_t, t, mode, sched);
    if (t == 0) return p.x0;

    const double beta = sched.betas[t];
    const double ab = sched.alpha_bars[t];
    const double ab_prev = sched.alpha_bar_prev(t);
    const double coef_x0 = std::sqrt(ab_prev) * beta / (1.0 - ab);
    const double coef_xt = std::sqrt(sched.alphas[t]) * (1.0 - ab_prev) / (1.0 - ab);
    Mat mean = coef_x0 * p.x0 + coef_xt * x_t;
    if (rng == nullptr) return mean;
    const double var = (1.0 - ab_prev) / (1.0 - ab) * beta;
    return mean + std::sqrt(var) * gaussian(x_t.rows(), x_t.cols(), *rng);
}

Mat sample_loop(const DenoiseFn& model, int frames, int dim, const NoiseSchedule& sched, Rng& rng,
                PredictionTarget mode, const SampleOptions& options) {
    if (frames < 1) throw ValidationError("sample_loop: frames must be >= 1");
    DenoiseFn fn = model;
    if (options.guidance && options.guidance->scale != 1.0) {
        fn = [&model, g = *options.guidance](const Mat& x, int t) {
            Mat uncond = g.unconditional(x, t);
            return Mat(uncond + g.scale * (model(x, t) - uncond));
        };
    }
    Mat x = gaussian(frames, dim, rng);
    for (int t = sched.steps - 1; t >= 0; --t) {
        x = p_sample_step(fn, x, t, sched, options.stochastic ? &rng : nullptr, mode);
        if (!x.allFinite()) throw NumericError("non-finite values in reverse chain at step " + std::to_string(t));
    }
    return x;
}

}  // namespace mcm::diffusion

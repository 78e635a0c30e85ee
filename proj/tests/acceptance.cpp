// End-to-end acceptance checks. One PASS/FAIL line per criterion; exit status 1 if any fails.

#include "mcm/mcm_bridge.hpp"
#include "mcm/metrics.hpp"
#include "mcm/motion_repr.hpp"
#include "mcm/run_config.hpp"
#include "mcm/schedule.hpp"
#include "mcm/tensor_io.hpp"
#include "mcm/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

using namespace mcm;
namespace fs = std::filesystem;

namespace {

struct Timer {
    std::chrono::steady_clock::time_point wall = std::chrono::steady_clock::now();
    std::clock_t cpu = std::clock();
    double wall_s() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - wall).count(); }
    double cpu_s() const { return static_cast<double>(std::clock() - cpu) / CLOCKS_PER_SEC; }
};

int failures = 0;

void report(int id, bool pass, const Timer& timer, const std::string& detail) {
    if (!pass) ++failures;
    std::printf("criterion %2d: %s  (%.1f s wall, %.1f s cpu)  %s\n", id, pass ? "PASS" : "FAIL", timer.wall_s(), timer.cpu_s(),
                detail.c_str());
    std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

Mat randn(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Mat m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
    return m;
}

// The toy-scale run: d = 64, 2 blocks, T_diff = 50, x0 target. beta_end is scaled with the
// step count so the 50-step chain ends at the same noise level as 1000 steps of 0.02.
config::RunConfig toy_config() {
    config::RunConfig c;
    c.model.init_seed = 3;
    c.schedule.t_diff = 50;
    c.schedule.beta_end = 0.4;
    c.train.seed = 11;
    c.data.seed = 7;
    c.validate();
    return c;
}

void criterion1() {
    const Timer timer;
    const bridge::McmModel m = config::build_model(config::parse_run_config(config::Json::object()));
    std::mt19937_64 rng(101);
    double worst = 0.0;
    for (int k = 0; k < 20; ++k) {
        const int frames = 8 + k;
        const int t = static_cast<int>(rng() % 1000);
        ConditionBundle cb;
        cb.text_seq = randn(1 + k % 5, 64, rng);
        cb.text_global = cb.text_seq.row(cb.text_seq.rows() - 1).transpose();
        const Mat x = randn(frames, motion::kFrameDim, rng);
        const Mat sig = randn(frames, m.control_dim(), rng);
        const Mat a = bridge::mcm_forward(x, t, cb, sig, m);
        const Mat b = mwnet::mwnet_forward(x, t, cb, m.main);
        worst = std::max(worst, (a - b).cwiseAbs().maxCoeff());
    }
    report(1, worst == 0.0 && timer.wall_s() < 5.0, timer, fmt("max |mcm - main| = %g over 20 inputs", worst));
}

void criterion3() {
    const Timer timer;
    double worst = 0.0;
    std::string where;
    for (auto layout : {mwnet::BlockLayout::kChannelFirst, mwnet::BlockLayout::kChannelPost}) {
        const auto r = train::grad_check_model(train::GradCheckScope::kModel, layout, 1, 1e-5);
        if (r.max_rel_error >= worst) {
            worst = r.max_rel_error;
            where = r.worst;
        }
    }
    report(3, worst < 1e-4 && timer.wall_s() < 60.0, timer,
           fmt("max relative error %.3g", worst) + " (" + where + "), both layouts");
}

void criterion4() {
    const Timer timer;
    const auto sched = diffusion::linear_beta_schedule(50);
    std::mt19937_64 rng(4);
    const Mat x0 = randn(16, motion::kFrameDim, rng);
    const diffusion::DenoiseFn oracle = [&](const Mat&, int) { return x0; };
    diffusion::SampleOptions opts;
    opts.stochastic = false;
    const Mat out = diffusion::sample_loop(oracle, 16, motion::kFrameDim, sched, rng, diffusion::PredictionTarget::kX0, opts);
    const double err = (out - x0).cwiseAbs().maxCoeff();
    report(4, err < 1e-5, timer, fmt("max |x_hat - x0| = %.3g", err));
}

void criterion5() {
    const Timer timer;
    bool ok = true;
    std::string detail;

    metrics::GaussianStats a{Vec::Zero(4), Mat::Identity(4, 4), 0};
    metrics::GaussianStats b{Vec(4), Mat::Identity(4, 4), 0};
    b.mean << 1.0, -2.0, 0.5, 3.0;
    const double fid_mu = metrics::frechet_distance(a, b);
    ok &= std::abs(fid_mu - b.mean.squaredNorm()) < 1e-6;
    detail += fmt("fid(mu) err %.2g", std::abs(fid_mu - b.mean.squaredNorm()));

    const metrics::GaussianStats v1{Vec::Zero(1), Mat::Constant(1, 1, 1.0), 0};
    const metrics::GaussianStats v4{Vec::Zero(1), Mat::Constant(1, 1, 4.0), 0};
    const double fid_var = metrics::frechet_distance(v1, v4);
    ok &= std::abs(fid_var - 1.0) < 1e-8;
    detail += fmt(", fid(1,4) err %.2g", std::abs(fid_var - 1.0));

    const double bas1 = metrics::beat_align_score({{1.0}}, {{4.0}}, 3.0);
    const double bas2 = metrics::beat_align_score({{1.0, 2.0}}, {{1.0, 3.0, 10.0}}, 3.0);
    const double e1 = std::abs(bas1 - std::exp(-0.5));
    const double e2 = std::abs(bas2 - (1.0 + std::exp(-1.0 / 18.0)) / 2.0);
    ok &= e1 < 1e-9 && e2 < 1e-9;
    detail += fmt(", bas err %.2g", std::max(e1, e2));

    std::mt19937_64 rng(5);
    const Mat f = randn(30, 12, rng);
    double exact = 0.0;
    for (int i = 0; i < 30; ++i) {
        for (int j = i + 1; j < 30; ++j) exact += (f.row(i) - f.row(j)).norm();
    }
    exact /= 30.0 * 29.0 / 2.0;
    const double sampled = metrics::diversity(f, 100000, rng);
    const double rel = std::abs(sampled / exact - 1.0);
    ok &= rel < 0.02;
    detail += fmt(", diversity sampled/exhaustive off by %.3g", rel);
    report(5, ok, timer, detail);
}

void criterion6() {
    const Timer timer;
    std::mt19937_64 rng(6);
    int mismatched = 0;
    for (int k = 0; k < 1000; ++k) {
        const Vec v = randn(motion::kFrameDim, 1, rng);
        const Vec back = motion::pack_frame(motion::unpack_frame(v));
        if (std::memcmp(v.data(), back.data(), sizeof(double) * v.size()) != 0) ++mismatched;
    }

    motion::MotionSequence straight;
    straight.frames = Mat::Zero(5, motion::kFrameDim);
    straight.frames.col(motion::kRootLinVelOffset).setConstant(0.1);
    const auto rs = motion::integrate_root(straight);
    double err = 0.0;
    for (int t = 0; t < 5; ++t) err = std::max({err, std::abs(rs.positions(t, 0) - 0.1 * t), std::abs(rs.positions(t, 2))});

    motion::MotionSequence square;
    square.frames = Mat::Zero(5, motion::kFrameDim);
    square.frames.col(motion::kRootAngVelOffset).setConstant(std::acos(-1.0) / 2.0);
    square.frames.col(motion::kRootLinVelOffset).setConstant(1.0);
    const auto rq = motion::integrate_root(square);
    // Unit steps along +x, then three quarter turns close the square.
    const double want[5][2] = {{0, 0}, {1, 0}, {1, -1}, {0, -1}, {0, 0}};
    double sq_err = 0.0;
    for (int t = 0; t < 5; ++t) {
        sq_err = std::max({sq_err, std::abs(std::abs(rq.positions(t, 0)) - std::abs(want[t][0])),
                           std::abs(std::abs(rq.positions(t, 2)) - std::abs(want[t][1]))});
    }
    sq_err = std::max(sq_err, std::hypot(rq.positions(4, 0), rq.positions(4, 2)));

    const fs::path dir = fs::temp_directory_path() / "mcm_acceptance_io";
    fs::remove_all(dir);
    motion::MotionSequence seq;
    seq.frames = randn(12, motion::kFrameDim, rng).cast<float>().cast<double>();
    seq.label = "round trip";
    io::write_motion(dir / "a.mcmv", seq);
    io::write_motion(dir / "b.mcmv", io::read_motion(dir / "a.mcmv"));
    const bool same_bytes = io::read_file(dir / "a.mcmv") == io::read_file(dir / "b.mcmv");
    fs::remove_all(dir);

    report(6, mismatched == 0 && err < 1e-9 && sq_err < 1e-9 && same_bytes, timer,
           std::to_string(mismatched) + "/1000 pack mismatches" + fmt(", straight err %.2g", err) +
               fmt(", square err %.2g", sq_err) + (same_bytes ? ", file bytes identical" : ", file bytes differ"));
}

struct Stage1Result {
    bridge::McmModel model;
    train::Normalizer norm;
};

Stage1Result criterion7(const config::RunConfig& cfg) {
    const Timer timer;
    const auto data = train::make_toy_dataset(cfg.data.n, cfg.data.frames, cfg.data.seed);
    Stage1Result r{config::build_model(cfg), train::Normalizer::fit(data)};
    const train::TrainLog log = train::train_stage1(r.model, data, r.norm, cfg.train_config(1));
    const double first = log.epochs.front().loss;
    const double last = log.epochs.back().loss;

    const auto sched = cfg.train_config(1).schedule();
    int pass = 0;
    std::string counts;
    for (int seed = 0; seed < 10; ++seed) {
        const bool arm = seed % 2 == 0;
        int zc[2];
        for (int fast = 0; fast < 2; ++fast) {
            train::GenerateOptions o;
            o.frames = cfg.data.frames;
            o.seed = 100 + static_cast<std::uint64_t>(seed);
            const auto g = train::generate(r.model, r.norm, sched, cond::tokenize(train::toy_caption(arm, fast == 1)), o);
            zc[fast] = train::zero_crossings(g.frames, train::active_channel(arm));
        }
        pass += zc[1] >= 2 * zc[0] && zc[1] > 0;
        counts += " " + std::to_string(zc[0]) + "/" + std::to_string(zc[1]);
    }
    const double ratio = last / first;
    report(7, ratio < 0.25 && pass >= 8 && timer.cpu_s() < 600.0, timer,
           fmt("loss %.4f", first) + fmt(" -> %.4f", last) + fmt(" (%.1f%%)", 100 * ratio) + ", fast>=2x slow in " +
               std::to_string(pass) + "/10 (slow/fast crossings:" + counts + ")");
    return r;
}

std::vector<train::ToySample> control_data(const config::RunConfig& cfg) {
    return train::make_toy_dataset(cfg.data.n, cfg.data.frames, cfg.data.seed, true);
}

void criterion2(const config::RunConfig& cfg, const Stage1Result& s1) {
    const Timer timer;
    bridge::McmModel m = s1.model;
    const std::uint64_t before = bridge::checksum(m, "main");
    bridge::set_stage(m, 2);
    train::TrainConfig tc = cfg.train_config(2);
    tc.max_steps = 200;
    const auto log = train::train_stage2(m, control_data(cfg), s1.norm, tc);
    double bridge_max = 0.0;
    for (const auto& b : m.bridges) {
        bridge_max = std::max({bridge_max, b.weight.value.cwiseAbs().maxCoeff(), b.bias.value.cwiseAbs().maxCoeff()});
    }
    const std::uint64_t after = bridge::checksum(m, "main");
    report(2, log.steps == 200 && before == after && bridge_max > 1e-6, timer,
           std::to_string(log.steps) + " steps, main checksum " + (before == after ? "unchanged" : "CHANGED") +
               fmt(", max |bridge| = %.3g", bridge_max));
}

void criterion8(const config::RunConfig& cfg, const Stage1Result& s1) {
    const Timer timer;
    bridge::McmModel m = s1.model;
    bridge::set_stage(m, 2);
    train::train_stage2(m, control_data(cfg), s1.norm, cfg.train_config(2));

    // Held-out beat tracks and captions.
    const auto eval = train::make_toy_dataset(10, cfg.data.frames, 1000 + cfg.data.seed, true);
    const auto sched = cfg.train_config(2).schedule();
    const double frame_sigma = cfg.metrics.sigma / motion::kCanonicalFps;
    // Gate: configured sigma (seconds) and smoothing. Diagnostics: sigma of 3 frames, with the
    // configured smoothing and without it (a 5-frame box spans one speed period of the fast motion).
    struct Variant {
        double sigma;
        int window;
        double stage1 = 0.0;
        double stage2 = 0.0;
    };
    std::vector<Variant> variants{{cfg.metrics.sigma, cfg.metrics.smooth_window},
                                  {frame_sigma, cfg.metrics.smooth_window},
                                  {frame_sigma, 1}};
    auto score = [](const motion::MotionSequence& g, const metrics::BeatTrack& music, const Variant& v) {
        const auto dance = metrics::kinematic_beats(motion::joints_world(g), g.fps, v.window);
        return dance.empty() ? 0.0 : metrics::beat_align_score(music, dance, v.sigma);
    };
    for (int seed = 0; seed < 10; ++seed) {
        const auto& s = eval[static_cast<std::size_t>(seed)];
        train::GenerateOptions o;
        o.frames = cfg.data.frames;
        o.seed = 200 + static_cast<std::uint64_t>(seed);
        const auto g1 = train::generate(s1.model, s1.norm, sched, s.caption, o);
        o.beats = s.beats;
        const auto g2 = train::generate(m, s1.norm, sched, s.caption, o);
        for (Variant& v : variants) {
            v.stage1 += score(g1, s.beats, v) / 10.0;
            v.stage2 += score(g2, s.beats, v) / 10.0;
        }
    }
    const Variant& gate = variants[0];
    report(8, gate.stage2 - gate.stage1 >= 0.05 && timer.cpu_s() < 600.0, timer,
           fmt("BAS(sigma=%.0f s)", gate.sigma) + fmt(" stage1 %.4f", gate.stage1) + fmt(" stage2 %.4f", gate.stage2) +
               fmt(" gain %+.4f (need +0.05)", gate.stage2 - gate.stage1));
    for (std::size_t i = 1; i < variants.size(); ++i) {
        const Variant& v = variants[i];
        std::printf("              diagnostic, not gating: sigma %.2f s, window %d: stage1 %.4f stage2 %.4f gain %+.4f\n",
                    v.sigma, v.window, v.stage1, v.stage2, v.stage2 - v.stage1);
    }
}

void criterion9() {
    const Timer timer;
    std::vector<Mat> outs;
    bool ok = true;
    for (auto layout : {mwnet::BlockLayout::kChannelFirst, mwnet::BlockLayout::kChannelPost}) {
        config::RunConfig cfg;
        cfg.model.net.width = 32;
        cfg.model.net.time_dim = 32;
        cfg.model.net.layout = layout;
        cfg.schedule.t_diff = 20;
        cfg.schedule.beta_end = 0.4;
        cfg.train.epochs_stage1 = 3;
        cfg.train.epochs_stage2 = 1;
        cfg.validate();
        try {
            const auto data = train::make_toy_dataset(32, 24, 1, true);
            bridge::McmModel m = config::build_model(cfg);
            const auto norm = train::Normalizer::fit(data);
            train::train_stage1(m, data, norm, cfg.train_config(1));
            bridge::set_stage(m, 2);
            train::train_stage2(m, data, norm, cfg.train_config(2));
            train::GenerateOptions o;
            o.frames = 24;
            o.seed = 9;
            o.beats = data[0].beats;
            outs.push_back(train::generate(m, norm, cfg.train_config(1).schedule(), data[0].caption, o).frames);
        } catch (const std::exception& e) {
            std::printf("              %s\n", e.what());
            ok = false;
        }
    }
    const double diff = outs.size() == 2 ? (outs[0] - outs[1]).cwiseAbs().maxCoeff() : 0.0;
    report(9, ok && diff > 0.0, timer, fmt("channel_first vs channel_post max |diff| = %.3g", diff));
}

void criterion10() {
    const Timer timer;
    std::mt19937_64 rng(10);
    const Mat f = randn(3200, 16, rng);
    const double same = metrics::r_precision(f, f, 1, rng).score;
    const auto chance = metrics::r_precision(randn(3200, 16, rng), randn(3200, 16, rng), 1, rng);
    report(10, same == 1.0 && chance.score >= 0.01 && chance.score <= 0.06 && !chance.short_batch, timer,
           fmt("identical features %.3f", same) + fmt(", independent top-1 %.4f", chance.score));
}

}  // namespace

int main() {
    const Timer total;
    criterion1();
    criterion3();
    criterion4();
    criterion5();
    criterion6();
    criterion10();
    const config::RunConfig cfg = toy_config();
    const Stage1Result s1 = criterion7(cfg);
    criterion2(cfg, s1);
    criterion8(cfg, s1);
    criterion9();
    std::printf("%d of 10 criteria failed (%.0f s total)\n", failures, total.wall_s());
    return failures == 0 ? 0 : 1;
}

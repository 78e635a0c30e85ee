// mcm: data generation, two-stage training, sampling, evaluation and gradient checks.

#include "CLI11.hpp"

#include "mcm/checkpoint.hpp"
#include "mcm/conditioning.hpp"
#include "mcm/dataset_io.hpp"
#include "mcm/error.hpp"
#include "mcm/metrics.hpp"
#include "mcm/motion_repr.hpp"
#include "mcm/run_config.hpp"
#include "mcm/tensor_io.hpp"
#include "mcm/training.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;
using Json = nlohmann::json;
using namespace mcm;

namespace {

// Worker cap for the embarrassingly parallel parts of eval.
unsigned worker_count() {
    unsigned n = std::max(1U, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("MCM_THREADS")) {
        const long cap = std::strtol(env, nullptr, 10);
        if (cap >= 1) n = std::min(n, static_cast<unsigned>(cap));
    }
    return n;
}

config::RunConfig config_or_default(const std::string& path) {
    return path.empty() ? config::RunConfig{} : config::load_run_config(path);
}

std::vector<train::ToySample> load_training_data(const config::RunConfig& cfg) {
    if (!cfg.data.dir.empty()) return data::read_dataset(cfg.data.dir);
    return train::make_toy_dataset(cfg.data.n, cfg.data.frames, cfg.data.seed, cfg.data.with_control);
}

std::string hex(std::uint64_t v) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// --- gen-data ----------------------------------------------------------------

struct GenDataArgs {
    std::string out;
    int n = 8;
    int frames = 40;
    std::uint64_t seed = 0;
    bool with_control = false;
    bool force = false;
};

int cmd_gen_data(const GenDataArgs& a) {
    if (a.n < 1) throw ValidationError("--n must be >= 1");
    if (a.frames < 2) throw ValidationError("--frames must be >= 2");
    const auto samples = train::make_toy_dataset(a.n, a.frames, a.seed, a.with_control);
    data::write_dataset(a.out, samples, {a.n, a.frames, a.seed, a.with_control}, a.force);
    std::cout << "wrote " << a.n << " samples to " << a.out << "\n";
    return 0;
}

// --- train ---------------------------------------------------------------------

struct TrainArgs {
    std::string config;
    int stage = 1;
    std::string resume;
    std::string out;
    std::string log;
    int epochs = -1;
    int max_steps = -1;
    long long seed = -1;
    bool quiet = false;
};

int cmd_train(const TrainArgs& a) {
    config::RunConfig cfg = config::load_run_config(a.config);
    if (a.stage != 1 && a.stage != 2) throw ValidationError("--stage must be 1 or 2");
    if (a.stage == 2 && a.resume.empty()) throw ValidationError("stage 2 needs a stage-1 checkpoint (--resume)");
    if (a.epochs >= 0) (a.stage == 1 ? cfg.train.epochs_stage1 : cfg.train.epochs_stage2) = a.epochs;
    if (a.max_steps >= 0) cfg.train.max_steps = a.max_steps;
    if (a.seed >= 0) cfg.train.seed = static_cast<std::uint64_t>(a.seed);
    cfg.validate();

    bridge::McmModel model;
    train::Normalizer norm;
    const auto data = load_training_data(cfg);
    if (!a.resume.empty()) {
        ckpt::Checkpoint ck = ckpt::load_checkpoint(a.resume);
        std::cerr << "resumed " << a.resume << " (stage " << ck.model.stage() << ", checksum " << hex(ck.checksum) << ")\n";
        if (a.stage == 1 && ck.model.stage() != 1) throw ValidationError("cannot resume stage 1 from a stage-2 checkpoint");
        model = std::move(ck.model);
        norm = std::move(ck.norm);
    } else {
        model = config::build_model(cfg);
        norm = train::Normalizer::fit(data);
    }
    bridge::set_stage(model, a.stage);

    const train::TrainConfig tc = cfg.train_config(a.stage);
    auto progress = [&](const train::EpochRecord& e) {
        if (!a.quiet && (e.epoch == 1 || e.epoch % 10 == 0 || e.epoch == tc.epochs)) {
            std::cerr << "epoch " << e.epoch << " loss " << e.loss << " (" << static_cast<long>(e.wall_ms) << " ms)\n";
        }
    };
    const train::TrainLog log = a.stage == 1 ? train::train_stage1(model, data, norm, tc, progress)
                                             : train::train_stage2(model, data, norm, tc, progress);

    const Json extra{{"run_config", config::to_json(cfg)}};
    ckpt::save_checkpoint(a.out, model, norm, extra);
    const std::string log_path = a.log.empty() ? a.out + ".log.jsonl" : a.log;
    io::write_file_atomic(log_path, log.to_jsonl());
    const ckpt::Checkpoint saved = ckpt::load_checkpoint(a.out);
    std::cout << "stage " << a.stage << ": " << log.steps << " steps, " << log.epochs.size() << " epochs";
    if (!log.epochs.empty()) std::cout << ", final loss " << log.epochs.back().loss;
    std::cout << "\ncheckpoint " << a.out << " checksum " << hex(saved.checksum) << " main " << hex(bridge::checksum(saved.model, "main"))
              << "\nlog " << log_path << "\n";
    return 0;
}

// --- sample --------------------------------------------------------------------

struct SampleArgs {
    std::string ckpt;
    std::string caption;
    std::string beats;
    int frames = 40;
    std::uint64_t seed = 0;
    std::string out;
    std::string joints_json;
};

int cmd_sample(const SampleArgs& a) {
    if (a.frames < 1) throw ValidationError("--frames must be >= 1");
    const ckpt::Checkpoint ck = ckpt::load_checkpoint(a.ckpt);
    config::RunConfig cfg;
    if (ck.extra.contains("run_config")) cfg = config::parse_run_config(ck.extra.at("run_config"));

    train::GenerateOptions opts;
    opts.frames = a.frames;
    opts.seed = a.seed;
    opts.target = cfg.schedule.target;
    if (!a.beats.empty()) {
        if (ck.model.stage() != 2) {
            std::cerr << "warning: --beats ignored, checkpoint is not a stage-2 model\n";
        } else {
            metrics::BeatTrack track{io::read_beats(a.beats)};
            track.validate();
            opts.beats = track;
        }
    }
    const auto sched = diffusion::linear_beta_schedule(cfg.schedule.t_diff, cfg.schedule.beta_start, cfg.schedule.beta_end);
    const auto tokens = cond::tokenize(a.caption);
    const motion::MotionSequence seq = train::generate(ck.model, ck.norm, sched, tokens, opts);
    io::write_motion(a.out, seq);

    const JointPositions joints = motion::joints_world(seq);
    const auto beats = metrics::kinematic_beats(joints, seq.fps, cfg.metrics.smooth_window);
    std::cout << "frames " << seq.length() << " fps " << seq.fps << " kinematic_beats " << beats.times.size() << "\n";

    if (opts.beats) {
        // Bridge activations for the generated motion at t = 0.
        const cond::TextEncoding te = cond::encode_text(tokens, ck.model.encoders.text);
        ConditionBundle bundle{te.text_seq, te.text_global, std::nullopt, true, true, false};
        const Mat sig = train::control_signal(ck.model, *opts.beats, a.frames, seq.fps);
        const auto acts = bridge::bridge_activations(ck.norm.apply(seq.frames), 0, bundle, sig, ck.model);
        for (std::size_t k = 0; k < acts.size(); ++k) {
            const Mat& v = acts[k];
            std::cout << "bridge " << k << " rms " << std::sqrt(v.squaredNorm() / static_cast<double>(v.size())) << "\n";
        }
    }
    if (!a.joints_json.empty()) {
        Json j{{"fps", seq.fps}, {"joints", motion::kJoints}, {"frames", Json::array()}};
        for (int t = 0; t < joints.frames; ++t) {
            std::vector<double> row(joints.data.row(t).data(), joints.data.row(t).data() + joints.data.cols());
            j["frames"].push_back(row);
        }
        io::write_file_atomic(a.joints_json, j.dump());
    }
    return 0;
}

// --- eval ----------------------------------------------------------------------

struct EvalArgs {
    std::string pred;
    std::string ref;
    std::string metrics = "fid,div";
    std::string beats;
    std::string motion_features;
    std::string text_features;
    std::string mm_features;
    int mm_group_size = 0;
    std::string config;
    std::string out;
};

std::vector<fs::path> motion_files(const std::string& dir) {
    if (dir.empty()) throw ValidationError("directory not given");
    if (!fs::is_directory(dir)) throw IoError(dir + " is not a directory");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.path().extension() == ".mcmv") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw ValidationError("no .mcmv files in " + dir);
    return files;
}

struct MotionSet {
    std::vector<fs::path> files;
    std::vector<JointPositions> joints;
    Mat kinetic;  // one row per file
};

MotionSet load_motion_set(const std::string& dir) {
    MotionSet s;
    s.files = motion_files(dir);
    const std::size_t n = s.files.size();
    s.joints.resize(n);
    std::vector<metrics::KineticFeature> feats(n);
    std::vector<std::exception_ptr> errors(n);
    const unsigned workers = std::min<unsigned>(worker_count(), static_cast<unsigned>(n));
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < n; i += workers) {
                try {
                    const auto seq = io::read_motion(s.files[i]);
                    s.joints[i] = motion::joints_world(seq);
                    feats[i] = metrics::kinetic_features(s.joints[i], seq.fps);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    s.kinetic.resize(static_cast<Eigen::Index>(n), feats.front().values.size());
    for (std::size_t i = 0; i < n; ++i) s.kinetic.row(static_cast<Eigen::Index>(i)) = feats[i].values.transpose();
    return s;
}

Mat feature_rows(const std::string& path, const char* flag) {
    if (path.empty()) throw ValidationError(std::string("needs ") + flag);
    return io::read_features(path).data;
}

int cmd_eval(const EvalArgs& a) {
    const config::RunConfig cfg = config_or_default(a.config);
    const auto& mc = cfg.metrics;
    std::vector<std::string> names;
    {
        std::stringstream ss(a.metrics);
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (!item.empty()) names.push_back(item);
        }
    }
    if (names.empty()) throw ValidationError("--metrics is empty");

    std::optional<MotionSet> pred;
    std::optional<MotionSet> ref;
    auto need_pred = [&]() -> const MotionSet& {
        if (!pred) pred = load_motion_set(a.pred);
        return *pred;
    };
    auto need_ref = [&]() -> const MotionSet& {
        if (!ref) ref = load_motion_set(a.ref);
        return *ref;
    };

    Json results = Json::object();
    int ok = 0;
    for (const std::string& name : names) {
        metrics::Rng rng(mc.seed);
        try {
            if (name == "fid") {
                const auto& p = need_pred();
                const auto& r = need_ref();
                results[name] = metrics::frechet_distance(metrics::gaussian_stats(p.kinetic), metrics::gaussian_stats(r.kinetic));
            } else if (name == "div") {
                results[name] = metrics::diversity(need_pred().kinetic, mc.diversity_pairs, rng);
            } else if (name == "bas") {
                if (a.beats.empty()) throw ValidationError("needs --beats DIR");
                const auto& p = need_pred();
                double total = 0.0;
                for (std::size_t i = 0; i < p.files.size(); ++i) {
                    const fs::path beat_file = fs::path(a.beats) / (p.files[i].stem().string() + ".beats.json");
                    metrics::BeatTrack music{io::read_beats(beat_file)};
                    music.validate();
                    const auto dance = metrics::kinematic_beats(p.joints[i], motion::kCanonicalFps, mc.smooth_window);
                    total += metrics::beat_align_score(music, dance, mc.sigma);
                }
                results[name] = total / static_cast<double>(p.files.size());
            } else if (name == "rprec") {
                const Mat m = feature_rows(a.motion_features, "--motion-features");
                const Mat t = feature_rows(a.text_features, "--text-features");
                Json top = Json::object();
                for (int k = 1; k <= mc.top_k; ++k) {
                    metrics::Rng krng(mc.seed);
                    const auto r = metrics::r_precision(m, t, k, krng, mc.r_batch);
                    top["top" + std::to_string(k)] = r.score;
                    top["short_batch"] = r.short_batch;
                }
                results[name] = top;
            } else if (name == "mmdist") {
                results[name] = metrics::multimodal_distance(feature_rows(a.motion_features, "--motion-features"),
                                                             feature_rows(a.text_features, "--text-features"));
            } else if (name == "mm") {
                const Mat f = feature_rows(a.mm_features, "--mm-features");
                if (a.mm_group_size < 2 || f.rows() % a.mm_group_size != 0) {
                    throw ValidationError("--mm-group-size must be >= 2 and divide the feature rows");
                }
                std::vector<Mat> groups;
                for (Eigen::Index r = 0; r < f.rows(); r += a.mm_group_size) groups.push_back(f.middleRows(r, a.mm_group_size));
                results[name] = metrics::multimodality(groups, mc.diversity_pairs, rng);
            } else {
                throw ValidationError("unknown metric (fid, div, bas, rprec, mmdist, mm)");
            }
            ++ok;
        } catch (const Error& e) {
            results[name] = Json{{"error", e.what()}, {"code", static_cast<int>(e.code())}};
        }
    }

    const Json report{{"metrics", results},
                      {"seed", mc.seed},
                      {"config", config::to_json(cfg)},
                      {"inputs", {{"pred", a.pred}, {"ref", a.ref}, {"beats", a.beats}}}};
    const std::string text = report.dump(2) + "\n";
    if (a.out.empty()) {
        std::cout << text;
    } else {
        io::write_file_atomic(a.out, text);
    }
    return ok > 0 ? 0 : static_cast<int>(ExitCode::kValidation);
}

// --- gradcheck -------------------------------------------------------------------

struct GradArgs {
    std::string config;
    std::string block = "model";
    std::uint64_t seed = 0;
    double h = 1e-5;
    double tol = 1e-4;
};

int cmd_gradcheck(const GradArgs& a) {
    const config::RunConfig cfg = config_or_default(a.config);
    const auto res = train::grad_check_model(train::parse_grad_check_scope(a.block), cfg.model.net.layout, a.seed, a.h);
    for (const auto& [name, err] : res.per_tensor) std::cout << name << " " << err << "\n";
    const bool pass = res.max_rel_error < a.tol;
    std::cout << "max_rel_error " << res.max_rel_error << " (" << res.worst << ") " << (pass ? "PASS" : "FAIL") << "\n";
    return pass ? 0 : static_cast<int>(ExitCode::kNumeric);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-condition motion diffusion toolkit"};
    app.require_subcommand(1);

    GenDataArgs gen;
    auto* g = app.add_subcommand("gen-data", "write a synthetic toy dataset");
    g->add_option("--out", gen.out, "output directory")->required();
    g->add_option("--n", gen.n, "number of samples");
    g->add_option("--frames", gen.frames, "frames per sample (20 fps)");
    g->add_option("--seed", gen.seed, "generator seed");
    g->add_flag("--with-control", gen.with_control, "attach 1 s beat tracks and phase-lock the motion to them");
    g->add_flag("--force", gen.force, "allow writing into a non-empty directory");

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "train stage 1 (main branch) or stage 2 (control branch)");
    t->add_option("--config", tr.config, "run config JSON")->required();
    t->add_option("--stage", tr.stage, "1 or 2")->required();
    t->add_option("--resume", tr.resume, "checkpoint to continue from (required for stage 2)");
    t->add_option("--out", tr.out, "checkpoint to write")->required();
    t->add_option("--log", tr.log, "JSONL log path (default: <out>.log.jsonl)");
    t->add_option("--epochs", tr.epochs, "override the stage's epoch count");
    t->add_option("--max-steps", tr.max_steps, "override train.max_steps");
    t->add_option("--seed", tr.seed, "override train.seed");
    t->add_flag("--quiet", tr.quiet, "no per-epoch progress");

    SampleArgs sa;
    auto* s = app.add_subcommand("sample", "generate one motion");
    s->add_option("--ckpt", sa.ckpt, "checkpoint")->required();
    s->add_option("--caption", sa.caption, "text prompt")->required();
    s->add_option("--beats", sa.beats, "beat JSON for the control branch (stage-2 checkpoints)");
    s->add_option("--frames", sa.frames, "frames to generate");
    s->add_option("--seed", sa.seed, "sampling seed");
    s->add_option("--out", sa.out, "output motion file")->required();
    s->add_option("--joints-json", sa.joints_json, "also write world joint positions as JSON");

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "compute metrics and print a JSON report");
    e->add_option("--pred", ev.pred, "directory of generated .mcmv files");
    e->add_option("--ref", ev.ref, "directory of reference .mcmv files");
    e->add_option("--metrics", ev.metrics, "comma list of fid,div,bas,rprec,mmdist,mm");
    e->add_option("--beats", ev.beats, "directory of <stem>.beats.json music beats");
    e->add_option("--motion-features", ev.motion_features, "MCMF motion features (rprec, mmdist)");
    e->add_option("--text-features", ev.text_features, "MCMF text features (rprec, mmdist)");
    e->add_option("--mm-features", ev.mm_features, "MCMF features grouped by caption (mm)");
    e->add_option("--mm-group-size", ev.mm_group_size, "generations per caption in --mm-features");
    e->add_option("--config", ev.config, "run config JSON (metrics section)");
    e->add_option("--out", ev.out, "report path (default: stdout)");

    GradArgs gr;
    auto* gc = app.add_subcommand("gradcheck", "finite-difference check of a 1-block model");
    gc->add_option("--config", gr.config, "run config JSON (model.layout)");
    gc->add_option("--block", gr.block, "model, block, film, time_sa, channel_sa, cross, ffn");
    gc->add_option("--seed", gr.seed, "initialization seed");
    gc->add_option("--step", gr.h, "finite-difference step");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int rc = app.exit(err);
        return rc == 0 ? 0 : static_cast<int>(ExitCode::kValidation);
    }

    try {
        if (*g) return cmd_gen_data(gen);
        if (*t) return cmd_train(tr);
        if (*s) return cmd_sample(sa);
        if (*e) return cmd_eval(ev);
        if (*gc) return cmd_gradcheck(gr);
    } catch (const Error& err) {
        std::cerr << "error: " << err.what() << "\n";
        return static_cast<int>(err.code());
    } catch (const fs::filesystem_error& err) {
        std::cerr << "error: " << err.what() << "\n";
        return static_cast<int>(ExitCode::kIo);
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 1;
    }
    return 0;
}

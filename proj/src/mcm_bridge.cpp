#include "mcm/mcm_bridge.hpp"

#include "mcm/error.hpp"

#include <cstring>

namespace mcm::bridge {

McmModel build_mcm(const mwnet::MwNetModel& main, ConditionEncoders encoders, Rng& rng) {
    McmModel m;
    m.main = main;
    m.control = main;
    const int d = main.config().width;
    for (int k = 0; k < main.config().blocks; ++k) {
        mwnet::Linear b;
        b.weight = ad::Parameter(Mat::Zero(d, d));
        b.bias = ad::Parameter(Mat::Zero(1, d));
        b.use_bias = true;
        m.bridges.push_back(std::move(b));
    }
    m.control_in = mwnet::Linear(encoders.audio.config().control_dim, d, true, rng);
    m.encoders = std::move(encoders);
    set_stage(m, 1);
    return m;
}

void set_stage(McmModel& model, int stage) {
    if (stage != 1 && stage != 2) throw ValidationError("stage must be 1 or 2, got " + std::to_string(stage));
    model.stage_ = stage;
    model.visit([stage](const std::string& name, ad::Parameter& p) {
        const bool main_side = name.starts_with("main/") || name.starts_with("text/");
        const bool control_side =
            name.starts_with("control/") || name.starts_with("bridge/") || name.starts_with("control_in/");
        p.trainable = stage == 1 ? main_side : control_side;
    });
}

ad::Var McmModel::forward(ad::Tape& tape, const ad::Var& x_t, std::span<const int> steps,
                          const mwnet::TextContext& ctx, const ad::Var& control_sig, const mwnet::SequenceBatch& seq,
                          std::vector<ad::Var>* bridge_outputs) const {
    if (control_sig.rows() != x_t.rows()) {
        throw ValidationError("control signal has " + std::to_string(control_sig.rows()) + " rows, motion has " +
                              std::to_string(x_t.rows()));
    }
    ad::Var hc = ad::add(control.embed(tape, x_t, seq), control_in.forward(tape, control_sig));
    ad::Var tc = control.time_embedding(tape, steps, ctx.global);
    std::vector<ad::Var> outs;
    control.run_blocks(tape, hc, tc, ctx, seq, {}, &outs);

    std::vector<ad::Var> injections;
    injections.reserve(outs.size());
    for (std::size_t k = 0; k < outs.size(); ++k) injections.push_back(bridges[k].forward(tape, outs[k]));
    if (bridge_outputs != nullptr) *bridge_outputs = injections;

    ad::Var h = main.embed(tape, x_t, seq);
    ad::Var t_emb = main.time_embedding(tape, steps, ctx.global);
    return main.project_out(tape, main.run_blocks(tape, h, t_emb, ctx, seq, injections));
}

std::uint64_t checksum(const McmModel& model, const std::string& group) {
    std::uint64_t h = 14695981039346656037ULL;
    auto mix = [&h](const void* data, std::size_t n) {
        const auto* bytes = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= bytes[i];
            h *= 1099511628211ULL;
        }
    };
    model.visit_group(group, [&](const std::string& name, const ad::Parameter& p) {
        mix(name.data(), name.size());
        mix(p.value.data(), static_cast<std::size_t>(p.value.size()) * sizeof(double));
    });
    return h;
}

namespace {

Mat run_forward(const Mat& x_t, int t, const ConditionBundle& cond, const Mat& control_sig, const McmModel& model,
                std::vector<ad::Var>* bridges) {
    if (control_sig.rows() != x_t.rows()) {
        throw ValidationError("control signal has " + std::to_string(control_sig.rows()) + " frames, motion has " +
                              std::to_string(x_t.rows()));
    }
    if (cond.text_seq.rows() < 1) throw ValidationError("empty text context");
    ad::Tape tape(false);
    const mwnet::TextContext ctx{tape.constant(cond.text_seq), {0, static_cast<int>(cond.text_seq.rows())},
                                 tape.constant(cond.text_global.transpose())};
    const int steps[1] = {t};
    return model
        .forward(tape, tape.constant(x_t), steps, ctx, tape.constant(control_sig),
                 mwnet::SequenceBatch{1, static_cast<int>(x_t.rows()), {}}, bridges)
        .value();
}

}  // namespace

Mat mcm_forward(const Mat& x_t, int t, const ConditionBundle& cond, const Mat& control_sig, const McmModel& model) {
    return run_forward(x_t, t, cond, control_sig, model, nullptr);
}

std::vector<Mat> bridge_activations(const Mat& x_t, int t, const ConditionBundle& cond, const Mat& control_sig,
                                    const McmModel& model) {
    std::vector<ad::Var> vars;
    run_forward(x_t, t, cond, control_sig, model, &vars);
    std::vector<Mat> out;
    for (const auto& v : vars) out.push_back(v.value());
    return out;
}

}  // namespace mcm::bridge

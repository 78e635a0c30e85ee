#pragma once

// Two-branch control architecture: a main MWNet, a control branch that starts
// as an exact parameter copy, and one zero-initialized bridge per block that
// adds the control block's output to the input of the matching main block.

#include "mcm/conditioning.hpp"
#include "mcm/mwnet.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mcm::bridge {

using Rng = mwnet::Rng;

struct ConditionEncoders {
    cond::ToyTextEncoder text;
    cond::ToyAudioEncoder audio;
};

class McmModel {
public:
    McmModel() = default;

    mwnet::MwNetModel main;
    mwnet::MwNetModel control;
    std::vector<mwnet::Linear> bridges;  // d x d per block, zero at construction
    mwnet::Linear control_in;            // d_c -> d
    ConditionEncoders encoders;

    int stage() const { return stage_; }
    int control_dim() const { return static_cast<int>(control_in.weight.value.rows()); }

    /// Control branch input: embed(x_t) + control_in(control_sig). Returns the main prediction.
    ad::Var forward(ad::Tape& tape, const ad::Var& x_t, std::span<const int> steps, const mwnet::TextContext& ctx,
                    const ad::Var& control_sig, const mwnet::SequenceBatch& seq,
                    std::vector<ad::Var>* bridge_outputs = nullptr) const;

    template <class Fn>
    void visit(Fn&& fn) { visit_impl(*this, fn); }
    template <class Fn>
    void visit(Fn&& fn) const { visit_impl(*this, fn); }

    /// Parameters of the named group only: "main", "control", "bridge", "control_in", "text", "audio".
    /// An empty group name selects every parameter.
    template <class Fn>
    void visit_group(const std::string& group, Fn&& fn) const {
        visit_impl(*this, [&](const std::string& name, const ad::Parameter& p) {
            if (group.empty() || name.compare(0, group.size() + 1, group + "/") == 0) fn(name, p);
        });
    }

private:
    friend void set_stage(McmModel& model, int stage);

    template <class Self, class Fn>
    static void visit_impl(Self& self, Fn&& fn) {
        self.main.visit("main/", fn);
        self.control.visit("control/", fn);
        for (std::size_t k = 0; k < self.bridges.size(); ++k) {
            mwnet::Linear::visit(self.bridges[k], "bridge/" + std::to_string(k), fn);
        }
        mwnet::Linear::visit(self.control_in, "control_in/proj", fn);
        self.encoders.text.visit("text/", fn);
        self.encoders.audio.visit("audio/", fn);
    }

    int stage_ = 1;
};

/// Deep-copies `main` into the control branch and zero-initializes every bridge.
McmModel build_mcm(const mwnet::MwNetModel& main, ConditionEncoders encoders, Rng& rng);

/// Stage 1: main branch and text encoder trainable. Stage 2: control branch, bridges and control_in only.
void set_stage(McmModel& model, int stage);

/// 64-bit FNV-1a over names and raw bytes of every parameter in `group`.
std::uint64_t checksum(const McmModel& model, const std::string& group);

/// Forward-only single sequence. `control_sig` is T x d_c.
Mat mcm_forward(const Mat& x_t, int t, const ConditionBundle& cond, const Mat& control_sig, const McmModel& model);

/// Same pass as mcm_forward, returning each bridge's T x d output instead.
std::vector<Mat> bridge_activations(const Mat& x_t, int t, const ConditionBundle& cond, const Mat& control_sig,
                                    const McmModel& model);

}  // namespace mcm::bridge

#include "mcm/motion_repr.hpp"

#include "mcm/error.hpp"

#include <cmath>
#include <string>

namespace mcm::motion {

namespace {

void require_shape(const Mat& m, int rows, int cols, const char* what) {
    if (m.rows() != rows || m.cols() != cols) {
        throw DimensionError(std::string(what) + " expected " + std::to_string(rows) + "x" +
                             std::to_string(cols) + ", got " + std::to_string(m.rows()) + "x" +
                             std::to_string(m.cols()));
    }
}

}  // namespace

std::vector<int> velocity_channels() {
    std::vector<int> out;
    out.push_back(kRootAngVelOffset);
    out.push_back(kRootLinVelOffset);
    out.push_back(kRootLinVelOffset + 1);
    for (int c = kJointVelOffset; c < kFootContactOffset; ++c) out.push_back(c);
    return out;
}

void MotionSequence::validate() const {
    if (frames.rows() < 1) throw ValidationError("motion sequence must have at least one frame");
    if (frames.cols() != kFrameDim) {
        throw DimensionError("motion frames must have " + std::to_string(kFrameDim) + " channels, got " +
                             std::to_string(frames.cols()));
    }
    if (!(fps > 0.0) || !std::isfinite(fps)) throw ValidationError("fps must be positive");
}

Vec pack_frame(const MotionFrame& f) {
    require_shape(f.joint_pos, kNonRootJoints, 3, "joint_pos");
    require_shape(f.joint_rot, kNonRootJoints, 6, "joint_rot");
    require_shape(f.joint_vel, kJoints, 3, "joint_vel");

    Vec v(kFrameDim);
    v[kRootAngVelOffset] = f.root_ang_vel;
    v[kRootLinVelOffset] = f.root_lin_vel.x();
    v[kRootLinVelOffset + 1] = f.root_lin_vel.y();
    v[kRootHeightOffset] = f.root_height;
    for (int j = 0; j < kNonRootJoints; ++j) {
        for (int a = 0; a < 3; ++a) v[kJointPosOffset + 3 * j + a] = f.joint_pos(j, a);
        for (int a = 0; a < 6; ++a) v[kJointRotOffset + 6 * j + a] = f.joint_rot(j, a);
    }
    for (int j = 0; j < kJoints; ++j) {
        for (int a = 0; a < 3; ++a) v[kJointVelOffset + 3 * j + a] = f.joint_vel(j, a);
    }
    for (int i = 0; i < 4; ++i) v[kFootContactOffset + i] = f.foot_contacts[i];
    return v;
}

MotionFrame unpack_frame(const Vec& v) {
    if (v.size() != kFrameDim) {
        throw DimensionError("frame vector must have length 263, got " + std::to_string(v.size()));
    }
    MotionFrame f;
    f.root_ang_vel = v[kRootAngVelOffset];
    f.root_lin_vel = {v[kRootLinVelOffset], v[kRootLinVelOffset + 1]};
    f.root_height = v[kRootHeightOffset];
    for (int j = 0; j < kNonRootJoints; ++j) {
        for (int a = 0; a < 3; ++a) f.joint_pos(j, a) = v[kJointPosOffset + 3 * j + a];
        for (int a = 0; a < 6; ++a) f.joint_rot(j, a) = v[kJointRotOffset + 6 * j + a];
    }
    for (int j = 0; j < kJoints; ++j) {
        for (int a = 0; a < 3; ++a) f.joint_vel(j, a) = v[kJointVelOffset + 3 * j + a];
    }
    for (int i = 0; i < 4; ++i) f.foot_contacts[i] = v[kFootContactOffset + i];
    return f;
}

Eigen::MatrixXi detect_foot_contacts(const Mat& speeds, double threshold) {
    if (!(threshold > 0.0)) throw ValidationError("foot contact threshold must be positive");
    if (speeds.cols() != 4) throw DimensionError("heel/toe speeds must have 4 columns");
    if ((speeds.array() < 0.0).any()) throw ValidationError("heel/toe speeds must be non-negative");
    return (speeds.array() < threshold).cast<int>();
}

MotionSequence resample_fps(const MotionSequence& seq, double dst_fps) {
    seq.validate();
    if (!(dst_fps > 0.0)) throw ValidationError("target fps must be positive");
    if (dst_fps > seq.fps) throw UnsupportedError("upsampling from " + std::to_string(seq.fps) + " to " +
                                                  std::to_string(dst_fps) + " fps");
    if (dst_fps == seq.fps) return seq;

    const double ratio = seq.fps / dst_fps;
    const int src_len = seq.length();
    std::vector<int> picks;
    const double rounded = std::round(ratio);
    if (std::abs(ratio - rounded) < 1e-9) {
        const int stride = static_cast<int>(rounded);
        for (int i = 0; i < src_len; i += stride) picks.push_back(i);
    } else {
        // Every output time inside the source span, mapped to the nearest source frame.
        const int out_len = static_cast<int>(std::floor((src_len - 1) / ratio + 1e-9)) + 1;
        for (int k = 0; k < out_len; ++k) {
            const long idx = std::lround(k * ratio);
            picks.push_back(static_cast<int>(std::min<long>(idx, src_len - 1)));
        }
    }

    MotionSequence out;
    out.fps = dst_fps;
    out.label = seq.label;
    out.frames.resize(static_cast<Eigen::Index>(picks.size()), kFrameDim);
    for (std::size_t k = 0; k < picks.size(); ++k) out.frames.row(static_cast<Eigen::Index>(k)) = seq.frames.row(picks[k]);
    // Per-frame velocities grow with the frame interval.
    for (int c : velocity_channels()) out.frames.col(c) *= ratio;
    return out;
}

Eigen::Vector2d rotate_xz(double heading, const Eigen::Vector2d& local) {
    const double c = std::cos(heading);
    const double s = std::sin(heading);
    return {c * local.x() + s * local.y(), -s * local.x() + c * local.y()};
}

RootTrajectory integrate_root(const MotionSequence& seq) {
    seq.validate();
    const int n = seq.length();
    RootTrajectory out{Mat::Zero(n, 3), Vec::Zero(n)};
    Eigen::Vector2d xz = Eigen::Vector2d::Zero();
    double heading = 0.0;
    for (int t = 0; t < n; ++t) {
        out.heading[t] = heading;
        out.positions(t, 0) = xz.x();
        out.positions(t, 1) = seq.frames(t, kRootHeightOffset);
        out.positions(t, 2) = xz.y();
        const Eigen::Vector2d local{seq.frames(t, kRootLinVelOffset), seq.frames(t, kRootLinVelOffset + 1)};
        xz += rotate_xz(heading, local);
        heading += seq.frames(t, kRootAngVelOffset);
    }
    return out;
}

JointPositions joints_world(const MotionSequence& seq) {
    const RootTrajectory root = integrate_root(seq);
    const int n = seq.length();
    JointPositions out(n, kJoints);
    for (int t = 0; t < n; ++t) {
        for (int a = 0; a < 3; ++a) out.at(t, 0, a) = root.positions(t, a);
        for (int j = 1; j < kJoints; ++j) {
            const Eigen::Vector2d local{seq.frames(t, joint_pos_channel(j, 0)), seq.frames(t, joint_pos_channel(j, 2))};
            const Eigen::Vector2d world = rotate_xz(root.heading[t], local);
            out.at(t, j, 0) = world.x() + root.positions(t, 0);
            out.at(t, j, 1) = seq.frames(t, joint_pos_channel(j, 1));
            out.at(t, j, 2) = world.y() + root.positions(t, 2);
        }
    }
    return out;
}

std::vector<MotionSequence> slice_sequence(const MotionSequence& seq, double max_seconds, double stride_seconds) {
    seq.validate();
    if (!(max_seconds > 0.0) || !(stride_seconds > 0.0)) {
        throw ValidationError("slice window and stride must be positive");
    }
    const int window = static_cast<int>(std::lround(max_seconds * seq.fps));
    const int stride = std::max(1, static_cast<int>(std::lround(stride_seconds * seq.fps)));
    const int n = seq.length();
    std::vector<MotionSequence> out;
    if (n <= window) {
        out.push_back(seq);
        return out;
    }
    for (int start = 0; start + window <= n; start += stride) {
        MotionSequence s;
        s.fps = seq.fps;
        s.label = seq.label;
        s.frames = seq.frames.middleRows(start, window);
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace mcm::motion

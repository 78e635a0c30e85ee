#pragma once

// Per-frame 263-dimensional motion vector: root velocities and height, root-space
// joint positions, 6D joint rotations, joint velocities and foot contacts.

#include "mcm/types.hpp"

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace mcm::motion {

inline constexpr int kJoints = 22;
inline constexpr int kNonRootJoints = kJoints - 1;
inline constexpr int kFrameDim = 263;
inline constexpr int kCanonicalFps = 20;

// Segment offsets inside the packed vector.
inline constexpr int kRootAngVelOffset = 0;
inline constexpr int kRootLinVelOffset = 1;
inline constexpr int kRootHeightOffset = 3;
inline constexpr int kJointPosOffset = 4;
inline constexpr int kJointRotOffset = kJointPosOffset + 3 * kNonRootJoints;   // 67
inline constexpr int kJointVelOffset = kJointRotOffset + 6 * kNonRootJoints;   // 193
inline constexpr int kFootContactOffset = kJointVelOffset + 3 * kJoints;       // 259
static_assert(kFootContactOffset + 4 == kFrameDim);

/// Channel indices that hold per-frame velocities (rescaled on fps change).
std::vector<int> velocity_channels();

/// Index of coordinate `axis` of non-root joint `joint` (1..21) in the packed vector.
constexpr int joint_pos_channel(int joint, int axis) { return kJointPosOffset + 3 * (joint - 1) + axis; }
constexpr int joint_vel_channel(int joint, int axis) { return kJointVelOffset + 3 * joint + axis; }

struct MotionFrame {
    double root_ang_vel = 0.0;             // rad/frame about +Y
    Eigen::Vector2d root_lin_vel = Eigen::Vector2d::Zero();  // local XZ, m/frame
    double root_height = 0.0;
    Mat joint_pos = Mat::Zero(kNonRootJoints, 3);
    Mat joint_rot = Mat::Zero(kNonRootJoints, 6);
    Mat joint_vel = Mat::Zero(kJoints, 3);
    std::array<double, 4> foot_contacts{};

    bool operator==(const MotionFrame&) const = default;
};

struct MotionSequence {
    Mat frames;  // T x 263
    double fps = kCanonicalFps;
    std::optional<std::string> label;

    int length() const { return static_cast<int>(frames.rows()); }
    /// Throws DimensionError/ValidationError if the sequence is malformed.
    void validate() const;
};

Vec pack_frame(const MotionFrame& frame);
MotionFrame unpack_frame(const Vec& v);

/// flag = 1 iff speed < threshold. Speeds must be non-negative.
Eigen::MatrixXi detect_foot_contacts(const Mat& heel_toe_speeds, double threshold = 0.002);

MotionSequence resample_fps(const MotionSequence& seq, double dst_fps);

struct RootTrajectory {
    Mat positions;  // T x 3 world (x, y, z)
    Vec heading;    // T, radians about +Y
};

RootTrajectory integrate_root(const MotionSequence& seq);

/// Rotates a local XZ vector by `heading` about +Y.
Eigen::Vector2d rotate_xz(double heading, const Eigen::Vector2d& local);

/// World-space positions of all 22 joints; joint 0 is the integrated root.
JointPositions joints_world(const MotionSequence& seq);

std::vector<MotionSequence> slice_sequence(const MotionSequence& seq, double max_seconds = 10.0,
                                           double stride_seconds = 1.0);

}  // namespace mcm::motion

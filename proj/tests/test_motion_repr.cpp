#include "mcm/error.hpp"
#include "mcm/motion_repr.hpp"
#include "mcm/tensor_io.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <numbers>
#include <random>

using namespace mcm;
using namespace mcm::motion;

namespace {

Vec random_vec(std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Vec v(kFrameDim);
    for (int i = 0; i < kFrameDim; ++i) v[i] = n(rng);
    return v;
}

bool bit_equal(const Vec& a, const Vec& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

MotionSequence zeros(int frames, double fps = 20.0) {
    MotionSequence s;
    s.frames = Mat::Zero(frames, kFrameDim);
    s.fps = fps;
    return s;
}

}  // namespace

TEST(Pack, ZeroFrameIsZeroVector) {
    EXPECT_TRUE(pack_frame(MotionFrame{}).isZero(0.0));
    EXPECT_EQ(pack_frame(MotionFrame{}).size(), 263);
}

TEST(Pack, SegmentOffsets) {
    // Running sum of the segment sizes, written out independently.
    const int sizes[] = {1, 2, 1, 21 * 3, 21 * 6, 22 * 3, 4};
    int expect[8] = {0};
    for (int i = 0; i < 7; ++i) expect[i + 1] = expect[i] + sizes[i];
    EXPECT_EQ(expect[7], 263);
    EXPECT_EQ(kRootAngVelOffset, expect[0]);
    EXPECT_EQ(kRootLinVelOffset, expect[1]);
    EXPECT_EQ(kRootHeightOffset, expect[2]);
    EXPECT_EQ(kJointPosOffset, expect[3]);
    EXPECT_EQ(kJointRotOffset, expect[4]);
    EXPECT_EQ(kJointVelOffset, expect[5]);
    EXPECT_EQ(kFootContactOffset, expect[6]);

    MotionFrame f;
    f.root_ang_vel = 1;
    f.root_lin_vel = {2, 2};
    f.root_height = 3;
    f.joint_pos.setConstant(4);
    f.joint_rot.setConstant(5);
    f.joint_vel.setConstant(6);
    f.foot_contacts = {7, 7, 7, 7};
    const Vec v = pack_frame(f);
    for (int seg = 0; seg < 7; ++seg) {
        for (int i = expect[seg]; i < expect[seg + 1]; ++i) ASSERT_EQ(v[i], seg + 1) << i;
    }
}

TEST(Pack, RoundTripIsBitExact) {
    std::mt19937_64 rng(5);
    for (int k = 0; k < 100; ++k) {
        const Vec v = random_vec(rng);
        ASSERT_TRUE(bit_equal(pack_frame(unpack_frame(v)), v));
    }
    MotionFrame f;
    f.root_ang_vel = -0.25;
    f.joint_rot(3, 4) = 1.5;
    f.foot_contacts = {1, 0, 0, 1};
    EXPECT_EQ(unpack_frame(pack_frame(f)), f);
}

TEST(Pack, FirstSlotMapsToAngularVelocity) {
    Vec v = Vec::Zero(kFrameDim);
    v[0] = 0.5;
    EXPECT_EQ(unpack_frame(v).root_ang_vel, 0.5);
    EXPECT_EQ(unpack_frame(Vec::Zero(kFrameDim)), MotionFrame{});
}

TEST(Pack, WrongShapesThrow) {
    EXPECT_THROW(unpack_frame(Vec::Zero(262)), DimensionError);
    MotionFrame f;
    f.joint_pos = Mat::Zero(22, 3);
    EXPECT_THROW(pack_frame(f), DimensionError);
}

TEST(FootContacts, Rules) {
    EXPECT_EQ(detect_foot_contacts(Mat::Zero(3, 4)).sum(), 12);
    Mat s(1, 4);
    s << 0.001, 0.5, 0.0019, 0.002;
    Eigen::MatrixXi expect(1, 4);
    expect << 1, 0, 1, 0;
    EXPECT_EQ(detect_foot_contacts(s, 0.002), expect);
    s(0, 1) = -0.1;
    EXPECT_THROW(detect_foot_contacts(s), ValidationError);
}

TEST(FootContacts, MonotoneInThreshold) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 0.01);
    Mat s(50, 4);
    for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = u(rng);
    Eigen::MatrixXi prev = detect_foot_contacts(s, 0.0005);
    for (double th = 0.001; th < 0.012; th += 0.0005) {
        const Eigen::MatrixXi cur = detect_foot_contacts(s, th);
        ASSERT_TRUE(((prev.array() == 1) <= (cur.array() == 1)).all());
        prev = cur;
    }
}

TEST(Resample, SameRateIsIdentity) {
    std::mt19937_64 rng(1);
    MotionSequence s = zeros(5);
    for (int t = 0; t < 5; ++t) s.frames.row(t) = random_vec(rng).transpose();
    EXPECT_EQ(resample_fps(s, 20.0).frames, s.frames);
}

TEST(Resample, IntegerStrideScalesVelocities) {
    MotionSequence s = zeros(9, 60.0);
    for (int t = 0; t < 9; ++t) s.frames.row(t).setConstant(t + 1);
    const MotionSequence r = resample_fps(s, 20.0);
    ASSERT_EQ(r.length(), 3);
    EXPECT_EQ(r.fps, 20.0);
    const auto vel = velocity_channels();
    const int keep[] = {0, 3, 6};
    for (int k = 0; k < 3; ++k) {
        for (int c = 0; c < kFrameDim; ++c) {
            const bool is_vel = std::find(vel.begin(), vel.end(), c) != vel.end();
            ASSERT_DOUBLE_EQ(r.frames(k, c), (keep[k] + 1) * (is_vel ? 3.0 : 1.0)) << k << "," << c;
        }
    }
}

TEST(Resample, NearestFrameForFractionalRatio) {
    MotionSequence s = zeros(6, 30.0);
    for (int t = 0; t < 6; ++t) s.frames(t, kRootHeightOffset) = t;
    const MotionSequence r = resample_fps(s, 20.0);
    // Output times 0, 0.05, 0.10 s map to source frames 0, 1.5 -> 2, 3.
    ASSERT_GE(r.length(), 3);
    EXPECT_EQ(r.frames(0, kRootHeightOffset), 0);
    EXPECT_EQ(r.frames(1, kRootHeightOffset), 2);
    EXPECT_EQ(r.frames(2, kRootHeightOffset), 3);
}

TEST(Resample, UpsamplingIsUnsupported) { EXPECT_THROW(resample_fps(zeros(4, 20.0), 30.0), UnsupportedError); }

TEST(IntegrateRoot, StraightLine) {
    MotionSequence s = zeros(5);
    for (int t = 0; t < 5; ++t) s.frames(t, kRootLinVelOffset) = 0.1;
    const RootTrajectory r = integrate_root(s);
    for (int t = 0; t < 5; ++t) {
        EXPECT_NEAR(r.positions(t, 0), 0.1 * t, 1e-12);
        EXPECT_NEAR(r.positions(t, 2), 0.0, 1e-12);
    }
}

TEST(IntegrateRoot, QuarterTurnsTraceASquare) {
    MotionSequence s = zeros(5);
    for (int t = 0; t < 5; ++t) {
        s.frames(t, kRootAngVelOffset) = std::numbers::pi / 2;
        s.frames(t, kRootLinVelOffset) = 1.0;
    }
    const RootTrajectory r = integrate_root(s);
    EXPECT_NEAR(r.positions(1, 0), 1.0, 1e-9);
    EXPECT_NEAR(r.positions(1, 2), 0.0, 1e-9);
    for (int t = 1; t < 4; ++t) {
        const Eigen::Vector2d a{r.positions(t, 0) - r.positions(t - 1, 0), r.positions(t, 2) - r.positions(t - 1, 2)};
        const Eigen::Vector2d b{r.positions(t + 1, 0) - r.positions(t, 0), r.positions(t + 1, 2) - r.positions(t, 2)};
        EXPECT_NEAR(a.norm(), 1.0, 1e-9);
        EXPECT_NEAR(b.norm(), 1.0, 1e-9);
        EXPECT_NEAR(a.dot(b), 0.0, 1e-9);
    }
    // Four unit steps round the square come back to the start.
    EXPECT_NEAR(r.positions(4, 0), 0.0, 1e-9);
    EXPECT_NEAR(r.positions(4, 2), 0.0, 1e-9);
}

TEST(IntegrateRoot, ZeroSequenceStaysAtOrigin) {
    const RootTrajectory r = integrate_root(zeros(6));
    EXPECT_TRUE(r.positions.isZero(0.0));
    EXPECT_TRUE(r.heading.isZero(0.0));
}

TEST(IntegrateRoot, ReversedPathReturnsToOrigin) {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    const int n = 12;
    Mat fwd(n, 3);
    for (int t = 0; t < n; ++t) fwd.row(t) << u(rng), u(rng), u(rng);

    // Forward path, one zero-velocity frame that undoes the last turn, then the
    // path walked backwards. Each frame's displacement uses the heading before
    // its own turn, hence the one-frame shift of the angular channel.
    MotionSequence s = zeros(2 * n + 1);
    for (int t = 0; t < n; ++t) {
        s.frames(t, kRootAngVelOffset) = fwd(t, 0);
        s.frames(t, kRootLinVelOffset) = fwd(t, 1);
        s.frames(t, kRootLinVelOffset + 1) = fwd(t, 2);
    }
    s.frames(n, kRootAngVelOffset) = -fwd(n - 1, 0);
    for (int k = 0; k < n; ++k) {
        const int src = n - 1 - k;
        s.frames(n + 1 + k, kRootLinVelOffset) = -fwd(src, 1);
        s.frames(n + 1 + k, kRootLinVelOffset + 1) = -fwd(src, 2);
        if (src > 0) s.frames(n + 1 + k, kRootAngVelOffset) = -fwd(src - 1, 0);
    }
    // Extra still frame so the position after the last step is recorded.
    s.frames.conservativeResize(2 * n + 2, Eigen::NoChange);
    s.frames.row(2 * n + 1).setZero();
    const RootTrajectory r = integrate_root(s);
    EXPECT_NEAR(r.positions(2 * n + 1, 0), 0.0, 1e-9);
    EXPECT_NEAR(r.positions(2 * n + 1, 2), 0.0, 1e-9);
}

TEST(JointsWorld, ZeroMotionAtOrigin) { EXPECT_TRUE(joints_world(zeros(3)).data.isZero(0.0)); }

TEST(JointsWorld, TranslatingRootMovesPoseRigidly) {
    MotionSequence s = zeros(4);
    std::mt19937_64 rng(4);
    const Vec pose = random_vec(rng).segment(kJointPosOffset, 3 * kNonRootJoints);
    for (int t = 0; t < 4; ++t) {
        s.frames.row(t).segment(kJointPosOffset, 3 * kNonRootJoints) = pose.transpose();
        s.frames(t, kRootLinVelOffset) = 0.2;
    }
    const JointPositions j = joints_world(s);
    for (int t = 1; t < 4; ++t) {
        for (int k = 0; k < kJoints; ++k) {
            EXPECT_NEAR(j.at(t, k, 0) - j.at(0, k, 0), 0.2 * t, 1e-12);
            EXPECT_NEAR(j.at(t, k, 1) - j.at(0, k, 1), 0.0, 1e-12);
            EXPECT_NEAR(j.at(t, k, 2) - j.at(0, k, 2), 0.0, 1e-12);
        }
    }
}

TEST(JointsWorld, IdentityRootGivesRootSpacePositions) {
    std::mt19937_64 rng(8);
    MotionSequence s = zeros(3);
    for (int t = 0; t < 3; ++t) {
        s.frames.row(t) = random_vec(rng).transpose();
        s.frames.block(t, 0, 1, 3).setZero();  // no rotation, no translation
    }
    const JointPositions j = joints_world(s);
    for (int t = 0; t < 3; ++t) {
        EXPECT_EQ(j.joint(t, 0), Eigen::Vector3d(0, s.frames(t, kRootHeightOffset), 0));
        for (int k = 1; k < kJoints; ++k) {
            for (int a = 0; a < 3; ++a) EXPECT_EQ(j.at(t, k, a), s.frames(t, joint_pos_channel(k, a)));
        }
    }
}

TEST(Slice, Windows) {
    EXPECT_EQ(slice_sequence(zeros(100)).size(), 1U);
    const auto sl = slice_sequence(zeros(240));
    // Starts every 20 frames while a full 200-frame window fits: 0, 20, 40.
    ASSERT_EQ(sl.size(), 3U);
    for (const auto& s : sl) EXPECT_EQ(s.length(), 200);
    EXPECT_EQ(slice_sequence(zeros(240), 10.0, 12.0).size(), 1U);
}

TEST(Slice, KeepsFrameContent) {
    MotionSequence s = zeros(240);
    for (int t = 0; t < 240; ++t) s.frames(t, kRootHeightOffset) = t;
    const auto sl = slice_sequence(s);
    EXPECT_EQ(sl[2].frames(0, kRootHeightOffset), 40);
    EXPECT_EQ(sl[2].frames(199, kRootHeightOffset), 239);
}

TEST(MotionFile, WriteReadIsByteIdentical) {
    std::mt19937_64 rng(3);
    MotionSequence s = zeros(7);
    for (int t = 0; t < 7; ++t) s.frames.row(t) = random_vec(rng).transpose().cast<float>().cast<double>();
    const auto dir = std::filesystem::temp_directory_path() / "mcm_motion_file_test";
    std::filesystem::create_directories(dir);
    io::write_motion(dir / "a.mcmv", s);
    const MotionSequence back = io::read_motion(dir / "a.mcmv");
    EXPECT_EQ(back.frames, s.frames);
    EXPECT_EQ(back.fps, 20.0);
    io::write_motion(dir / "b.mcmv", back);
    EXPECT_EQ(io::read_file(dir / "a.mcmv"), io::read_file(dir / "b.mcmv"));

    // Header layout: magic, version, T, D, fps.
    const std::string bytes = io::read_file(dir / "a.mcmv");
    ASSERT_EQ(bytes.size(), 20U + 7U * 263U * 4U);
    EXPECT_EQ(bytes.substr(0, 4), "MCMV");
    std::uint32_t hdr[4];
    std::memcpy(hdr, bytes.data() + 4, sizeof hdr);
    EXPECT_EQ(hdr[0], 1U);
    EXPECT_EQ(hdr[1], 7U);
    EXPECT_EQ(hdr[2], 263U);
    float fps = 0;
    std::memcpy(&fps, bytes.data() + 16, 4);
    EXPECT_EQ(fps, 20.0F);
    std::filesystem::remove_all(dir);
}

TEST(MotionFile, JsonForm) {
    MotionSequence s = zeros(2);
    s.frames(1, 0) = 0.5;
    const MotionSequence back = io::motion_from_json(io::motion_to_json(s));
    EXPECT_EQ(back.frames, s.frames);
    EXPECT_THROW(io::motion_from_json("{\"fps\":20,\"frames\":[[1,2]]}"), Error);
}

TEST(MotionFile, BadMagicIsIoError) {
    EXPECT_THROW(io::decode_tensor("XXXX0000000000000000", io::kMotionMagic), IoError);
}

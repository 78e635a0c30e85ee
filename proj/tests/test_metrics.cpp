#include "mcm/error.hpp"
#include "mcm/metrics.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace mcm;
using namespace mcm::metrics;

namespace {

Mat randn(Eigen::Index r, Eigen::Index c, Rng& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Mat m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
    return m;
}

Mat random_rotation(int k, Rng& rng) {
    Eigen::HouseholderQR<Mat> qr(randn(k, k, rng));
    return qr.householderQ();
}

// All joints share one x trajectory whose per-frame speed is `speed[t]` (m/s).
JointPositions moving_along_x(const std::vector<double>& speed, double fps, int joints = 3) {
    JointPositions p(static_cast<int>(speed.size()) + 1, joints);
    for (std::size_t t = 0; t < speed.size(); ++t) {
        for (int j = 0; j < joints; ++j) p.at(static_cast<int>(t) + 1, j, 0) = p.at(static_cast<int>(t), j, 0) + speed[t] / fps;
    }
    return p;
}

}  // namespace

TEST(Kinetic, StaticIsZero) {
    JointPositions p(5, 22);
    p.data.setConstant(0.3);
    const KineticFeature k = kinetic_features(p, 20);
    EXPECT_EQ(k.values.size(), 66);
    EXPECT_TRUE(k.values.isZero(0.0));
}

TEST(Kinetic, ConstantVelocitySlot) {
    JointPositions p(11, 22);
    for (int t = 0; t < 11; ++t) p.at(t, 4, 0) = 2.0 * t / 20.0;
    const KineticFeature k = kinetic_features(p, 20);
    for (int i = 0; i < 66; ++i) EXPECT_NEAR(k.values[i], i == 12 ? 2.0 : 0.0, 1e-12) << i;
}

TEST(Kinetic, FrameRateAndTranslationInvariance) {
    Rng rng(1);
    const Mat traj = randn(1, 66, rng);
    JointPositions slow(6, 22);
    JointPositions fast(11, 22);
    for (int t = 0; t < 6; ++t) slow.data.row(t) = traj * (0.1 * t);
    for (int t = 0; t < 11; ++t) fast.data.row(t) = traj * (0.05 * t);
    EXPECT_LT((kinetic_features(slow, 20).values - kinetic_features(fast, 40).values).cwiseAbs().maxCoeff(), 1e-12);

    JointPositions moved = slow;
    moved.data.rowwise() += randn(1, 66, rng).row(0);
    EXPECT_LT((kinetic_features(moved, 20).values - kinetic_features(slow, 20).values).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_THROW(kinetic_features(JointPositions(1, 22), 20), ValidationError);
}

TEST(Frechet, SameStatsIsZero) {
    Rng rng(2);
    const GaussianStats a = gaussian_stats(randn(50, 4, rng));
    EXPECT_NEAR(frechet_distance(a, a), 0.0, 1e-8);
}

TEST(Frechet, UnitCovarianceMeanOffset) {
    GaussianStats a{Vec::Zero(3), Mat::Identity(3, 3), 10};
    GaussianStats b{Vec(3), Mat::Identity(3, 3), 10};
    b.mean << 1.0, -2.0, 0.5;
    EXPECT_NEAR(frechet_distance(a, b), 1.0 + 4.0 + 0.25, 1e-8);
}

TEST(Frechet, ScalarVariances) {
    const GaussianStats a{Vec::Zero(1), Mat::Constant(1, 1, 1.0), 2};
    const GaussianStats b{Vec::Zero(1), Mat::Constant(1, 1, 4.0), 2};
    EXPECT_NEAR(frechet_distance(a, b), 1.0, 1e-8);
}

TEST(Frechet, SymmetricAndNonNegative) {
    Rng rng(3);
    const GaussianStats a = gaussian_stats(randn(30, 5, rng));
    const GaussianStats b = gaussian_stats(2.0 * randn(40, 5, rng));
    EXPECT_NEAR(frechet_distance(a, b), frechet_distance(b, a), 1e-8);
    EXPECT_GE(frechet_distance(a, b), 0.0);
    // Independent reference for general covariances: trace of the PSD square root of Sa Sb via its eigenvalues.
    Eigen::EigenSolver<Mat> es(a.cov * b.cov);
    double tr_sqrt = 0;
    for (int i = 0; i < 5; ++i) tr_sqrt += std::sqrt(std::max(0.0, es.eigenvalues()[i].real()));
    const double ref = (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2 * tr_sqrt;
    EXPECT_NEAR(frechet_distance(a, b), ref, 1e-8);
    const GaussianStats c{Vec::Zero(4), Mat::Identity(4, 4), 3};
    EXPECT_THROW(frechet_distance(a, c), ValidationError);
}

TEST(Frechet, StatsUseUnbiasedCovariance) {
    Mat f(3, 1);
    f << 1, 2, 6;
    const GaussianStats s = gaussian_stats(f);
    EXPECT_DOUBLE_EQ(s.mean[0], 3.0);
    EXPECT_DOUBLE_EQ(s.cov(0, 0), (4.0 + 1.0 + 9.0) / 2.0);
    EXPECT_EQ(s.n, 3);
    EXPECT_THROW(gaussian_stats(Mat::Zero(1, 3)), ValidationError);
}

TEST(Diversity, Examples) {
    Rng rng(4);
    EXPECT_EQ(diversity(Mat::Ones(5, 3), 0, rng), 0.0);
    Mat two(2, 2);
    two << 0, 0, 3, 4;
    EXPECT_NEAR(diversity(two, 0, rng), 5.0, 1e-12);
    EXPECT_NEAR(diversity(two, 100, rng), 5.0, 1e-12);
    EXPECT_THROW(diversity(Mat::Zero(1, 3), 0, rng), ValidationError);
}

TEST(Diversity, SampledConvergesToExhaustive) {
    Rng rng(5);
    const Mat f = randn(4, 6, rng);
    double exact = 0;
    for (int i = 0; i < 4; ++i) {
        for (int j = i + 1; j < 4; ++j) exact += (f.row(i) - f.row(j)).norm();
    }
    exact /= 6.0;
    EXPECT_NEAR(diversity(f, 0, rng), exact, 1e-12);
    EXPECT_NEAR(diversity(f, 100000, rng) / exact, 1.0, 0.02);
}

TEST(Diversity, RotationInvariant) {
    Rng rng(6);
    const Mat f = randn(10, 5, rng);
    const Mat q = random_rotation(5, rng);
    Rng a(1);
    Rng b(1);
    EXPECT_NEAR(diversity(f, 50, a), diversity(f * q, 50, b), 1e-9);
}

TEST(KinematicBeats, MonotoneHasNone) {
    std::vector<double> s(30);
    for (int t = 0; t < 30; ++t) s[t] = 0.1 * t;
    EXPECT_TRUE(kinematic_beats(moving_along_x(s, 20), 20, 5).empty());
}

TEST(KinematicBeats, RectifiedSineMinima) {
    // |sin(2 pi t / P)| with P = 1 s has minima every 0.5 s.
    std::vector<double> s(60);
    for (int t = 0; t < 60; ++t) s[t] = std::abs(std::sin(2 * std::numbers::pi * t / 20.0));
    for (int w : {1, 5}) {
        const BeatTrack b = kinematic_beats(moving_along_x(s, 20), 20, w);
        ASSERT_EQ(b.times.size(), 5U) << w;
        for (int k = 0; k < 5; ++k) EXPECT_NEAR(b.times[k], 0.5 * (k + 1), 1e-12);
    }
}

TEST(KinematicBeats, PlateauAndShortInputs) {
    const std::vector<double> s{3, 2, 1, 1, 2, 3};
    EXPECT_TRUE(kinematic_beats(moving_along_x(s, 20), 20, 1).empty());
    EXPECT_TRUE(kinematic_beats(JointPositions(2, 22), 20, 5).empty());
    EXPECT_THROW(kinematic_beats(moving_along_x(s, 20), 20, 4), ValidationError);
}

TEST(Bas, ClosedForms) {
    EXPECT_DOUBLE_EQ(beat_align_score({{0.5, 1.0}}, {{0.5, 1.0, 2.0}}), 1.0);
    EXPECT_NEAR(beat_align_score({{3.0}}, {{0.0}}, 3.0), std::exp(-0.5), 1e-9);
    EXPECT_NEAR(beat_align_score({{0.0, 1.0}}, {{0.0}}, 3.0), (1.0 + std::exp(-1.0 / 18.0)) / 2.0, 1e-9);
}

TEST(Bas, AddingDanceBeatsNeverLowers) {
    Rng rng(7);
    std::uniform_real_distribution<double> u(0.0, 10.0);
    BeatTrack music;
    BeatTrack dance;
    for (int i = 0; i < 8; ++i) music.times.push_back(i + 0.3);
    double t = 0.2;
    dance.times.push_back(t);
    double prev = beat_align_score(music, dance, 0.5);
    for (int k = 0; k < 20; ++k) {
        dance.times.push_back(u(rng));
        std::sort(dance.times.begin(), dance.times.end());
        dance.times.erase(std::unique(dance.times.begin(), dance.times.end()), dance.times.end());
        const double cur = beat_align_score(music, dance, 0.5);
        EXPECT_GE(cur, prev - 1e-15);
        prev = cur;
    }
}

TEST(Bas, EmptyTracksHaveDistinctErrors) {
    try {
        beat_align_score({}, {{1.0}});
        FAIL();
    } catch (const EmptyTrackError& e) {
        EXPECT_EQ(e.reason(), EmptyTrackError::Reason::kEmptyMusic);
    }
    try {
        beat_align_score({{1.0}}, {});
        FAIL();
    } catch (const EmptyTrackError& e) {
        EXPECT_EQ(e.reason(), EmptyTrackError::Reason::kEmptyDance);
    }
    EXPECT_THROW(BeatTrack({{1.0, 0.5}}).validate(), ValidationError);
    EXPECT_THROW(BeatTrack({{-1.0}}).validate(), ValidationError);
}

TEST(RPrecision, PerfectAndExhaustive) {
    Rng rng(8);
    const Mat f = randn(64, 8, rng);
    EXPECT_EQ(r_precision(f, f, 1, rng).score, 1.0);
    EXPECT_EQ(r_precision(f, randn(64, 8, rng), 32, rng).score, 1.0);
}

TEST(RPrecision, ChanceLevel) {
    Rng rng(9);
    const Mat m = randn(3200, 8, rng);
    const Mat t = randn(3200, 8, rng);
    const RPrecisionResult r = r_precision(m, t, 1, rng);
    EXPECT_FALSE(r.short_batch);
    EXPECT_GT(r.score, 0.01);
    EXPECT_LT(r.score, 0.06);
}

TEST(RPrecision, ShortBatchIsFlagged) {
    Rng rng(10);
    const Mat f = randn(10, 4, rng);
    const RPrecisionResult r = r_precision(f, f, 1, rng);
    EXPECT_TRUE(r.short_batch);
    EXPECT_EQ(r.score, 1.0);
    EXPECT_THROW(r_precision(f, randn(9, 4, rng), 1, rng), ValidationError);
}

TEST(MultimodalDistance, Examples) {
    Rng rng(11);
    const Mat m = randn(7, 3, rng);
    EXPECT_EQ(multimodal_distance(m, m), 0.0);
    Mat shifted = m;
    shifted.rowwise() += RowVec::Constant(3, 2.0);
    EXPECT_NEAR(multimodal_distance(m, shifted), std::sqrt(12.0), 1e-12);
    Mat a(1, 2);
    Mat b(1, 2);
    a << 0, 0;
    b << 0, 2;
    EXPECT_DOUBLE_EQ(multimodal_distance(a, b), 2.0);
}

TEST(Multimodality, Examples) {
    Rng rng(12);
    const std::vector<Mat> same{Mat::Ones(3, 4), Mat::Zero(5, 4)};
    EXPECT_EQ(multimodality(same, 0, rng), 0.0);
    Mat pair(2, 2);
    pair << 1, 1, 4, 5;
    const std::vector<Mat> one{pair};
    EXPECT_NEAR(multimodality(one, 0, rng), 5.0, 1e-12);

    const Mat g = randn(6, 4, rng);
    Eigen::PermutationMatrix<Eigen::Dynamic> perm(6);
    perm.indices() << 5, 3, 1, 0, 2, 4;
    const Mat q = random_rotation(4, rng);
    const std::vector<Mat> base{g};
    const std::vector<Mat> permuted{perm * g};
    const std::vector<Mat> rotated{g * q};
    const double ref = multimodality(base, 0, rng);
    EXPECT_NEAR(multimodality(permuted, 0, rng), ref, 1e-12);
    EXPECT_NEAR(multimodality(rotated, 0, rng), ref, 1e-9);
}

#include "mcm/metrics.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace mcm::metrics {

void BeatTrack::validate() const {
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (!(times[i] >= 0.0) || !std::isfinite(times[i])) throw ValidationError("beat times must be finite and >= 0");
        if (i > 0 && !(times[i] > times[i - 1])) throw ValidationError("beat times must be strictly increasing");
    }
}

KineticFeature kinetic_features(const JointPositions& pos, double fps) {
    if (pos.frames < 2) throw ValidationError("kinetic_features needs at least 2 frames");
    if (!(fps > 0.0)) throw ValidationError("fps must be positive");
    Vec acc = Vec::Zero(3 * pos.joints);
    for (int t = 0; t + 1 < pos.frames; ++t) {
        const RowVec v = (pos.data.row(t + 1) - pos.data.row(t)) * fps;
        acc += 0.5 * v.array().square().matrix().transpose();
    }
    return {acc / static_cast<double>(pos.frames - 1)};
}

GaussianStats gaussian_stats(const Mat& features) {
    if (features.rows() < 2) throw ValidationError("gaussian_stats needs at least 2 samples");
    GaussianStats s;
    s.n = static_cast<int>(features.rows());
    s.mean = features.colwise().mean().transpose();
    const Mat centered = features.rowwise() - s.mean.transpose();
    s.cov = (centered.transpose() * centered) / static_cast<double>(s.n - 1);
    return s;
}

namespace {

Mat psd_sqrt(const Mat& m) {
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.transpose()));
    const Vec roots = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * roots.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
    const Eigen::Index k = a.mean.size();
    if (b.mean.size() != k || a.cov.rows() != k || a.cov.cols() != k || b.cov.rows() != k || b.cov.cols() != k) {
        throw DimensionError("frechet_distance: statistics of different dimension");
    }
    // Tr((Sa Sb)^1/2) = Tr((Sa^1/2 Sb Sa^1/2)^1/2), the inner matrix being symmetric PSD.
    const Mat ra = psd_sqrt(a.cov);
    const Mat inner = ra * b.cov * ra;
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (inner + inner.transpose()), Eigen::EigenvaluesOnly);
    const double tr_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
    const double d = (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2.0 * tr_sqrt;
    return std::max(d, 0.0);
}

namespace {

double mean_pairwise(const Mat& f, int num_pairs, Rng& rng) {
    const Eigen::Index n = f.rows();
    if (num_pairs <= 0) {
        double sum = 0.0;
        long count = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = i + 1; j < n; ++j, ++count) sum += (f.row(i) - f.row(j)).norm();
        }
        return sum / static_cast<double>(count);
    }
    std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
    std::uniform_int_distribution<Eigen::Index> second(0, n - 2);
    double sum = 0.0;
    for (int p = 0; p < num_pairs; ++p) {
        const Eigen::Index i = first(rng);
        Eigen::Index j = second(rng);
        if (j >= i) ++j;
        sum += (f.row(i) - f.row(j)).norm();
    }
    return sum / num_pairs;
}

}  // namespace

double diversity(const Mat& features, int num_pairs, Rng& rng) {
    if (features.rows() < 2) throw ValidationError("diversity needs at least 2 feature rows");
    return mean_pairwise(features, num_pairs, rng);
}

BeatTrack kinematic_beats(const JointPositions& pos, double fps, int smooth_window) {
    if (smooth_window < 1 || smooth_window % 2 == 0) throw ValidationError("smooth_window must be a positive odd integer");
    if (!(fps > 0.0)) throw ValidationError("fps must be positive");
    BeatTrack track;
    if (pos.frames < 3) return track;

    const int n = pos.frames - 1;
    Vec speed(n);
    for (int t = 0; t < n; ++t) {
        double s = 0.0;
        for (int j = 0; j < pos.joints; ++j) s += ((pos.joint(t + 1, j) - pos.joint(t, j)) * fps).norm();
        speed[t] = s / pos.joints;
    }
    const int half = smooth_window / 2;
    Vec smooth(n);
    for (int t = 0; t < n; ++t) {
        const int lo = std::max(0, t - half);
        const int hi = std::min(n - 1, t + half);
        smooth[t] = speed.segment(lo, hi - lo + 1).mean();
    }
    for (int t = 1; t + 1 < n; ++t) {
        if (smooth[t - 1] > smooth[t] && smooth[t] < smooth[t + 1]) track.times.push_back(t / fps);
    }
    return track;
}

double beat_align_score(const BeatTrack& music, const BeatTrack& dance, double sigma) {
    if (music.empty()) throw EmptyTrackError(EmptyTrackError::Reason::kEmptyMusic, "beat alignment: music track is empty");
    if (dance.empty()) throw EmptyTrackError(EmptyTrackError::Reason::kEmptyDance, "beat alignment: dance track is empty");
    if (!(sigma > 0.0)) throw ValidationError("beat alignment: sigma must be positive");
    double total = 0.0;
    for (double tm : music.times) {
        double best = std::numeric_limits<double>::infinity();
        for (double td : dance.times) best = std::min(best, (td - tm) * (td - tm));
        total += std::exp(-best / (2.0 * sigma * sigma));
    }
    return total / static_cast<double>(music.times.size());
}

RPrecisionResult r_precision(const Mat& motion, const Mat& text, int k_top, Rng& rng, int batch) {
    if (motion.rows() != text.rows() || motion.cols() != text.cols()) {
        throw DimensionError("r_precision: motion and text features differ in shape");
    }
    if (motion.rows() < 1) throw ValidationError("r_precision: no items");
    if (k_top < 1 || batch < 1) throw ValidationError("r_precision: k_top and batch must be >= 1");

    const auto n = static_cast<int>(motion.rows());
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    RPrecisionResult res;
    int size = batch;
    int batches = n / batch;
    if (batches == 0) {
        res.short_batch = true;
        size = n;
        batches = 1;
    }
    long hits = 0;
    for (int b = 0; b < batches; ++b) {
        for (int i = 0; i < size; ++i) {
            const int qi = order[static_cast<std::size_t>(b * size + i)];
            const double own = (motion.row(qi) - text.row(qi)).norm();
            int closer = 0;
            for (int j = 0; j < size; ++j) {
                if (j == i) continue;
                const int cj = order[static_cast<std::size_t>(b * size + j)];
                if ((motion.row(qi) - text.row(cj)).norm() < own) ++closer;
            }
            if (closer < k_top) ++hits;
        }
    }
    res.score = static_cast<double>(hits) / (static_cast<double>(batches) * size);
    return res;
}

double multimodal_distance(const Mat& motion, const Mat& text) {
    if (motion.rows() != text.rows() || motion.cols() != text.cols()) {
        throw DimensionError("multimodal_distance: motion and text features differ in shape");
    }
    if (motion.rows() < 1) throw ValidationError("multimodal_distance: no items");
    return (motion - text).rowwise().norm().mean();
}

double multimodality(std::span<const Mat> groups, int num_pairs, Rng& rng) {
    if (groups.empty()) throw ValidationError("multimodality: no groups");
    double total = 0.0;
    for (const Mat& g : groups) {
        if (g.rows() < 2) throw ValidationError("multimodality: each group needs at least 2 generations");
        total += mean_pairwise(g, num_pairs, rng);
    }
    return total / static_cast<double>(groups.size());
}

}  // namespace mcm::metrics

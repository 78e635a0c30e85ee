#pragma once

// Evaluation metrics: kinetic features, Frechet distance, diversity,
// multimodality, R-precision, multimodal distance, kinematic beats and the
// beat alignment score.

#include "mcm/error.hpp"
#include "mcm/types.hpp"

#include <random>
#include <span>
#include <vector>

namespace mcm::metrics {

using Rng = std::mt19937_64;

/// Beat-alignment inputs that cannot be scored; `reason` tells which track was empty.
class EmptyTrackError : public ValidationError {
public:
    enum class Reason { kEmptyMusic, kEmptyDance };
    EmptyTrackError(Reason r, const std::string& what) : ValidationError(what), reason_(r) {}
    Reason reason() const noexcept { return reason_; }

private:
    Reason reason_;
};

/// Per-joint, per-axis mean kinetic energy (3J values, m^2/s^2).
struct KineticFeature {
    Vec values;
};

/// Sorted, strictly increasing, non-negative beat times in seconds.
struct BeatTrack {
    std::vector<double> times;

    void validate() const;
    bool empty() const { return times.empty(); }
};

struct GaussianStats {
    Vec mean;
    Mat cov;
    int n = 0;
};

KineticFeature kinetic_features(const JointPositions& positions, double fps);

/// Mean and unbiased covariance of the rows of `features`.
GaussianStats gaussian_stats(const Mat& features);

double frechet_distance(const GaussianStats& a, const GaussianStats& b);

/// `num_pairs` <= 0 means the exhaustive mean over all unordered pairs.
double diversity(const Mat& features, int num_pairs, Rng& rng);

BeatTrack kinematic_beats(const JointPositions& positions, double fps, int smooth_window = 5);

double beat_align_score(const BeatTrack& music, const BeatTrack& dance, double sigma = 3.0);

struct RPrecisionResult {
    double score = 0.0;
    bool short_batch = false;  // fewer items than one full batch
};

/// Fraction of items whose own text feature ranks within the top `k_top`
/// of its (shuffled) batch by Euclidean distance.
RPrecisionResult r_precision(const Mat& motion_feats, const Mat& text_feats, int k_top, Rng& rng, int batch = 32);

double multimodal_distance(const Mat& motion_feats, const Mat& text_feats);

double multimodality(std::span<const Mat> groups, int num_pairs, Rng& rng);

}  // namespace mcm::metrics

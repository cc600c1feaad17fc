#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ude/motion/types.hpp"

namespace ude::metrics {

enum class FeatureKind { kinetic, geometric };

struct FeatureSet {
    FeatureKind kind = FeatureKind::kinetic;
    std::size_t dims = 0;
    std::vector<double> rows;  // N x dims

    std::size_t count() const { return dims == 0 ? 0 : rows.size() / dims; }
    void add(const std::vector<double>& row);
};

// Per joint: mean speed, speed std, mean acceleration magnitude (per second units).
std::vector<double> kinetic_features(const motion::MotionSequence& m);
// Time-averaged pairwise distances over the first min(J, 8) joints, mean
// per-frame bounding-box extents, root height mean and std.
std::vector<double> geometric_features(const motion::MotionSequence& m);
FeatureSet feature_set(FeatureKind kind, const std::vector<const motion::MotionSequence*>& motions);

struct Moments {
    std::vector<double> mean;
    std::vector<double> cov;  // dims x dims, unbiased
};
Moments moments(const FeatureSet& a);
double frechet_distance(const Moments& a, const Moments& b);
double fid(const FeatureSet& a, const FeatureSet& b);

double diversity(const FeatureSet& a);

// Local minima of the smoothed total joint speed, in seconds.
std::vector<double> detect_motion_beats(const motion::MotionSequence& m, std::size_t window = 5);
double beat_align(const std::vector<double>& motion_beats, const std::vector<double>& audio_beats, double sigma);

struct ReconAccuracy {
    double ape = 0.0, ave = 0.0, ape_root = 0.0, ave_root = 0.0;
};
ReconAccuracy recon_accuracy(const motion::MotionSequence& gen, const motion::MotionSequence& gt);

}  // namespace ude::metrics

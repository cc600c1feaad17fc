#include "ude/metrics/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "ude/errors.hpp"

namespace ude::metrics {

void FeatureSet::add(const std::vector<double>& row) {
    if (dims == 0) dims = row.size();
    if (row.size() != dims) throw DimensionError("feature row width differs from the set");
    for (double v : row)
        if (!std::isfinite(v)) throw MetricError("feature row is not finite");
    rows.insert(rows.end(), row.begin(), row.end());
}

std::vector<double> kinetic_features(const motion::MotionSequence& m) {
    const std::size_t t_len = m.length();
    if (t_len < 3) throw MetricError("kinetic features need at least 3 frames");
    std::vector<double> out(3 * m.joints, 0.0);
    for (std::size_t j = 0; j < m.joints; ++j) {
        std::vector<double> speed(t_len - 1);
        for (std::size_t t = 0; t + 1 < t_len; ++t) speed[t] = (m.joint(t + 1, j) - m.joint(t, j)).norm() * m.fps;
        double mean = 0.0;
        for (double s : speed) mean += s;
        mean /= static_cast<double>(speed.size());
        double var = 0.0;
        for (double s : speed) var += (s - mean) * (s - mean);
        var /= static_cast<double>(speed.size());
        double acc = 0.0;
        for (std::size_t t = 1; t + 1 < t_len; ++t) {
            acc += (m.joint(t + 1, j) - 2.0 * m.joint(t, j) + m.joint(t - 1, j)).norm() * m.fps * m.fps;
        }
        acc /= static_cast<double>(t_len - 2);
        out[j] = mean;
        out[m.joints + j] = std::sqrt(var);
        out[2 * m.joints + j] = acc;
    }
    return out;
}

std::vector<double> geometric_features(const motion::MotionSequence& m) {
    const std::size_t t_len = m.length();
    if (t_len < 1) throw MetricError("geometric features need at least 1 frame");
    const std::size_t sub = std::min<std::size_t>(m.joints, 8);
    std::vector<double> out;
    for (std::size_t a = 0; a < sub; ++a) {
        for (std::size_t b = a + 1; b < sub; ++b) {
            double d = 0.0;
            for (std::size_t t = 0; t < t_len; ++t) d += (m.joint(t, a) - m.joint(t, b)).norm();
            out.push_back(d / static_cast<double>(t_len));
        }
    }
    Eigen::Vector3d ext = Eigen::Vector3d::Zero();
    double h_mean = 0.0, h_sq = 0.0;
    for (std::size_t t = 0; t < t_len; ++t) {
        Eigen::Vector3d lo = m.joint(t, 0), hi = lo;
        for (std::size_t j = 1; j < m.joints; ++j) {
            lo = lo.cwiseMin(m.joint(t, j));
            hi = hi.cwiseMax(m.joint(t, j));
        }
        ext += hi - lo;
        const double h = m.joint(t, 0).y();
        h_mean += h;
        h_sq += h * h;
    }
    const double n = static_cast<double>(t_len);
    ext /= n;
    h_mean /= n;
    out.insert(out.end(), {ext.x(), ext.y(), ext.z(), h_mean, std::sqrt(std::max(h_sq / n - h_mean * h_mean, 0.0))});
    return out;
}

FeatureSet feature_set(FeatureKind kind, const std::vector<const motion::MotionSequence*>& motions) {
    FeatureSet fs;
    fs.kind = kind;
    for (const auto* m : motions) fs.add(kind == FeatureKind::kinetic ? kinetic_features(*m) : geometric_features(*m));
    return fs;
}

Moments moments(const FeatureSet& a) {
    const std::size_t n = a.count();
    const std::size_t d = a.dims;
    if (n < 2) throw MetricError("moments need at least 2 samples");
    Moments mo;
    mo.mean.assign(d, 0.0);
    mo.cov.assign(d * d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) mo.mean[j] += a.rows[i * d + j];
    for (double& v : mo.mean) v /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            const double dj = a.rows[i * d + j] - mo.mean[j];
            for (std::size_t k = 0; k < d; ++k) mo.cov[j * d + k] += dj * (a.rows[i * d + k] - mo.mean[k]);
        }
    }
    for (double& v : mo.cov) v /= static_cast<double>(n - 1);
    return mo;
}

double frechet_distance(const Moments& a, const Moments& b) {
    const std::size_t d = a.mean.size();
    if (b.mean.size() != d || a.cov.size() != d * d || b.cov.size() != d * d) {
        throw DimensionError("Frechet distance: dimension mismatch");
    }
    using Mat = Eigen::MatrixXd;
    const Eigen::Map<const Eigen::VectorXd> ma(a.mean.data(), static_cast<long>(d));
    const Eigen::Map<const Eigen::VectorXd> mb(b.mean.data(), static_cast<long>(d));
    const Mat sa = Eigen::Map<const Mat>(a.cov.data(), static_cast<long>(d), static_cast<long>(d));
    const Mat sb = Eigen::Map<const Mat>(b.cov.data(), static_cast<long>(d), static_cast<long>(d));
    // Tr((Sa Sb)^1/2) = Tr((Sa^1/2 Sb Sa^1/2)^1/2) = nuclear norm of Sa^1/2 Sb^1/2.
    // Singular values avoid square-rooting eigenvalue noise near zero.
    auto psd_root = [](const Mat& s) {
        Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (s + s.transpose()));
        const Eigen::VectorXd l = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
        return Mat(es.eigenvectors() * l.asDiagonal() * es.eigenvectors().transpose());
    };
    const Mat cross = psd_root(sa) * psd_root(sb);
    Eigen::JacobiSVD<Mat> svd(cross);
    const double tr_root = svd.singularValues().sum();
    return (ma - mb).squaredNorm() + sa.trace() + sb.trace() - 2.0 * tr_root;
}

double fid(const FeatureSet& a, const FeatureSet& b) {
    if (a.kind != b.kind) throw MetricError("FID between different feature kinds");
    if (a.dims != b.dims) throw DimensionError("FID: feature widths differ");
    return frechet_distance(moments(a), moments(b));
}

double diversity(const FeatureSet& a) {
    const std::size_t n = a.count();
    if (n < 2) throw MetricError("diversity needs at least 2 samples");
    const std::size_t d = a.dims;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                const double diff = a.rows[i * d + k] - a.rows[j * d + k];
                s += diff * diff;
            }
            total += std::sqrt(s);
        }
    }
    return total / (static_cast<double>(n) * static_cast<double>(n - 1) / 2.0);
}

std::vector<double> detect_motion_beats(const motion::MotionSequence& m, std::size_t window) {
    const std::size_t t_len = m.length();
    if (t_len < 5) throw MetricError("beat detection needs at least 5 frames");
    std::vector<double> speed(t_len, 0.0);
    for (std::size_t t = 0; t < t_len; ++t) {
        const std::size_t a = t == 0 ? 0 : t - 1;
        const std::size_t b = t + 1 == t_len ? t : t + 1;
        const double dt = static_cast<double>(b - a) / m.fps;
        for (std::size_t j = 0; j < m.joints; ++j) speed[t] += (m.joint(b, j) - m.joint(a, j)).norm() / dt;
    }
    const std::size_t half = window / 2;
    std::vector<double> env(t_len, 0.0);
    double mx = 0.0;
    for (std::size_t t = 0; t < t_len; ++t) {
        const std::size_t lo = t >= half ? t - half : 0;
        const std::size_t hi = std::min(t_len - 1, t + half);
        double s = 0.0;
        for (std::size_t k = lo; k <= hi; ++k) s += speed[k];
        env[t] = s / static_cast<double>(hi - lo + 1);
        mx = std::max(mx, env[t]);
    }
    const double tol = 1e-9 * mx;
    std::vector<double> beats;
    for (std::size_t t = 1; t + 1 < t_len; ++t) {
        // Strictly below the left neighbour; a flat bottom reports its first frame.
        if (env[t] < env[t - 1] - tol && env[t] <= env[t + 1] + tol && env[t] < env[t + 1] + tol) {
            bool rises = env[t + 1] > env[t] + tol;
            for (std::size_t k = t + 1; !rises && k + 1 < t_len && std::abs(env[k] - env[t]) <= tol; ++k)
                rises = env[k + 1] > env[t] + tol;
            if (rises) beats.push_back(static_cast<double>(t) / m.fps);
        }
    }
    return beats;
}

double beat_align(const std::vector<double>& motion_beats, const std::vector<double>& audio_beats, double sigma) {
    if (audio_beats.empty()) throw MetricError("beat alignment needs at least one audio beat");
    if (!(sigma > 0.0)) throw MetricError("sigma must be positive");
    if (motion_beats.empty()) return 0.0;
    double total = 0.0;
    for (double ta : audio_beats) {
        double best = std::numeric_limits<double>::infinity();
        for (double tm : motion_beats) best = std::min(best, (tm - ta) * (tm - ta));
        total += std::exp(-best / (2.0 * sigma * sigma));
    }
    return total / static_cast<double>(audio_beats.size());
}

ReconAccuracy recon_accuracy(const motion::MotionSequence& gen, const motion::MotionSequence& gt) {
    if (gen.joints != gt.joints || gen.length() != gt.length()) throw DimensionError("recon_accuracy: shape mismatch");
    const std::size_t t_len = gt.length();
    const std::size_t jn = gt.joints;
    if (t_len == 0 || jn == 0) throw MetricError("recon_accuracy on empty motion");
    std::vector<double> ape_j(jn, 0.0), ave_j(jn, 0.0);
    for (std::size_t j = 0; j < jn; ++j) {
        Eigen::Vector3d mg = Eigen::Vector3d::Zero(), mt = Eigen::Vector3d::Zero();
        for (std::size_t t = 0; t < t_len; ++t) {
            ape_j[j] += (gen.joint(t, j) - gt.joint(t, j)).norm();
            mg += gen.joint(t, j);
            mt += gt.joint(t, j);
        }
        ape_j[j] /= static_cast<double>(t_len);
        mg /= static_cast<double>(t_len);
        mt /= static_cast<double>(t_len);
        double vg = 0.0, vt = 0.0;
        for (std::size_t t = 0; t < t_len; ++t) {
            vg += (gen.joint(t, j) - mg).squaredNorm();
            vt += (gt.joint(t, j) - mt).squaredNorm();
        }
        ave_j[j] = std::abs(vg - vt) / static_cast<double>(t_len);
    }
    ReconAccuracy r;
    for (std::size_t j = 0; j < jn; ++j) {
        r.ape += ape_j[j];
        r.ave += ave_j[j];
    }
    r.ape /= static_cast<double>(jn);
    r.ave /= static_cast<double>(jn);
    r.ape_root = ape_j[0];
    r.ave_root = ave_j[0];
    return r;
}

}  // namespace ude::metrics

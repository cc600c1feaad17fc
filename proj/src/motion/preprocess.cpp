#include "ude/motion/preprocess.hpp"

#include <cmath>

#include "ude/errors.hpp"

namespace ude::motion {

namespace {

void check_hips(const MotionSequence& m, int l, int r) {
    if (m.length() == 0) throw PreprocessError("normalize_heading needs at least one frame");
    const auto j = static_cast<int>(m.joints);
    if (l < 0 || r < 0 || l >= j || r >= j || l == r) throw PreprocessError("invalid hip joint indices");
}

}  // namespace

double frame_heading(const MotionSequence& m, std::size_t t, int left_hip, int right_hip) {
    check_hips(m, left_hip, right_hip);
    const Eigen::Vector3d across = m.joint(t, static_cast<std::size_t>(right_hip)) -
                                   m.joint(t, static_cast<std::size_t>(left_hip));
    // forward = up x across, on the ground plane
    const double fx = across.z();
    const double fz = -across.x();
    if (std::hypot(fx, fz) < 1e-9) {
        throw PreprocessError("degenerate frame " + std::to_string(t) + ": hip axis is vertical");
    }
    return std::atan2(-fz, fx);
}

MotionSequence rotate_about_vertical(const MotionSequence& m, double angle) {
    MotionSequence out = m;
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    for (std::size_t i = 0; i + 2 < out.frames.size(); i += 3) {
        const double x = m.frames[i];
        const double z = m.frames[i + 2];
        out.frames[i] = c * x + s * z;
        out.frames[i + 2] = -s * x + c * z;
    }
    return out;
}

MotionSequence normalize_heading(const MotionSequence& m, int left_hip, int right_hip) {
    const double heading = frame_heading(m, 0, left_hip, right_hip);
    MotionSequence centered = m;
    const double x0 = m.frames[0];
    const double z0 = m.frames[2];
    for (std::size_t i = 0; i + 2 < centered.frames.size(); i += 3) {
        centered.frames[i] -= x0;
        centered.frames[i + 2] -= z0;
    }
    MotionSequence out = rotate_about_vertical(centered, -heading);
    // Exact values for the recentred root avoid -0 / rounding drift at the origin.
    out.frames[0] = 0.0;
    out.frames[2] = 0.0;
    return out;
}

JointMapping JointMapping::identity(std::size_t joints) {
    JointMapping mp;
    mp.rules.resize(joints);
    for (std::size_t j = 0; j < joints; ++j) mp.rules[j] = {{static_cast<int>(j), 1.0}};
    return mp;
}

JointMapping JointMapping::by_name(const Skeleton& src, const Skeleton& dst) {
    JointMapping mp;
    mp.rules.resize(dst.joint_count());
    for (std::size_t j = 0; j < dst.joint_count(); ++j) {
        const int s = src.index_of(dst.names[j]);
        if (s >= 0) mp.rules[j] = {{s, 1.0}};
    }
    return mp;
}

MotionSequence unify_joints(const MotionSequence& m, const Skeleton& src, const Skeleton& dst,
                            const JointMapping& mapping) {
    if (m.joints != src.joint_count()) {
        throw DimensionError("motion has " + std::to_string(m.joints) + " joints, source skeleton " +
                             std::to_string(src.joint_count()));
    }
    if (mapping.rules.size() != dst.joint_count()) {
        throw MappingError("mapping has " + std::to_string(mapping.rules.size()) + " rules for " +
                           std::to_string(dst.joint_count()) + " destination joints");
    }
    for (std::size_t j = 0; j < mapping.rules.size(); ++j) {
        const auto& rule = mapping.rules[j];
        if (rule.empty()) throw MappingError("destination joint '" + dst.names[j] + "' is unmapped");
        double total = 0.0;
        for (const auto& [s, w] : rule) {
            if (s < 0 || static_cast<std::size_t>(s) >= src.joint_count()) {
                throw MappingError("destination joint '" + dst.names[j] + "' references missing source joint");
            }
            if (!(w >= 0.0)) throw MappingError("negative weight for joint '" + dst.names[j] + "'");
            total += w;
        }
        if (std::abs(total - 1.0) > 1e-9) {
            throw MappingError("weights for joint '" + dst.names[j] + "' do not sum to 1");
        }
    }
    MotionSequence out(m.fps, dst.joint_count(), m.length());
    for (std::size_t t = 0; t < m.length(); ++t) {
        for (std::size_t j = 0; j < mapping.rules.size(); ++j) {
            const auto& rule = mapping.rules[j];
            Eigen::Vector3d p = Eigen::Vector3d::Zero();
            if (rule.size() == 1) {
                p = m.joint(t, static_cast<std::size_t>(rule[0].first));
            } else {
                for (const auto& [s, w] : rule) p += w * m.joint(t, static_cast<std::size_t>(s));
            }
            out.set_joint(t, j, p);
        }
    }
    return out;
}

JointMapping smpl22_to_smpl24() {
    const Skeleton src = Skeleton::smpl22();
    const Skeleton dst = Skeleton::smpl24();
    JointMapping mp = JointMapping::by_name(src, dst);
    mp.set_copy(dst.index_of("left_hand"), src.index_of("left_wrist"));
    mp.set_copy(dst.index_of("right_hand"), src.index_of("right_wrist"));
    return mp;
}

}  // namespace ude::motion

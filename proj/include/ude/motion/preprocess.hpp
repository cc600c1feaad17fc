#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ude/motion/types.hpp"

namespace ude::motion {

// Rotates about +Y so that frame 0 faces +X and moves frame-0 root XZ to the
// origin. Heading is taken from the hip axis (joints 1 and 2 by default).
MotionSequence normalize_heading(const MotionSequence& m, int left_hip = 1, int right_hip = 2);

// Heading angle of a frame: rotation about +Y that maps +X to the facing direction.
double frame_heading(const MotionSequence& m, std::size_t t, int left_hip = 1, int right_hip = 2);

MotionSequence rotate_about_vertical(const MotionSequence& m, double angle);

// Each destination joint is a convex combination of source joints.
struct JointMapping {
    std::vector<std::vector<std::pair<int, double>>> rules;  // indexed by dst joint

    static JointMapping identity(std::size_t joints);
    static JointMapping by_name(const Skeleton& src, const Skeleton& dst);  // unmatched names stay empty
    void set_copy(int dst, int src) { rules.at(static_cast<std::size_t>(dst)) = {{src, 1.0}}; }
    void set_midpoint(int dst, int a, int b) { rules.at(static_cast<std::size_t>(dst)) = {{a, 0.5}, {b, 0.5}}; }
};

MotionSequence unify_joints(const MotionSequence& m, const Skeleton& src, const Skeleton& dst,
                            const JointMapping& mapping);

// SMPL 22 -> 24: hands are extrapolated along the forearm direction.
JointMapping smpl22_to_smpl24();

}  // namespace ude::motion

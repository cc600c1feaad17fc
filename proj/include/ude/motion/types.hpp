#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ude::motion {

// Joint hierarchy with rest-pose offsets in meters; Y is up, the rest pose
// faces +X with the body's left side towards -Z.
struct Skeleton {
    std::vector<std::string> names;
    std::vector<int> parents;  // parents[0] == -1
    std::vector<Eigen::Vector3d> offsets;

    std::size_t joint_count() const { return names.size(); }
    int index_of(const std::string& name) const;  // -1 when absent
    void validate() const;
    double bone_length(std::size_t joint) const { return offsets[joint].norm(); }

    // pelvis, left_hip, right_hip, chest, left_wrist, right_wrist, left_ankle, right_ankle
    static Skeleton desk8();
    static Skeleton smpl22();
    static Skeleton smpl24();
};

// T x (J*3) joint positions, root joint first in every frame.
struct MotionSequence {
    double fps = 20.0;
    std::size_t joints = 0;
    std::vector<double> frames;

    MotionSequence() = default;
    MotionSequence(double fps, std::size_t joints, std::size_t length);

    std::size_t length() const { return joints == 0 ? 0 : frames.size() / (joints * 3); }
    std::size_t width() const { return joints * 3; }
    std::span<const double> frame(std::size_t t) const { return {frames.data() + t * width(), width()}; }
    Eigen::Vector3d joint(std::size_t t, std::size_t j) const;
    void set_joint(std::size_t t, std::size_t j, const Eigen::Vector3d& p);
};

struct AudioFeatureSequence {
    double frame_rate = 20.0;
    std::size_t dims = 0;
    std::vector<double> features;  // T x dims
    std::optional<std::vector<double>> beat_times;  // seconds

    std::size_t length() const { return dims == 0 ? 0 : features.size() / dims; }
    std::span<const double> row(std::size_t t) const { return {features.data() + t * dims, dims}; }
};

// Closed word list; id 0 is reserved for unknown words.
class Vocabulary {
public:
    static constexpr int kUnk = 0;
    static constexpr const char* kUnkWord = "<unk>";

    Vocabulary();
    explicit Vocabulary(std::vector<std::string> words);  // words[0] must be "<unk>"

    int id(const std::string& word) const;
    const std::string& word(int id) const { return words_.at(static_cast<std::size_t>(id)); }
    std::size_t size() const { return words_.size(); }
    const std::vector<std::string>& words() const { return words_; }
    int add(const std::string& word);

private:
    std::vector<std::string> words_;
};

struct TextPrompt {
    std::string raw;
    std::vector<int> ids;
    std::size_t unknown_count = 0;
};

// Lowercase, split on whitespace and punctuation.
std::vector<std::string> split_words(const std::string& raw);
TextPrompt tokenize(const std::string& raw, const Vocabulary& vocab);

enum class Modality { text, audio };
enum class Split { train, test };

std::string to_string(Modality m);
std::string to_string(Split s);
Modality parse_modality(const std::string& s);
Split parse_split(const std::string& s);

}  // namespace ude::motion

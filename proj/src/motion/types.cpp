#include "ude/motion/types.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "ude/errors.hpp"

namespace ude::motion {

int Skeleton::index_of(const std::string& name) const {
    const auto it = std::find(names.begin(), names.end(), name);
    return it == names.end() ? -1 : static_cast<int>(it - names.begin());
}

void Skeleton::validate() const {
    const std::size_t j = names.size();
    if (j == 0) throw ContractError("skeleton has no joints");
    if (parents.size() != j || offsets.size() != j) throw ContractError("skeleton arrays differ in length");
    if (parents[0] != -1) throw ContractError("skeleton joint 0 must be the root");
    for (std::size_t i = 1; i < j; ++i) {
        // Parents precede children, which also rules out cycles.
        if (parents[i] < 0 || static_cast<std::size_t>(parents[i]) >= i) {
            throw ContractError("skeleton joint '" + names[i] + "' has invalid parent");
        }
    }
    for (const auto& o : offsets)
        if (!o.allFinite()) throw ContractError("skeleton offset is not finite");
}

Skeleton Skeleton::desk8() {
    Skeleton s;
    s.names = {"pelvis", "left_hip", "right_hip", "chest", "left_wrist", "right_wrist", "left_ankle", "right_ankle"};
    s.parents = {-1, 0, 0, 0, 3, 3, 1, 2};
    s.offsets = {{0.0, 0.95, 0.0},  {0.0, 0.0, -0.1},   {0.0, 0.0, 0.1},   {0.0, 0.5, 0.0},
                 {0.0, -0.5, -0.2}, {0.0, -0.5, 0.2},   {0.0, -0.85, 0.0}, {0.0, -0.85, 0.0}};
    return s;
}

Skeleton Skeleton::smpl24() {
    Skeleton s;
    s.names = {"pelvis",        "left_hip",       "right_hip",      "spine1",     "left_knee",   "right_knee",
               "spine2",        "left_ankle",     "right_ankle",    "spine3",     "left_foot",   "right_foot",
               "neck",          "left_collar",    "right_collar",   "head",       "left_shoulder", "right_shoulder",
               "left_elbow",    "right_elbow",    "left_wrist",     "right_wrist", "left_hand",  "right_hand"};
    s.parents = {-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21};
    s.offsets = {{0.0, 0.93, 0.0},   {0.0, -0.08, -0.07}, {0.0, -0.08, 0.07}, {0.0, 0.11, 0.0},
                 {0.0, -0.38, -0.01}, {0.0, -0.38, 0.01}, {0.0, 0.13, 0.0},   {0.0, -0.40, 0.0},
                 {0.0, -0.40, 0.0},   {0.0, 0.05, 0.0},   {0.12, -0.05, 0.0}, {0.12, -0.05, 0.0},
                 {0.0, 0.21, 0.0},    {0.0, 0.12, -0.07}, {0.0, 0.12, 0.07},  {0.03, 0.09, 0.0},
                 {0.0, 0.03, -0.11},  {0.0, 0.03, 0.11},  {0.0, -0.25, -0.02}, {0.0, -0.25, 0.02},
                 {0.0, -0.25, 0.0},   {0.0, -0.25, 0.0},  {0.0, -0.08, 0.0},  {0.0, -0.08, 0.0}};
    return s;
}

Skeleton Skeleton::smpl22() {
    Skeleton s = smpl24();
    s.names.resize(22);
    s.parents.resize(22);
    s.offsets.resize(22);
    return s;
}

MotionSequence::MotionSequence(double fps_, std::size_t joints_, std::size_t length)
    : fps(fps_), joints(joints_), frames(length * joints_ * 3, 0.0) {}

Eigen::Vector3d MotionSequence::joint(std::size_t t, std::size_t j) const {
    const double* p = frames.data() + t * width() + j * 3;
    return {p[0], p[1], p[2]};
}

void MotionSequence::set_joint(std::size_t t, std::size_t j, const Eigen::Vector3d& p) {
    double* q = frames.data() + t * width() + j * 3;
    q[0] = p.x();
    q[1] = p.y();
    q[2] = p.z();
}

Vocabulary::Vocabulary() : words_{kUnkWord} {}

Vocabulary::Vocabulary(std::vector<std::string> words) : words_(std::move(words)) {
    if (words_.empty() || words_.front() != kUnkWord) words_.insert(words_.begin(), kUnkWord);
}

int Vocabulary::id(const std::string& word) const {
    const auto it = std::find(words_.begin(), words_.end(), word);
    return it == words_.end() ? kUnk : static_cast<int>(it - words_.begin());
}

int Vocabulary::add(const std::string& word) {
    const int existing = id(word);
    if (existing != kUnk || word == kUnkWord) return existing;
    words_.push_back(word);
    return static_cast<int>(words_.size() - 1);
}

std::vector<std::string> split_words(const std::string& raw) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : raw) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isspace(c) || std::ispunct(c)) {
            if (!cur.empty()) out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

TextPrompt tokenize(const std::string& raw, const Vocabulary& vocab) {
    TextPrompt p;
    p.raw = raw;
    for (const auto& w : split_words(raw)) {
        const int id = vocab.id(w);
        if (id == Vocabulary::kUnk) ++p.unknown_count;
        p.ids.push_back(id);
    }
    return p;
}

std::string to_string(Modality m) { return m == Modality::text ? "text" : "audio"; }
std::string to_string(Split s) { return s == Split::train ? "train" : "test"; }

Modality parse_modality(const std::string& s) {
    if (s == "text") return Modality::text;
    if (s == "audio") return Modality::audio;
    throw ContractError("unknown modality '" + s + "'");
}

Split parse_split(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "test") return Split::test;
    throw FormatError("unknown split '" + s + "'");
}

}  // namespace ude::motion

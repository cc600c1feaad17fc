#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ude/motion/types.hpp"

namespace ude {

// Writes to a temporary sibling and renames over the target.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

// Shortest decimal that parses back to the same double.
std::string format_double(double v);

}  // namespace ude

namespace ude::motion {

std::string serialize_motion(const MotionSequence& m);
MotionSequence parse_motion(const std::string& text, const std::string& source = "<memory>");
void save_motion(const std::filesystem::path& path, const MotionSequence& m);
MotionSequence load_motion(const std::filesystem::path& path);

std::string serialize_features(const AudioFeatureSequence& a);
AudioFeatureSequence parse_features(const std::string& text, const std::string& source = "<memory>");
void save_features(const std::filesystem::path& path, const AudioFeatureSequence& a);
AudioFeatureSequence load_features(const std::filesystem::path& path);

void save_vocabulary(const std::filesystem::path& path, const Vocabulary& v);
Vocabulary load_vocabulary(const std::filesystem::path& path);

struct ManifestEntry {
    std::string id;
    Modality modality = Modality::text;
    std::string motion;  // relative to the manifest directory
    std::string cond;
    Split split = Split::train;
};

std::string serialize_manifest(const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> parse_manifest(const std::string& text, const std::string& source = "<memory>");

struct Sample {
    std::string id;
    Modality modality = Modality::text;
    Split split = Split::train;
    MotionSequence motion;
    TextPrompt text;              // text samples
    AudioFeatureSequence audio;   // audio samples
};

struct Dataset {
    Vocabulary vocab;
    std::vector<Sample> samples;

    std::vector<const Sample*> select(Split split) const;
    std::vector<const Sample*> select(Split split, Modality modality) const;
};

inline constexpr const char* kManifestName = "manifest.jsonl";
inline constexpr const char* kVocabularyName = "vocab.txt";

// Loads manifest.jsonl plus vocab.txt from a dataset directory; every
// referenced file must exist.
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace ude::motion

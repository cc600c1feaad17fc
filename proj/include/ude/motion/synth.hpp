#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ude/motion/audio.hpp"
#include "ude/motion/io.hpp"
#include "ude/motion/types.hpp"
#include "ude/numerics/rng.hpp"

namespace ude::motion {

const std::vector<std::string>& text_families();
const std::vector<std::string>& dance_genres();
bool is_dance_genre(const std::string& family);

struct TextCombo {
    std::string family;
    std::size_t variant = 0;
    std::size_t speed = 0;  // 0 slowly, 1 normal, 2 quickly
    std::string description;
};

// Every (variant, speed) description of a text family, in a fixed order.
std::vector<TextCombo> text_combos(const std::string& family);
// Closed vocabulary over all text families.
Vocabulary synth_vocabulary();

struct SynthConfig {
    double fps = 20.0;
    std::size_t frames = 64;
    std::size_t train_count = 512;
    std::size_t test_count = 128;
    std::map<std::string, int> counts;  // family -> relative weight; 0 removes it
    double sample_rate = 8000.0;
    double beat_jitter = 0.1;       // relative tempo jitter for dance clips
    double amplitude_jitter = 0.15;
    AudioFeatureConfig audio;

    SynthConfig();
    void validate() const;
};

struct DanceClip {
    MotionSequence motion;
    std::vector<double> waveform;
    std::vector<double> beats;  // every constructed beat, seconds
    double beat_hz = 0.0;
};

// Desk skeleton forward kinematics for one text-family combo.
MotionSequence synth_text_motion(const TextCombo& combo, double fps, std::size_t frames, double amplitude_jitter,
                                 Rng& rng);
DanceClip synth_dance(const std::string& genre, double fps, std::size_t frames, double sample_rate, double beat_hz,
                      Rng& rng);
double genre_beat_hz(const std::string& genre);

struct SynthSample {
    ManifestEntry entry;
    std::string family;
    MotionSequence motion;
    std::string text;
    AudioFeatureSequence audio;
};

struct SynthResult {
    Vocabulary vocab;
    std::vector<SynthSample> samples;
};

SynthResult synth_samples(const SynthConfig& cfg, std::uint64_t seed);
void write_dataset(const std::filesystem::path& dir, const SynthResult& result);
// Same samples as write_dataset + load_dataset, without touching disk.
Dataset to_dataset(const SynthResult& result);
// synth_samples + write_dataset; returns the manifest entries.
std::vector<ManifestEntry> synth_dataset(const SynthConfig& cfg, std::uint64_t seed, const std::filesystem::path& dir);

}  // namespace ude::motion

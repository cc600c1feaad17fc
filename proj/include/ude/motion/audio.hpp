#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ude/motion/types.hpp"

namespace ude::motion {

struct AudioFeatureConfig {
    double frame_rate = 20.0;   // hop = sample_rate / frame_rate
    std::size_t window = 512;   // FFT size, Hann window
    std::size_t mel_bands = 26;
    std::size_t mfcc_count = 8;
    double fmin = 0.0;
    double fmax = 0.0;          // 0 means Nyquist

    std::size_t feature_dims() const { return mfcc_count * 2 + 1; }
};

// Columns: MFCC[0..m), delta MFCC[m..2m), onset strength (last).
AudioFeatureSequence extract_audio_features(std::span<const double> waveform, double sample_rate,
                                            const AudioFeatureConfig& cfg = {});

// Regression delta with half-width n, clamped at the edges.
std::vector<double> delta_features(const std::vector<double>& rows, std::size_t cols, std::size_t n = 2);

// Nearest-frame resampling so feature rows line up 1:1 with motion frames.
AudioFeatureSequence resample_features(const AudioFeatureSequence& a, double target_rate, std::size_t frames);

// Frames whose onset is a strict local maximum above `rel` times the maximum onset.
std::vector<std::size_t> onset_peaks(const AudioFeatureSequence& a, double rel = 0.3);

}  // namespace ude::motion

#include "ude/motion/audio.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <unsupported/Eigen/FFT>

#include "ude/errors.hpp"

namespace ude::motion {

namespace {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Triangular HTK-style filters over the rfft bins.
std::vector<std::vector<double>> mel_filterbank(std::size_t bands, std::size_t nfft, double rate, double fmin,
                                                double fmax) {
    const std::size_t bins = nfft / 2 + 1;
    const double lo = hz_to_mel(fmin);
    const double hi = hz_to_mel(fmax);
    std::vector<double> edges(bands + 2);
    for (std::size_t i = 0; i < edges.size(); ++i) {
        edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bands + 1));
    }
    std::vector<std::vector<double>> fb(bands, std::vector<double>(bins, 0.0));
    for (std::size_t b = 0; b < bands; ++b) {
        const double left = edges[b];
        const double center = edges[b + 1];
        const double right = edges[b + 2];
        for (std::size_t k = 0; k < bins; ++k) {
            const double f = rate * static_cast<double>(k) / static_cast<double>(nfft);
            double w = 0.0;
            if (f > left && f <= center) w = (f - left) / (center - left);
            else if (f > center && f < right) w = (right - f) / (right - center);
            fb[b][k] = w;
        }
    }
    return fb;
}

}  // namespace

std::vector<double> delta_features(const std::vector<double>& rows, std::size_t cols, std::size_t n) {
    if (cols == 0) return {};
    const std::size_t t_len = rows.size() / cols;
    std::vector<double> out(rows.size(), 0.0);
    double denom = 0.0;
    for (std::size_t k = 1; k <= n; ++k) denom += 2.0 * static_cast<double>(k * k);
    if (denom == 0.0 || t_len == 0) return out;
    const auto at = [&](long t, std::size_t c) {
        const long clamped = std::clamp(t, 0L, static_cast<long>(t_len) - 1);
        return rows[static_cast<std::size_t>(clamped) * cols + c];
    };
    for (std::size_t t = 0; t < t_len; ++t) {
        for (std::size_t c = 0; c < cols; ++c) {
            double acc = 0.0;
            for (std::size_t k = 1; k <= n; ++k) {
                const long tl = static_cast<long>(t);
                const long kl = static_cast<long>(k);
                acc += static_cast<double>(k) * (at(tl + kl, c) - at(tl - kl, c));
            }
            out[t * cols + c] = acc / denom;
        }
    }
    return out;
}

AudioFeatureSequence extract_audio_features(std::span<const double> waveform, double sample_rate,
                                            const AudioFeatureConfig& cfg) {
    if (!(sample_rate > 0.0)) throw AudioError("sample rate must be positive");
    if (!(cfg.frame_rate > 0.0)) throw AudioError("frame rate must be positive");
    if (cfg.window < 2 || cfg.mel_bands == 0 || cfg.mfcc_count == 0 || cfg.mfcc_count > cfg.mel_bands) {
        throw AudioError("invalid audio feature configuration");
    }
    if (waveform.size() < cfg.window) {
        throw AudioError("analysis window of " + std::to_string(cfg.window) + " samples exceeds signal length " +
                         std::to_string(waveform.size()));
    }
    const double hop_exact = sample_rate / cfg.frame_rate;
    const auto hop = static_cast<std::size_t>(std::llround(hop_exact));
    if (hop == 0 || std::abs(hop_exact - static_cast<double>(hop)) > 1e-9) {
        throw AudioError("sample rate is not an integer multiple of the frame rate");
    }
    const double fmax = cfg.fmax > 0.0 ? cfg.fmax : sample_rate / 2.0;
    const std::size_t n = cfg.window;
    const std::size_t bins = n / 2 + 1;
    const std::size_t frames = (waveform.size() + hop - 1) / hop;

    std::vector<double> hann(n);
    for (std::size_t i = 0; i < n; ++i) {
        hann[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
    }
    const auto fb = mel_filterbank(cfg.mel_bands, n, sample_rate, cfg.fmin, fmax);

    Eigen::FFT<double> fft;
    std::vector<double> buf(n);
    std::vector<std::complex<double>> spec;
    std::vector<double> mfcc(frames * cfg.mfcc_count, 0.0);
    std::vector<double> onset(frames, 0.0);
    std::vector<double> prev_mag(bins, 0.0);
    std::vector<double> logmel(cfg.mel_bands);
    const long half = static_cast<long>(n / 2);

    for (std::size_t t = 0; t < frames; ++t) {
        // Centered frame with zero padding past either end.
        const long start = static_cast<long>(t * hop) - half;
        for (std::size_t i = 0; i < n; ++i) {
            const long idx = start + static_cast<long>(i);
            const double s = (idx >= 0 && idx < static_cast<long>(waveform.size()))
                                 ? waveform[static_cast<std::size_t>(idx)]
                                 : 0.0;
            buf[i] = s * hann[i];
        }
        fft.fwd(spec, buf);
        double flux = 0.0;
        std::vector<double> power(bins);
        for (std::size_t k = 0; k < bins; ++k) {
            const double mag = std::abs(spec[k]);
            power[k] = mag * mag;
            const double lm = std::log1p(mag);
            if (t > 0) flux += std::max(0.0, lm - prev_mag[k]);
            prev_mag[k] = lm;
        }
        onset[t] = flux;
        for (std::size_t b = 0; b < cfg.mel_bands; ++b) {
            double e = 0.0;
            for (std::size_t k = 0; k < bins; ++k) e += fb[b][k] * power[k];
            logmel[b] = std::log(e + 1e-10);
        }
        // Orthonormal DCT-II.
        const double nb = static_cast<double>(cfg.mel_bands);
        for (std::size_t c = 0; c < cfg.mfcc_count; ++c) {
            double acc = 0.0;
            for (std::size_t b = 0; b < cfg.mel_bands; ++b) {
                acc += logmel[b] * std::cos(std::numbers::pi * static_cast<double>(c) *
                                            (static_cast<double>(b) + 0.5) / nb);
            }
            const double scale = c == 0 ? std::sqrt(1.0 / nb) : std::sqrt(2.0 / nb);
            mfcc[t * cfg.mfcc_count + c] = acc * scale;
        }
    }

    const auto delta = delta_features(mfcc, cfg.mfcc_count, 2);
    AudioFeatureSequence out;
    out.frame_rate = cfg.frame_rate;
    out.dims = cfg.feature_dims();
    out.features.resize(frames * out.dims);
    for (std::size_t t = 0; t < frames; ++t) {
        double* row = out.features.data() + t * out.dims;
        for (std::size_t c = 0; c < cfg.mfcc_count; ++c) {
            row[c] = mfcc[t * cfg.mfcc_count + c];
            row[cfg.mfcc_count + c] = delta[t * cfg.mfcc_count + c];
        }
        row[out.dims - 1] = onset[t];
    }
    return out;
}

AudioFeatureSequence resample_features(const AudioFeatureSequence& a, double target_rate, std::size_t frames) {
    if (!(target_rate > 0.0) || a.length() == 0) throw AudioError("cannot resample empty or rate-less features");
    AudioFeatureSequence out;
    out.frame_rate = target_rate;
    out.dims = a.dims;
    out.beat_times = a.beat_times;
    out.features.resize(frames * a.dims);
    for (std::size_t t = 0; t < frames; ++t) {
        const double sec = static_cast<double>(t) / target_rate;
        auto src = static_cast<long>(std::llround(sec * a.frame_rate));
        src = std::clamp(src, 0L, static_cast<long>(a.length()) - 1);
        const auto row = a.row(static_cast<std::size_t>(src));
        std::copy(row.begin(), row.end(), out.features.begin() + static_cast<long>(t * a.dims));
    }
    return out;
}

std::vector<std::size_t> onset_peaks(const AudioFeatureSequence& a, double rel) {
    std::vector<std::size_t> peaks;
    const std::size_t t_len = a.length();
    if (t_len < 3) return peaks;
    const auto on = [&](std::size_t t) { return a.features[t * a.dims + a.dims - 1]; };
    double mx = 0.0;
    for (std::size_t t = 0; t < t_len; ++t) mx = std::max(mx, on(t));
    if (mx <= 0.0) return peaks;
    for (std::size_t t = 1; t + 1 < t_len; ++t) {
        if (on(t) > rel * mx && on(t) > on(t - 1) && on(t) >= on(t + 1)) peaks.push_back(t);
    }
    return peaks;
}

}  // namespace ude::motion

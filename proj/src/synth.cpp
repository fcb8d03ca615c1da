#include "eegdann/synth.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <numbers>
#include <random>

#include <fftw3.h>

namespace eegdann::io {

namespace {

using Rng = std::mt19937_64;
constexpr double kPi = std::numbers::pi;

struct Position {
    double x;
    double y;
};

// Approximate scalp positions (x: left to right, y: back to front).
const std::vector<Position>& electrode_positions() {
    static const std::vector<Position> pos{
        {-0.30, 0.95}, {0.30, 0.95},  {-0.80, 0.60}, {-0.40, 0.55}, {0.00, 0.50},  {0.40, 0.55},
        {0.80, 0.60},  {-1.00, 0.00}, {-0.50, 0.00}, {0.00, 0.00},  {0.50, 0.00},  {1.00, 0.00},
        {-0.80, -0.60}, {-0.40, -0.55}, {0.00, -0.50}, {0.40, -0.55}, {0.80, -0.60}, {-0.30, -0.95},
        {0.30, -0.95}, {-1.20, 0.00}, {1.20, 0.00},
    };
    return pos;
}

constexpr std::size_t kScalpElectrodes = 19;  // excludes the earlobes

std::vector<double> spatial_gains(std::size_t focus, double width) {
    const auto& pos = electrode_positions();
    std::vector<double> g(pos.size());
    for (std::size_t e = 0; e < pos.size(); ++e) {
        const double dx = pos[e].x - pos[focus].x;
        const double dy = pos[e].y - pos[focus].y;
        g[e] = std::exp(-(dx * dx + dy * dy) / (width * width));
    }
    return g;
}

std::size_t fft_size(std::size_t n) {
    for (std::size_t m = n;; ++m) {
        std::size_t r = m;
        for (std::size_t p : {2, 3, 5}) {
            while (r % p == 0) {
                r /= p;
            }
        }
        if (r == 1) {
            return m;
        }
    }
}

std::mutex& fftw_mutex() {
    static std::mutex m;
    return m;
}

// Gaussian noise with power spectral density proportional to 1/f^alpha
// (flattened below 0.5 Hz, no DC), scaled to unit RMS.
std::vector<double> colored_noise(std::size_t n, double alpha, double fs, Rng& rng) {
    const std::size_t m = fft_size(n);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> buf(m);
    for (auto& v : buf) {
        v = normal(rng);
    }
    std::vector<std::complex<double>> spec(m / 2 + 1);
    {
        std::lock_guard lock(fftw_mutex());
        auto* out = reinterpret_cast<fftw_complex*>(spec.data());
        fftw_plan fwd = fftw_plan_dft_r2c_1d(static_cast<int>(m), buf.data(), out, FFTW_ESTIMATE);
        fftw_execute(fwd);
        fftw_destroy_plan(fwd);
        for (std::size_t k = 0; k < spec.size(); ++k) {
            const double f = std::max(0.5, static_cast<double>(k) * fs / static_cast<double>(m));
            spec[k] *= k == 0 ? 0.0 : std::pow(f, -alpha / 2.0);
        }
        fftw_plan inv = fftw_plan_dft_c2r_1d(static_cast<int>(m), out, buf.data(), FFTW_ESTIMATE);
        fftw_execute(inv);
        fftw_destroy_plan(inv);
    }
    buf.resize(n);
    double ss = 0.0;
    double mean = 0.0;
    for (double v : buf) {
        mean += v;
    }
    mean /= static_cast<double>(n);
    for (double& v : buf) {
        v -= mean;
        ss += v * v;
    }
    const double rms = std::sqrt(ss / static_cast<double>(n));
    for (double& v : buf) {
        v /= rms;
    }
    return buf;
}

double rms(const std::vector<double>& x) {
    double ss = 0.0;
    for (double v : x) {
        ss += v * v;
    }
    return std::sqrt(ss / static_cast<double>(x.size()));
}

double raised_cosine_taper(double t, double length, double edge) {
    if (t < edge) {
        return 0.5 - 0.5 * std::cos(kPi * t / edge);
    }
    if (t > length - edge) {
        return 0.5 - 0.5 * std::cos(kPi * (length - t) / edge);
    }
    return 1.0;
}

// Dividing by an integral reciprocal keeps values like 38.55 exact in
// shortest-form CSV output.
double round_to(double v, double quantum) {
    const double inv = std::round(1.0 / quantum);
    if (std::abs(inv * quantum - 1.0) < 1e-12) {
        return std::round(v * inv) / inv;
    }
    return std::round(v / quantum) * quantum;
}

}  // namespace

const std::vector<std::string>& synth_electrodes() {
    static const std::vector<std::string> names{"Fp1", "Fp2", "F7", "F3", "Fz", "F4", "F8",
                                                "T3",  "C3",  "Cz", "C4", "T4", "T5", "P3",
                                                "Pz",  "P4",  "T6", "O1", "O2", "A1", "A2"};
    return names;
}

std::string patient_name(std::size_t index) {
    std::string digits = std::to_string(index + 1);
    return "P" + std::string(digits.size() < 2 ? 2 - digits.size() : 0, '0') + digits;
}

pre::EegRecording synthesize_patient(const CohortSpec& spec, std::size_t index) {
    std::seed_seq seq{spec.seed, static_cast<std::uint64_t>(index), std::uint64_t{0x5EED}};
    Rng rng(seq);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double fs = spec.fs;
    const double shift = spec.shift_strength;

    const double duration = round_to(
        std::max(spec.duration_min_s, spec.duration_mean_s + spec.duration_sd_s * normal(rng)), 1.0 / fs);
    const auto n = static_cast<std::size_t>(std::llround(duration * fs));
    const double seizure_len =
        std::clamp(spec.seizure_mean_s + spec.seizure_sd_s * normal(rng), spec.seizure_min_s, 0.6 * duration);
    const double onset = round_to(0.1 * duration + unit(rng) * (0.9 * duration - seizure_len - 0.1 * duration), 0.01);
    const double offset = round_to(onset + seizure_len, 0.01);

    const bool outlier = spec.outlier_patient && index + 1 == spec.patients;
    double alpha = spec.tilt_base + shift * spec.tilt_spread * (2.0 * unit(rng) - 1.0);
    double scale = std::exp(shift * spec.amplitude_spread * normal(rng));
    if (outlier) {
        alpha = spec.tilt_base + 2.5 * std::max(spec.tilt_spread, 0.4);
        scale *= 3.0;
    }
    const double rhythm_hz = spec.rhythm_low_hz + unit(rng) * (spec.rhythm_high_hz - spec.rhythm_low_hz);
    const auto rhythm_focus = static_cast<std::size_t>(unit(rng) * kScalpElectrodes) % kScalpElectrodes;
    const double seizure_hz = spec.seizure_low_hz + unit(rng) * (spec.seizure_high_hz - spec.seizure_low_hz);
    const auto seizure_focus = static_cast<std::size_t>(unit(rng) * kScalpElectrodes) % kScalpElectrodes;
    const double seizure_phase = 2.0 * kPi * unit(rng);
    const double rhythm_phase = 2.0 * kPi * unit(rng);
    const double rhythm_strength = unit(rng);

    const auto& names = synth_electrodes();
    const std::size_t ne = names.size();
    const auto sos = pre::butterworth_bandpass(8.0, 30.0, fs);

    pre::EegRecording rec;
    rec.patient_id = patient_name(index);
    rec.fs = fs;
    rec.channel_names = names;
    rec.channels.resize(ne);
    std::vector<double> inband(ne);
    for (std::size_t e = 0; e < ne; ++e) {
        const double gain = std::exp(0.15 * shift * normal(rng));
        auto x = colored_noise(n, alpha, fs, rng);
        const double amp = spec.background_uv * scale * gain;
        for (double& v : x) {
            v *= amp;
        }
        inband[e] = rms(pre::filtfilt(sos, x));
        rec.channels[e] = std::move(x);
    }

    if (spec.rhythm_amplitude > 0.0 && shift > 0.0) {
        const auto g = spatial_gains(rhythm_focus, spec.rhythm_width);
        const double wobble_hz = 0.1 + 0.2 * unit(rng);
        const auto& pos = electrode_positions();
        for (std::size_t e = 0; e < ne; ++e) {
            const double a = std::sqrt(2.0) * spec.rhythm_amplitude * rhythm_strength * shift * inband[e] * g[e];
            const double lag = spec.propagation_rad *
                               std::hypot(pos[e].x - pos[rhythm_focus].x, pos[e].y - pos[rhythm_focus].y);
            for (std::size_t i = 0; i < n; ++i) {
                const double t = static_cast<double>(i) / fs;
                const double phase = 2.0 * kPi * rhythm_hz * t + rhythm_phase - lag +
                                     0.02 * rhythm_hz / wobble_hz * std::sin(2.0 * kPi * wobble_hz * t);
                rec.channels[e][i] += a * std::sin(phase);
            }
        }
    }

    {
        const auto g = spatial_gains(seizure_focus, spec.focal_width);
        const double norm = std::sqrt(0.5 + 0.5 * 0.3 * 0.3);
        const auto first = static_cast<std::size_t>(std::ceil(onset * fs));
        const auto last = std::min(n, static_cast<std::size_t>(std::ceil(offset * fs)));
        const double len = offset - onset;
        std::vector<double> envelope(last - first);
        for (std::size_t i = first; i < last; ++i) {
            const double u = (static_cast<double>(i) / fs - onset) / len;
            envelope[i - first] = (spec.ramp_start + (spec.ramp_end - spec.ramp_start) * u) *
                                  raised_cosine_taper(u * len, len, std::min(1.0, 0.2 * len));
        }
        // Spread from the focus with a distance-proportional phase lag, so
        // neighbouring electrodes do not cancel in bipolar derivations.
        const auto& pos = electrode_positions();
        for (std::size_t e = 0; e < ne; ++e) {
            const double d = std::hypot(pos[e].x - pos[seizure_focus].x, pos[e].y - pos[seizure_focus].y);
            const double lag = spec.propagation_rad * d;
            const double a = inband[e] * g[e];
            double ph = seizure_phase - lag;
            for (std::size_t i = first; i < last; ++i) {
                const double u = (static_cast<double>(i) / fs - onset) / len;
                ph += 2.0 * kPi * seizure_hz * (1.0 - 0.15 * u) / fs;
                const double w = (std::sin(ph) + 0.3 * std::sin(2.0 * ph + 0.5)) / norm;
                rec.channels[e][i] += a * envelope[i - first] * w;
            }
        }
    }

    if (spec.ecg_amplitude > 0.0 && shift > 0.0) {
        // Cardiac field: a dipole along a patient-specific scalp axis, so the
        // artifact keeps a fixed polarity pattern across bipolar derivations.
        const double heart_hz = (spec.heart_low_bpm + unit(rng) * (spec.heart_high_bpm - spec.heart_low_bpm)) / 60.0;
        const double strength = spec.ecg_amplitude * shift * (0.5 + 0.5 * unit(rng));
        const double axis = 2.0 * kPi * unit(rng);
        const double sigma = 0.010;
        const auto& pos = electrode_positions();
        double mean_inband = 0.0;
        for (double v : inband) {
            mean_inband += v / static_cast<double>(ne);
        }
        std::vector<double> beat_times;
        for (double t = unit(rng) / heart_hz; t < duration; t += (1.0 + 0.03 * normal(rng)) / heart_hz) {
            beat_times.push_back(t);
        }
        const auto half = static_cast<std::ptrdiff_t>(std::ceil(5.0 * sigma * fs));
        for (std::size_t e = 0; e < ne; ++e) {
            const double proj = pos[e].x * std::cos(axis) + pos[e].y * std::sin(axis);
            const double a = strength * mean_inband * proj;
            for (double tb : beat_times) {
                const auto centre = static_cast<std::ptrdiff_t>(std::llround(tb * fs));
                for (std::ptrdiff_t i = std::max<std::ptrdiff_t>(0, centre - half);
                     i < std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(n), centre + half + 1); ++i) {
                    const double u = (static_cast<double>(i) / fs - tb) / sigma;
                    rec.channels[e][static_cast<std::size_t>(i)] += a * (1.0 - u * u) * std::exp(-0.5 * u * u);
                }
            }
        }
    }

    if (spec.artifact_rate_per_min > 0.0) {
        std::poisson_distribution<int> count(spec.artifact_rate_per_min * duration / 60.0);
        const int events = count(rng);
        for (int k = 0; k < events; ++k) {
            const double len = spec.artifact_min_s + unit(rng) * (spec.artifact_max_s - spec.artifact_min_s);
            const double start = unit(rng) * std::max(0.0, duration - len);
            const auto focus = static_cast<std::size_t>(unit(rng) * kScalpElectrodes) % kScalpElectrodes;
            const auto g = spatial_gains(focus, 0.5);
            const auto first = static_cast<std::size_t>(start * fs);
            const auto count_samples = std::min(n - first, static_cast<std::size_t>(len * fs));
            if (count_samples <= pre::filtfilt_padlen(sos) + 1) {
                continue;
            }
            std::vector<double> burst(count_samples);
            for (auto& v : burst) {
                v = normal(rng);
            }
            burst = pre::filtfilt(pre::butterworth_bandpass(10.0, 25.0, fs, 2), burst);
            const double r = rms(burst);
            for (std::size_t i = 0; i < count_samples; ++i) {
                const double w = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(i) /
                                                      static_cast<double>(count_samples - 1));
                burst[i] *= w / r;
            }
            for (std::size_t e = 0; e < ne; ++e) {
                const double a = spec.artifact_amplitude * std::sqrt(2.0) * inband[e] * g[e];
                for (std::size_t i = 0; i < count_samples; ++i) {
                    rec.channels[e][first + i] += a * burst[i];
                }
            }
        }
    }

    for (auto& ch : rec.channels) {
        for (double& v : ch) {
            v = round_to(v, spec.quantum_uv);
        }
    }
    rec.seizures = {{onset, offset}};
    rec.validate();
    return rec;
}

std::vector<pre::EegRecording> synthesize_cohort(const CohortSpec& spec) {
    if (spec.patients < 2) {
        throw ConfigError("a cohort needs at least 2 patients (adversarial training needs 2 domains)");
    }
    if (spec.seizure_min_s >= spec.duration_min_s || spec.seizure_mean_s >= spec.duration_mean_s) {
        throw SeizureTooLong("seizure duration (mean " + std::to_string(spec.seizure_mean_s) + " s, min " +
                             std::to_string(spec.seizure_min_s) + " s) must be shorter than the recording (mean " +
                             std::to_string(spec.duration_mean_s) + " s, min " +
                             std::to_string(spec.duration_min_s) + " s)");
    }
    if (!(spec.fs > 60.0)) {
        throw ConfigError("sampling rate must exceed 60 Hz");
    }
    std::vector<pre::EegRecording> out;
    out.reserve(spec.patients);
    for (std::size_t k = 0; k < spec.patients; ++k) {
        out.push_back(synthesize_patient(spec, k));
    }
    return out;
}

}  // namespace eegdann::io

#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "eegdann/error.hpp"

namespace eegdann::pre {

struct SeizureInterval {
    double onset_s = 0.0;
    double offset_s = 0.0;
};

struct EegRecording {
    std::string patient_id;
    double fs = 500.0;
    std::vector<std::string> channel_names;
    std::vector<std::vector<double>> channels;
    std::vector<SeizureInterval> seizures;

    std::size_t samples() const { return channels.empty() ? 0 : channels.front().size(); }
    double duration_s() const { return static_cast<double>(samples()) / fs; }
    /// Sample i is ictal when onset <= i / fs < offset for some interval.
    std::vector<int> sample_labels() const;
    /// Throws DataError on ragged channels or out-of-range annotations.
    void validate() const;
    std::size_t channel_index(std::string_view name) const;  // npos when absent
};

/// Windows of one patient, stored flat as [T, C, L] row-major.
struct WindowedSequence {
    std::string patient_id;
    int domain = 0;  // zero-based domain index within a training set
    std::size_t channels = 0;
    std::size_t window = 0;
    std::vector<double> data;
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }
    std::size_t window_values() const { return channels * window; }
    std::span<const double> window_at(std::size_t t) const;
};

class MissingElectrode : public DataError {
public:
    explicit MissingElectrode(const std::string& electrode)
        : DataError("missing electrode: " + electrode), electrode_(electrode) {}
    const std::string& electrode() const { return electrode_; }

private:
    std::string electrode_;
};

class FilterWarmupError : public DataError {
public:
    using DataError::DataError;
};

class RecordingTooShort : public DataError {
public:
    using DataError::DataError;
};

struct ElectrodePair {
    const char* anode;
    const char* cathode;
};

/// Longitudinal bipolar ("double banana") chains: left temporal, left
/// parasagittal, midline, right parasagittal, right temporal.
const std::array<ElectrodePair, 18>& montage_pairs();
std::vector<std::string> montage_channel_names();

EegRecording bipolar_montage(const EegRecording& raw);

/// One second-order section: b0 + b1 z^-1 + b2 z^-2 over 1 + a1 z^-1 + a2 z^-2.
struct Biquad {
    double b0 = 1, b1 = 0, b2 = 0;
    double a1 = 0, a2 = 0;
};

/// Butterworth band-pass from an order-`order` low-pass prototype (2 * order
/// poles), bilinear transform with pre-warping, unit gain at the centre.
std::vector<Biquad> butterworth_bandpass(double low_hz, double high_hz, double fs, int order = 4);

/// Odd-extension padding length used by filtfilt.
std::size_t filtfilt_padlen(std::span<const Biquad> sos);

/// Magnitude response at `hz`.
double gain_at(std::span<const Biquad> sos, double hz, double fs);

/// Forward-backward filtering with odd-extension padding and steady-state
/// initial conditions. Throws FilterWarmupError when the signal is not longer
/// than the padding.
std::vector<double> filtfilt(std::span<const Biquad> sos, std::span<const double> x);

EegRecording bandpass(const EegRecording& rec, double low_hz, double high_hz, int order = 4);

/// Per-channel zero mean, unit (population) standard deviation over the whole
/// recording. Constant channels become zeros.
EegRecording standardize(const EegRecording& rec);

/// Non-overlapping windows of `window` samples; the trailing partial window is
/// dropped. Each window takes the majority sample label, ties to 1.
WindowedSequence segment(const EegRecording& rec, std::size_t window);

struct PreprocessConfig {
    double low_hz = 8.0;
    double high_hz = 30.0;
    int filter_order = 4;
    std::size_t window = 500;
};

/// montage -> bandpass -> standardize -> segment. Recordings whose channels
/// already carry the bipolar names skip the montage step.
WindowedSequence preprocess(const EegRecording& raw, const PreprocessConfig& config);

}  // namespace eegdann::pre

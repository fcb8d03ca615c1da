#include "eegdann/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>

namespace eegdann::pre {

namespace {

using cplx = std::complex<double>;

constexpr double kConstantSd = 1e-12;

void run_section(const Biquad& s, std::vector<double>& x, double zi1, double zi2) {
    double z1 = zi1;
    double z2 = zi2;
    for (double& v : x) {
        const double in = v;
        const double out = s.b0 * in + z1;
        z1 = s.b1 * in - s.a1 * out + z2;
        z2 = s.b2 * in - s.a2 * out;
        v = out;
    }
}

// Runs the cascade with each section's state set to its steady-state response
// to a constant input equal to x[0].
void sosfilt_steady(std::span<const Biquad> sos, std::vector<double>& x) {
    double level = x.front();
    for (const auto& s : sos) {
        const double dc = (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
        const double y = dc * level;
        const double z2 = s.b2 * level - s.a2 * y;
        const double z1 = y - s.b0 * level;
        run_section(s, x, z1, z2);
        level = y;
    }
}

}  // namespace

std::vector<int> EegRecording::sample_labels() const {
    std::vector<int> labels(samples(), 0);
    for (const auto& iv : seizures) {
        for (std::size_t i = 0; i < labels.size(); ++i) {
            const double t = static_cast<double>(i) / fs;
            if (t >= iv.onset_s && t < iv.offset_s) {
                labels[i] = 1;
            }
        }
    }
    return labels;
}

void EegRecording::validate() const {
    if (!(fs > 0.0) || !std::isfinite(fs)) {
        throw DataError(patient_id + ": sampling rate must be positive");
    }
    if (channel_names.size() != channels.size()) {
        throw DataError(patient_id + ": " + std::to_string(channel_names.size()) +
                        " channel names for " + std::to_string(channels.size()) + " channels");
    }
    for (std::size_t c = 0; c < channels.size(); ++c) {
        if (channels[c].size() != samples()) {
            throw DataError(patient_id + ": channel " + channel_names[c] + " has " +
                            std::to_string(channels[c].size()) + " samples, expected " +
                            std::to_string(samples()));
        }
    }
    for (std::size_t k = 0; k < seizures.size(); ++k) {
        const auto& iv = seizures[k];
        if (!(iv.onset_s >= 0.0 && iv.onset_s < iv.offset_s && iv.offset_s <= duration_s())) {
            throw DataError(patient_id + ": seizure interval " + std::to_string(k) + " (" +
                            std::to_string(iv.onset_s) + ", " + std::to_string(iv.offset_s) +
                            ") outside recording of " + std::to_string(duration_s()) + " s");
        }
    }
}

std::size_t EegRecording::channel_index(std::string_view name) const {
    auto it = std::find(channel_names.begin(), channel_names.end(), name);
    return it == channel_names.end() ? std::string::npos
                                     : static_cast<std::size_t>(it - channel_names.begin());
}

std::span<const double> WindowedSequence::window_at(std::size_t t) const {
    require(t < size(), "window index out of range");
    return std::span<const double>(data).subspan(t * window_values(), window_values());
}

const std::array<ElectrodePair, 18>& montage_pairs() {
    static const std::array<ElectrodePair, 18> pairs{{
        {"Fp1", "F7"}, {"F7", "T3"}, {"T3", "T5"}, {"T5", "O1"},
        {"Fp1", "F3"}, {"F3", "C3"}, {"C3", "P3"}, {"P3", "O1"},
        {"Fz", "Cz"},  {"Cz", "Pz"},
        {"Fp2", "F4"}, {"F4", "C4"}, {"C4", "P4"}, {"P4", "O2"},
        {"Fp2", "F8"}, {"F8", "T4"}, {"T4", "T6"}, {"T6", "O2"},
    }};
    return pairs;
}

std::vector<std::string> montage_channel_names() {
    std::vector<std::string> names;
    for (const auto& p : montage_pairs()) {
        names.push_back(std::string(p.anode) + "-" + p.cathode);
    }
    return names;
}

EegRecording bipolar_montage(const EegRecording& raw) {
    EegRecording out;
    out.patient_id = raw.patient_id;
    out.fs = raw.fs;
    out.seizures = raw.seizures;
    for (const auto& p : montage_pairs()) {
        const std::size_t a = raw.channel_index(p.anode);
        if (a == std::string::npos) {
            throw MissingElectrode(p.anode);
        }
        const std::size_t b = raw.channel_index(p.cathode);
        if (b == std::string::npos) {
            throw MissingElectrode(p.cathode);
        }
        std::vector<double> diff(raw.samples());
        for (std::size_t i = 0; i < diff.size(); ++i) {
            diff[i] = raw.channels[a][i] - raw.channels[b][i];
        }
        out.channel_names.push_back(std::string(p.anode) + "-" + p.cathode);
        out.channels.push_back(std::move(diff));
    }
    return out;
}

std::vector<Biquad> butterworth_bandpass(double low_hz, double high_hz, double fs, int order) {
    if (order < 1) {
        throw ConfigError("filter order must be positive");
    }
    if (!(low_hz > 0.0 && low_hz < high_hz && 2.0 * high_hz < fs)) {
        throw ConfigError("band-pass edges must satisfy 0 < low < high < fs/2");
    }
    const double pi = std::numbers::pi;
    const double w1 = 2.0 * fs * std::tan(pi * low_hz / fs);
    const double w2 = 2.0 * fs * std::tan(pi * high_hz / fs);
    const double bw = w2 - w1;
    const double w0sq = w1 * w2;

    std::vector<cplx> upper;
    for (int k = 1; k <= order; ++k) {
        const cplx p = std::polar(1.0, pi * (2.0 * k + order - 1) / (2.0 * order));
        const cplx half = p * bw / 2.0;
        const cplx root = std::sqrt(half * half - w0sq);
        for (const cplx s : {half + root, half - root}) {
            const cplx z = (2.0 * fs + s) / (2.0 * fs - s);
            if (z.imag() > 0.0) {
                upper.push_back(z);
            }
        }
    }
    if (upper.size() != static_cast<std::size_t>(order)) {
        throw NumericError("band-pass design produced real poles; band too wide");
    }
    std::sort(upper.begin(), upper.end(),
              [](const cplx& a, const cplx& b) { return std::abs(a) < std::abs(b); });

    std::vector<Biquad> sos;
    for (const auto& z : upper) {
        Biquad s;
        s.b0 = 1.0;
        s.b1 = 0.0;
        s.b2 = -1.0;
        s.a1 = -2.0 * z.real();
        s.a2 = std::norm(z);
        sos.push_back(s);
    }
    const double centre_hz = std::atan(std::sqrt(w0sq) / (2.0 * fs)) * fs / pi;
    const double g = std::pow(gain_at(sos, centre_hz, fs), -1.0 / order);
    for (auto& s : sos) {
        s.b0 *= g;
        s.b2 *= g;
    }
    return sos;
}

std::size_t filtfilt_padlen(std::span<const Biquad> sos) {
    return 3 * (2 * sos.size() + 1);
}

double gain_at(std::span<const Biquad> sos, double hz, double fs) {
    const cplx zinv = std::polar(1.0, -2.0 * std::numbers::pi * hz / fs);
    cplx h{1.0, 0.0};
    for (const auto& s : sos) {
        h *= (s.b0 + s.b1 * zinv + s.b2 * zinv * zinv) / (1.0 + s.a1 * zinv + s.a2 * zinv * zinv);
    }
    return std::abs(h);
}

std::vector<double> filtfilt(std::span<const Biquad> sos, std::span<const double> x) {
    const std::size_t pad = filtfilt_padlen(sos);
    if (x.size() <= pad) {
        throw FilterWarmupError("signal of " + std::to_string(x.size()) +
                                " samples is not longer than the filter warm-up of " +
                                std::to_string(pad) + " samples");
    }
    const std::size_t n = x.size();
    std::vector<double> ext(n + 2 * pad);
    for (std::size_t i = 0; i < pad; ++i) {
        ext[i] = 2.0 * x[0] - x[pad - i];
        ext[pad + n + i] = 2.0 * x[n - 1] - x[n - 2 - i];
    }
    std::copy(x.begin(), x.end(), ext.begin() + static_cast<std::ptrdiff_t>(pad));

    sosfilt_steady(sos, ext);
    std::reverse(ext.begin(), ext.end());
    sosfilt_steady(sos, ext);
    std::reverse(ext.begin(), ext.end());
    return std::vector<double>(ext.begin() + static_cast<std::ptrdiff_t>(pad),
                               ext.begin() + static_cast<std::ptrdiff_t>(pad + n));
}

EegRecording bandpass(const EegRecording& rec, double low_hz, double high_hz, int order) {
    if (!(rec.fs > 2.0 * high_hz)) {
        throw ConfigError("sampling rate " + std::to_string(rec.fs) +
                          " Hz is not above twice the upper band edge");
    }
    const auto sos = butterworth_bandpass(low_hz, high_hz, rec.fs, order);
    EegRecording out = rec;
    for (auto& ch : out.channels) {
        ch = filtfilt(sos, ch);
    }
    return out;
}

EegRecording standardize(const EegRecording& rec) {
    EegRecording out = rec;
    for (auto& ch : out.channels) {
        require(ch.size() >= 2, "standardize needs at least 2 samples per channel");
        const double n = static_cast<double>(ch.size());
        const double mean = std::accumulate(ch.begin(), ch.end(), 0.0) / n;
        double ss = 0.0;
        for (double v : ch) {
            ss += (v - mean) * (v - mean);
        }
        const double sd = std::sqrt(ss / n);
        if (sd <= kConstantSd * std::max(1.0, std::abs(mean))) {
            std::fill(ch.begin(), ch.end(), 0.0);
            continue;
        }
        for (double& v : ch) {
            v = (v - mean) / sd;
        }
    }
    return out;
}

WindowedSequence segment(const EegRecording& rec, std::size_t window) {
    require(window > 0, "window length must be positive");
    if (rec.samples() < window) {
        throw RecordingTooShort(rec.patient_id + ": " + std::to_string(rec.samples()) +
                                " samples is shorter than one window of " +
                                std::to_string(window));
    }
    const std::size_t count = rec.samples() / window;
    const std::size_t nch = rec.channels.size();
    const auto sample_labels = rec.sample_labels();

    WindowedSequence seq;
    seq.patient_id = rec.patient_id;
    seq.channels = nch;
    seq.window = window;
    seq.data.resize(count * nch * window);
    seq.labels.resize(count);
    for (std::size_t t = 0; t < count; ++t) {
        const std::size_t start = t * window;
        for (std::size_t c = 0; c < nch; ++c) {
            std::copy_n(rec.channels[c].begin() + static_cast<std::ptrdiff_t>(start), window,
                        seq.data.begin() + static_cast<std::ptrdiff_t>((t * nch + c) * window));
        }
        const auto ictal = std::count(sample_labels.begin() + static_cast<std::ptrdiff_t>(start),
                                      sample_labels.begin() + static_cast<std::ptrdiff_t>(start + window), 1);
        seq.labels[t] = 2 * static_cast<std::size_t>(ictal) >= window ? 1 : 0;
    }
    return seq;
}

WindowedSequence preprocess(const EegRecording& raw, const PreprocessConfig& config) {
    raw.validate();
    const auto bipolar_names = montage_channel_names();
    const bool already_bipolar = raw.channel_names == bipolar_names;
    EegRecording rec = already_bipolar ? raw : bipolar_montage(raw);
    rec = bandpass(rec, config.low_hz, config.high_hz, config.filter_order);
    rec = standardize(rec);
    return segment(rec, config.window);
}

}  // namespace eegdann::pre

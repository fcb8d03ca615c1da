#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "eegdann/error.hpp"
#include "eegdann/preprocess.hpp"

namespace eegdann::io {

class SeizureTooLong : public DataError {
public:
    using DataError::DataError;
};

/// Seeded generator settings for a cohort of referential 10-20 recordings
/// with one seizure each. Between-patient differences (spectral tilt,
/// amplitude scale, background rhythm) scale with `shift_strength`.
struct CohortSpec {
    std::size_t patients = 6;
    std::uint64_t seed = 7;
    double fs = 500.0;

    double duration_mean_s = 320.0;
    double duration_sd_s = 45.0;
    double duration_min_s = 60.0;
    double seizure_mean_s = 47.0;
    double seizure_sd_s = 23.0;
    double seizure_min_s = 10.0;

    double background_uv = 20.0;  // broadband RMS before the patient scale
    double shift_strength = 1.0;
    double tilt_base = 1.2;    // spectral exponent alpha in 1/f^alpha
    double tilt_spread = 0.8;  // alpha = base + shift * spread * U(-1, 1)
    double amplitude_spread = 0.5;  // log-normal SD of the patient scale, times shift
    /// Patient-specific narrow-band background rhythm. Its peak amplitude is
    /// U(0, 1) * rhythm_amplitude * shift times the in-band background RMS;
    /// frequency drawn in [rhythm_low_hz, rhythm_high_hz].
    double rhythm_amplitude = 0.0;
    double rhythm_low_hz = 9.0;
    double rhythm_high_hz = 28.0;
    double rhythm_width = 0.9;  // spatial decay around the rhythm focus

    double seizure_low_hz = 10.0;
    double seizure_high_hz = 25.0;
    double ramp_start = 1.0;  // seizure amplitude relative to in-band background RMS
    double ramp_end = 3.0;
    double focal_width = 1.2;      // spatial decay of the seizure around its focus
    double propagation_rad = 3.0;  // phase lag per unit scalp distance from the focus

    /// Cardiac artifact: periodic sharp transients at a patient-specific heart
    /// rate and scalp orientation. Peak amplitude as a multiple of the mean
    /// in-band background RMS (times shift and a U(0.5, 1) patient factor).
    double ecg_amplitude = 0.0;
    double heart_low_bpm = 55.0;
    double heart_high_bpm = 110.0;

    /// Short in-band transients (muscle/movement-like), events per minute.
    double artifact_rate_per_min = 0.0;
    double artifact_amplitude = 2.5;
    double artifact_min_s = 0.4;
    double artifact_max_s = 1.6;

    /// Gives the last patient an extreme spectral tilt and amplitude.
    bool outlier_patient = false;
    double quantum_uv = 0.01;
};

/// The 21 referential electrodes written by the generator (10-20 plus earlobes).
const std::vector<std::string>& synth_electrodes();

std::string patient_name(std::size_t index);

/// Deterministic for a given spec. Patients are named P01, P02, ...
std::vector<pre::EegRecording> synthesize_cohort(const CohortSpec& spec);

pre::EegRecording synthesize_patient(const CohortSpec& spec, std::size_t index);

}  // namespace eegdann::io

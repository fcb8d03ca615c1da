#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "eegdann/eval.hpp"
#include "eegdann/synth.hpp"

namespace eegdann::cli {

namespace fs = std::filesystem;

/// Everything a train or eval run needs. Relative paths in a config file are
/// resolved against the directory holding that file.
struct RunConfig {
    fs::path recordings;
    fs::path cache;  // optional preprocessed windows; preferred over recordings
    fs::path output;
    pre::PreprocessConfig preprocess;
    model::ArchConfig arch;
    train::Stage1Config stage1;
    train::Stage2Config stage2;
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15};
    std::vector<eval::Arm> arms = eval::all_arms();
    std::size_t workers = 1;
};

/// Throws ConfigError on unknown keys, wrong types or out-of-range values.
RunConfig parse_config(const nlohmann::json& doc, const fs::path& base_dir = {});
RunConfig load_config(const fs::path& path);
nlohmann::json config_to_json(const RunConfig& config);
/// FNV-1a of the canonical JSON form, as 16 hex digits.
std::string config_hash(const RunConfig& config);

io::CohortSpec parse_cohort_spec(const nlohmann::json& doc);

/// Probability trace with the threshold drawn as a horizontal line.
std::string probability_svg(const std::vector<double>& probs, const std::vector<int>& labels, double tau,
                            double window_s, const std::string& title);
std::string curve_svg(const std::vector<eval::CurvePoint>& points, const std::string& title,
                      const std::string& x_label, const std::string& y_label);

/// Entry point of the command-line tool. Returns the process exit code:
/// 0 success, 2 configuration error, 3 data error, 4 numeric failure.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace eegdann::cli

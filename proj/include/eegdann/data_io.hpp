#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eegdann/error.hpp"
#include "eegdann/layers.hpp"
#include "eegdann/preprocess.hpp"

namespace eegdann::io {

namespace fs = std::filesystem;

class FormatError : public DataError {
public:
    using DataError::DataError;
};
class ChecksumError : public DataError {
public:
    using DataError::DataError;
};
class VersionError : public DataError {
public:
    using DataError::DataError;
};
class UnknownBlock : public DataError {
public:
    using DataError::DataError;
};
class MissingBlock : public DataError {
public:
    using DataError::DataError;
};
class ShapeMismatch : public DataError {
public:
    using DataError::DataError;
};

// ---------------------------------------------------------------------------
// Recordings: <stem>.csv (header of channel names, one row per sample, µV)
// plus <stem>.json {"patient_id", "fs", "seizures": [{"onset_s", "offset_s"}]}.
// ---------------------------------------------------------------------------

struct RecordingPaths {
    fs::path csv;
    fs::path sidecar;

    static RecordingPaths in_dir(const fs::path& dir, const std::string& patient_id);
};

void save_recording(const pre::EegRecording& rec, const RecordingPaths& paths);

/// Throws FormatError with line/field context for malformed input and
/// DataError for an fs mismatch or an out-of-range annotation.
pre::EegRecording load_recording(const RecordingPaths& paths,
                                 std::optional<double> expected_fs = std::nullopt);

/// All recordings in `dir`, ordered by file name.
std::vector<RecordingPaths> list_recordings(const fs::path& dir);

// ---------------------------------------------------------------------------
// Block container shared by weight files and window caches:
//   "EEGDANNW" | u32 version | u32 block count |
//   per block: u32 name length, name bytes, u32 ndim, u64 dims..., f32 values |
//   u64 total byte length of everything before it.
// All integers and floats little-endian.
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kFormatVersion = 1;

struct Block {
    std::string name;
    ad::Shape shape;
    std::vector<double> values;
};

std::vector<std::uint8_t> encode_blocks(std::span<const Block> blocks);
std::vector<Block> decode_blocks(std::span<const std::uint8_t> bytes);

/// Writes via a temporary file and rename, so a failed write leaves no file.
void write_blocks(const fs::path& path, std::span<const Block> blocks);
std::vector<Block> read_blocks(const fs::path& path);

void save_weights(const nn::NamedTensors& state, const fs::path& path);
/// Copies every stored block into the same-named tensor of `state`. Unknown
/// names, shape differences and absent blocks are named errors.
void load_weights(const fs::path& path, const nn::NamedTensors& state);
void assign_blocks(std::span<const Block> blocks, const nn::NamedTensors& state);

/// Window cache: blocks patient/<id>/windows [T, C, L], .../labels [T],
/// .../domain [1]; sequence order is preserved.
void save_cache(std::span<const pre::WindowedSequence> sequences, const fs::path& path);
std::vector<pre::WindowedSequence> load_cache(const fs::path& path);

}  // namespace eegdann::io

#include "eegdann/data_io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

namespace eegdann::io {

namespace {

using json = nlohmann::json;

constexpr char kMagic[8] = {'E', 'E', 'G', 'D', 'A', 'N', 'N', 'W'};

static_assert(std::endian::native == std::endian::little, "block container assumes a little-endian host");

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const fs::path& path, std::string_view bytes) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    fs::path tmp = path;
    tmp += ".partial";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw DataError("cannot write " + tmp.string());
        }
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) {
            throw DataError("write failed for " + tmp.string());
        }
    }
    fs::rename(tmp, path);
}

template <class T>
void put(std::vector<std::uint8_t>& out, T value) {
    std::uint8_t raw[sizeof(T)];
    std::memcpy(raw, &value, sizeof(T));
    out.insert(out.end(), raw, raw + sizeof(T));
}

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    template <class T>
    T get(const char* what) {
        need(sizeof(T), what);
        T value;
        std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return value;
    }

    std::string string(std::size_t n, const char* what) {
        need(n, what);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }

    std::size_t position() const { return pos_; }

private:
    void need(std::size_t n, const char* what) const {
        if (bytes_.size() - pos_ < n) {
            throw FormatError(std::string("block container ends inside ") + what);
        }
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

std::string format_number(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) {
        s.remove_suffix(1);
    }
    while (!s.empty() && s.front() == ' ') {
        s.remove_prefix(1);
    }
    return s;
}

std::string shape_string(const ad::Shape& shape) { return ad::to_string(shape); }

}  // namespace

RecordingPaths RecordingPaths::in_dir(const fs::path& dir, const std::string& patient_id) {
    return {dir / (patient_id + ".csv"), dir / (patient_id + ".json")};
}

void save_recording(const pre::EegRecording& rec, const RecordingPaths& paths) {
    rec.validate();
    std::string csv;
    csv.reserve(rec.samples() * rec.channels.size() * 8 + 256);
    for (std::size_t c = 0; c < rec.channel_names.size(); ++c) {
        csv += (c ? "," : "") + rec.channel_names[c];
    }
    csv += '\n';
    char buf[64];
    for (std::size_t i = 0; i < rec.samples(); ++i) {
        for (std::size_t c = 0; c < rec.channels.size(); ++c) {
            if (c) {
                csv += ',';
            }
            const double v = rec.channels[c][i];
            if (!std::isfinite(v)) {
                throw DataError(rec.patient_id + ": non-finite sample in channel " + rec.channel_names[c]);
            }
            auto res = std::to_chars(buf, buf + sizeof(buf), v);
            csv.append(buf, res.ptr);
        }
        csv += '\n';
    }
    json meta;
    meta["patient_id"] = rec.patient_id;
    meta["fs"] = rec.fs;
    meta["seizures"] = json::array();
    for (const auto& iv : rec.seizures) {
        meta["seizures"].push_back({{"onset_s", iv.onset_s}, {"offset_s", iv.offset_s}});
    }
    write_file_atomic(paths.csv, csv);
    write_file_atomic(paths.sidecar, meta.dump(2) + "\n");
}

pre::EegRecording load_recording(const RecordingPaths& paths, std::optional<double> expected_fs) {
    pre::EegRecording rec;
    json meta;
    try {
        meta = json::parse(read_file(paths.sidecar));
        rec.patient_id = meta.at("patient_id").get<std::string>();
        rec.fs = meta.at("fs").get<double>();
        const auto& seizures = meta.at("seizures");
        for (std::size_t k = 0; k < seizures.size(); ++k) {
            rec.seizures.push_back({seizures[k].at("onset_s").get<double>(),
                                    seizures[k].at("offset_s").get<double>()});
        }
    } catch (const json::exception& e) {
        throw FormatError(paths.sidecar.string() + ": " + e.what());
    }
    if (expected_fs && *expected_fs != rec.fs) {
        throw DataError(paths.sidecar.string() + ": fs " + format_number(rec.fs) +
                        " does not match configured " + format_number(*expected_fs));
    }

    const std::string text = read_file(paths.csv);
    std::size_t pos = 0;
    std::size_t line_no = 0;
    auto next_line = [&](std::string_view& line) {
        if (pos >= text.size()) {
            return false;
        }
        std::size_t end = text.find('\n', pos);
        if (end == std::string::npos) {
            end = text.size();
        }
        line = trim(std::string_view(text).substr(pos, end - pos));
        pos = end + 1;
        ++line_no;
        return true;
    };
    std::string_view line;
    if (!next_line(line) || line.empty()) {
        throw FormatError(paths.csv.string() + ": missing header row");
    }
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        const auto name = trim(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start));
        if (name.empty()) {
            throw FormatError(paths.csv.string() + ":1: empty channel name");
        }
        rec.channel_names.emplace_back(name);
        if (comma == std::string_view::npos) {
            break;
        }
        start = comma + 1;
    }
    rec.channels.assign(rec.channel_names.size(), {});
    while (next_line(line)) {
        if (line.empty()) {
            continue;
        }
        std::size_t field = 0;
        const char* p = line.data();
        const char* end = line.data() + line.size();
        while (true) {
            if (field >= rec.channels.size()) {
                throw FormatError(paths.csv.string() + ":" + std::to_string(line_no) + ": more than " +
                                  std::to_string(rec.channels.size()) + " fields");
            }
            while (p < end && *p == ' ') {
                ++p;
            }
            double v = 0.0;
            auto res = std::from_chars(p, end, v);
            if (res.ec != std::errc() || !std::isfinite(v)) {
                throw FormatError(paths.csv.string() + ":" + std::to_string(line_no) + ": field " +
                                  std::to_string(field + 1) + " (" + rec.channel_names[field] +
                                  ") is not a finite number");
            }
            rec.channels[field].push_back(v);
            p = res.ptr;
            while (p < end && *p == ' ') {
                ++p;
            }
            ++field;
            if (p == end) {
                break;
            }
            if (*p != ',') {
                throw FormatError(paths.csv.string() + ":" + std::to_string(line_no) + ": unexpected '" +
                                  std::string(1, *p) + "' after field " + std::to_string(field));
            }
            ++p;
        }
        if (field != rec.channels.size()) {
            throw FormatError(paths.csv.string() + ":" + std::to_string(line_no) + ": " +
                              std::to_string(field) + " fields, expected " +
                              std::to_string(rec.channels.size()));
        }
    }
    rec.validate();
    return rec;
}

std::vector<RecordingPaths> list_recordings(const fs::path& dir) {
    if (!fs::is_directory(dir)) {
        throw DataError("recording directory not found: " + dir.string());
    }
    std::vector<fs::path> sidecars;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".json") {
            fs::path csv = entry.path();
            csv.replace_extension(".csv");
            if (fs::exists(csv)) {
                sidecars.push_back(entry.path());
            }
        }
    }
    std::sort(sidecars.begin(), sidecars.end());
    std::vector<RecordingPaths> out;
    for (const auto& s : sidecars) {
        fs::path csv = s;
        csv.replace_extension(".csv");
        out.push_back({csv, s});
    }
    return out;
}

std::vector<std::uint8_t> encode_blocks(std::span<const Block> blocks) {
    std::vector<std::uint8_t> out(kMagic, kMagic + sizeof(kMagic));
    put<std::uint32_t>(out, kFormatVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(blocks.size()));
    for (const auto& b : blocks) {
        require(ad::numel(b.shape) == b.values.size(), "block " + b.name + ": shape/value count mismatch");
        put<std::uint32_t>(out, static_cast<std::uint32_t>(b.name.size()));
        out.insert(out.end(), b.name.begin(), b.name.end());
        put<std::uint32_t>(out, static_cast<std::uint32_t>(b.shape.size()));
        for (std::size_t d : b.shape) {
            put<std::uint64_t>(out, d);
        }
        for (double v : b.values) {
            put<float>(out, static_cast<float>(v));
        }
    }
    put<std::uint64_t>(out, out.size());
    return out;
}

std::vector<Block> decode_blocks(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < sizeof(kMagic) + 16) {
        throw ChecksumError("block container too short (" + std::to_string(bytes.size()) + " bytes)");
    }
    std::uint64_t length = 0;
    std::memcpy(&length, bytes.data() + bytes.size() - 8, 8);
    if (length != bytes.size() - 8) {
        throw ChecksumError("length checksum " + std::to_string(length) + " does not match payload of " +
                            std::to_string(bytes.size() - 8) + " bytes");
    }
    if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
        throw FormatError("not an EEGDANNW block container");
    }
    Reader r(bytes.first(bytes.size() - 8));
    r.string(sizeof(kMagic), "magic");
    const auto version = r.get<std::uint32_t>("version");
    if (version != kFormatVersion) {
        throw VersionError("format version " + std::to_string(version) + " is not supported (expected " +
                           std::to_string(kFormatVersion) + ")");
    }
    const auto count = r.get<std::uint32_t>("block count");
    std::vector<Block> blocks;
    blocks.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        Block b;
        b.name = r.string(r.get<std::uint32_t>("name length"), "name");
        const auto ndim = r.get<std::uint32_t>("rank");
        for (std::uint32_t d = 0; d < ndim; ++d) {
            b.shape.push_back(static_cast<std::size_t>(r.get<std::uint64_t>("dimension")));
        }
        const std::size_t n = ad::numel(b.shape);
        b.values.resize(n);
        for (std::size_t k = 0; k < n; ++k) {
            b.values[k] = r.get<float>("values");
        }
        blocks.push_back(std::move(b));
    }
    if (r.position() != bytes.size() - 8) {
        throw FormatError("trailing bytes after last block");
    }
    return blocks;
}

void write_blocks(const fs::path& path, std::span<const Block> blocks) {
    const auto bytes = encode_blocks(blocks);
    write_file_atomic(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

std::vector<Block> read_blocks(const fs::path& path) {
    const std::string raw = read_file(path);
    return decode_blocks(std::span(reinterpret_cast<const std::uint8_t*>(raw.data()), raw.size()));
}

void save_weights(const nn::NamedTensors& state, const fs::path& path) {
    std::vector<Block> blocks;
    blocks.reserve(state.size());
    for (const auto& [name, t] : state) {
        blocks.push_back({name, t.shape(), {t.values().begin(), t.values().end()}});
    }
    write_blocks(path, blocks);
}

void assign_blocks(std::span<const Block> blocks, const nn::NamedTensors& state) {
    std::map<std::string, const Block*> by_name;
    for (const auto& b : blocks) {
        by_name[b.name] = &b;
    }
    std::map<std::string, const ad::Tensor*> targets;
    for (const auto& [name, t] : state) {
        targets[name] = &t;
    }
    for (const auto& b : blocks) {
        auto it = targets.find(b.name);
        if (it == targets.end()) {
            throw UnknownBlock("unknown block " + b.name);
        }
        if (it->second->shape() != b.shape) {
            throw ShapeMismatch("block " + b.name + " has shape " + shape_string(b.shape) +
                                ", model expects " + shape_string(it->second->shape()));
        }
    }
    for (const auto& [name, _] : state) {
        if (!by_name.contains(name)) {
            throw MissingBlock("missing block " + name);
        }
    }
    for (const auto& [name, t] : state) {
        const Block& b = *by_name.at(name);
        auto dst = const_cast<ad::Tensor&>(t).values_mut();
        std::copy(b.values.begin(), b.values.end(), dst.begin());
    }
}

void load_weights(const fs::path& path, const nn::NamedTensors& state) {
    assign_blocks(read_blocks(path), state);
}

void save_cache(std::span<const pre::WindowedSequence> sequences, const fs::path& path) {
    std::vector<Block> blocks;
    for (const auto& s : sequences) {
        const std::string prefix = "patient/" + s.patient_id + "/";
        blocks.push_back({prefix + "windows", {s.size(), s.channels, s.window}, s.data});
        blocks.push_back({prefix + "labels", {s.size()}, {s.labels.begin(), s.labels.end()}});
        blocks.push_back({prefix + "domain", {1}, {static_cast<double>(s.domain)}});
    }
    write_blocks(path, blocks);
}

std::vector<pre::WindowedSequence> load_cache(const fs::path& path) {
    const auto blocks = read_blocks(path);
    if (blocks.size() % 3 != 0) {
        throw FormatError(path.string() + ": window cache must hold three blocks per patient");
    }
    std::vector<pre::WindowedSequence> out;
    for (std::size_t i = 0; i < blocks.size(); i += 3) {
        const auto& w = blocks[i];
        const auto& l = blocks[i + 1];
        const auto& d = blocks[i + 2];
        const auto slash = w.name.rfind('/');
        if (w.name.rfind("patient/", 0) != 0 || slash == std::string::npos ||
            w.name.substr(slash) != "/windows" || w.shape.size() != 3) {
            throw FormatError(path.string() + ": unexpected block " + w.name);
        }
        const std::string prefix = w.name.substr(0, slash + 1);
        if (l.name != prefix + "labels" || d.name != prefix + "domain" || l.shape != ad::Shape{w.shape[0]} ||
            d.shape != ad::Shape{1}) {
            throw FormatError(path.string() + ": malformed cache entry for " + prefix);
        }
        pre::WindowedSequence s;
        s.patient_id = prefix.substr(8, prefix.size() - 9);
        s.channels = w.shape[1];
        s.window = w.shape[2];
        s.data = w.values;
        s.labels.assign(l.values.size(), 0);
        for (std::size_t t = 0; t < l.values.size(); ++t) {
            s.labels[t] = static_cast<int>(l.values[t]);
        }
        s.domain = static_cast<int>(d.values[0]);
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace eegdann::io

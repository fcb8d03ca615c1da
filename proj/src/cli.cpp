#include "eegdann/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "eegdann/data_io.hpp"

namespace eegdann::cli {

using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Strict JSON reading
// ---------------------------------------------------------------------------

void reject_unknown(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) {
        throw ConfigError(where + " must be an object");
    }
    for (const auto& [key, value] : obj.items()) {
        const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; });
        if (!known) {
            throw ConfigError("unknown key \"" + key + "\" in " + where);
        }
    }
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
    if (!obj.contains(key)) {
        return;
    }
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(where + "." + key + " has the wrong type");
    }
}

void positive(double v, const std::string& name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
        throw ConfigError(name + " must be positive");
    }
}

void positive(std::size_t v, const std::string& name) {
    if (v == 0) {
        throw ConfigError(name + " must be positive");
    }
}

fs::path resolve(const std::string& p, const fs::path& base) {
    if (p.empty()) {
        return {};
    }
    const fs::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json parse_json_file(const fs::path& path, bool config) {
    const std::string text = read_text(path);
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        const std::string msg = path.string() + ": " + e.what();
        if (config) {
            throw ConfigError(msg);
        }
        throw DataError(msg);
    }
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    const fs::path tmp = path.string() + ".partial";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) {
            throw DataError("cannot write " + path.string());
        }
        out << text;
        if (!out) {
            throw DataError("short write to " + path.string());
        }
    }
    fs::rename(tmp, path);
}

std::string fixed(double v, int digits = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<':
                out += "&lt;";
                break;
            case '>':
                out += "&gt;";
                break;
            case '&':
                out += "&amp;";
                break;
            default:
                out += c;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Data loading shared by the commands
// ---------------------------------------------------------------------------

std::vector<pre::WindowedSequence> load_cohort(const RunConfig& cfg, std::ostream& err) {
    std::vector<pre::WindowedSequence> cohort;
    if (!cfg.cache.empty()) {
        cohort = io::load_cache(cfg.cache);
    } else {
        if (cfg.recordings.empty()) {
            throw ConfigError("config names neither \"recordings\" nor \"cache\"");
        }
        for (const auto& paths : io::list_recordings(cfg.recordings)) {
            err << "preprocessing " << paths.csv.filename().string() << "\n";
            cohort.push_back(pre::preprocess(io::load_recording(paths), cfg.preprocess));
        }
    }
    if (cohort.empty()) {
        throw DataError("no recordings found");
    }
    for (std::size_t k = 0; k < cohort.size(); ++k) {
        const auto& s = cohort[k];
        if (s.channels != cfg.arch.in_channels || s.window != cfg.arch.window) {
            throw DataError("patient " + s.patient_id + " has " + std::to_string(s.channels) + "x" +
                            std::to_string(s.window) + " windows but the network expects " +
                            std::to_string(cfg.arch.in_channels) + "x" + std::to_string(cfg.arch.window));
        }
        cohort[k].domain = static_cast<int>(k);
    }
    return cohort;
}

train::ProgressFn progress_to(std::ostream& err) {
    return [&err](const std::string& msg) { err << msg << "\n"; };
}

json fold_to_json(const eval::FoldResult& r) {
    return {{"patient", r.patient_id},
            {"seed", r.seed},
            {"arm", eval::arm_name(r.arm)},
            {"tau", r.tau},
            {"windows", r.windows},
            {"sensitivity", r.metrics.sensitivity},
            {"specificity", r.metrics.specificity},
            {"mcc", r.metrics.mcc},
            {"auc_roc", r.auc_roc},
            {"auc_pr", r.auc_pr}};
}

eval::FoldResult fold_from_json(const json& j) {
    eval::FoldResult r;
    r.patient_id = j.at("patient").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    const auto arm = eval::parse_arm(j.at("arm").get<std::string>());
    if (!arm) {
        throw DataError("manifest names an unknown arm");
    }
    r.arm = *arm;
    r.tau = j.at("tau").get<double>();
    r.windows = j.at("windows").get<std::size_t>();
    r.metrics = {j.at("sensitivity").get<double>(), j.at("specificity").get<double>(), j.at("mcc").get<double>()};
    r.auc_roc = j.at("auc_roc").get<double>();
    r.auc_pr = j.at("auc_pr").get<double>();
    return r;
}

std::string curve_csv(const std::vector<eval::CurvePoint>& pts, const char* x, const char* y) {
    std::string out = std::string("threshold,") + x + "," + y + "\n";
    for (const auto& p : pts) {
        out += (std::isinf(p.threshold) ? std::string("inf") : fixed(p.threshold, 9)) + "," + fixed(p.x, 9) + "," +
               fixed(p.y, 9) + "\n";
    }
    return out;
}

std::vector<eval::CurvePoint> read_curve_csv(const fs::path& path) {
    std::istringstream in(read_text(path));
    std::string line;
    std::getline(in, line);
    std::vector<eval::CurvePoint> pts;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        eval::CurvePoint p;
        std::istringstream fields(line);
        std::string a, b, c;
        if (!std::getline(fields, a, ',') || !std::getline(fields, b, ',') || !std::getline(fields, c)) {
            throw io::FormatError(path.string() + ":" + std::to_string(lineno) + ": expected 3 fields");
        }
        try {
            p.threshold = a == "inf" ? INFINITY : std::stod(a);
            p.x = std::stod(b);
            p.y = std::stod(c);
        } catch (const std::exception&) {
            throw io::FormatError(path.string() + ":" + std::to_string(lineno) + ": not a number");
        }
        pts.push_back(p);
    }
    return pts;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

struct SynthArgs {
    std::optional<std::size_t> patients;
    std::optional<std::uint64_t> seed;
    std::optional<double> shift;
    std::string spec;
    std::string out;
};

int command_synth(const SynthArgs& a, std::ostream& out) {
    io::CohortSpec spec;
    if (!a.spec.empty()) {
        spec = parse_cohort_spec(parse_json_file(a.spec, true));
    }
    if (a.patients) {
        spec.patients = *a.patients;
    }
    if (a.seed) {
        spec.seed = *a.seed;
    }
    if (a.shift) {
        spec.shift_strength = *a.shift;
    }
    const auto cohort = io::synthesize_cohort(spec);
    fs::create_directories(a.out);
    for (const auto& rec : cohort) {
        io::save_recording(rec, io::RecordingPaths::in_dir(a.out, rec.patient_id));
        out << rec.patient_id << " " << fixed(rec.duration_s(), 2) << " s seizure " << fixed(rec.seizures[0].onset_s, 2)
            << "-" << fixed(rec.seizures[0].offset_s, 2) << " s\n";
    }
    return 0;
}

struct PreprocessArgs {
    std::string input;
    std::string out;
    std::string config;
};

int command_preprocess(const PreprocessArgs& a, std::ostream& out, std::ostream& err) {
    RunConfig cfg = a.config.empty() ? RunConfig{} : load_config(a.config);
    cfg.cache.clear();
    cfg.recordings = a.input;
    const auto cohort = load_cohort(cfg, err);
    io::save_cache(cohort, a.out);
    std::size_t windows = 0;
    for (const auto& s : cohort) {
        windows += s.size();
    }
    out << cohort.size() << " patients, " << windows << " windows -> " << a.out << "\n";
    return 0;
}

struct TrainArgs {
    std::string config;
    bool no_adversarial = false;
    bool cnn_only = false;
    std::optional<std::uint64_t> seed;
    std::string out;
};

int command_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
    RunConfig cfg = load_config(a.config);
    if (!a.out.empty()) {
        cfg.output = a.out;
    }
    if (cfg.output.empty()) {
        throw ConfigError("no output directory (config \"output\" or --out)");
    }
    const std::uint64_t seed = a.seed.value_or(cfg.seeds.front());
    const auto cohort = load_cohort(cfg, err);
    std::vector<const pre::WindowedSequence*> ptrs;
    for (const auto& s : cohort) {
        ptrs.push_back(&s);
    }
    const train::SourceDataset ds(ptrs);
    train::Stage1Config s1 = cfg.stage1;
    s1.adversarial = !a.no_adversarial;
    auto stage1 = train::stage1_train(ds, cfg.arch, s1, seed, progress_to(err));

    fs::create_directories(cfg.output);
    std::string curves = "stage,epoch,label_loss,domain_loss\n";
    for (std::size_t e = 0; e < stage1.curve.size(); ++e) {
        curves += "1," + std::to_string(e + 1) + "," + fixed(stage1.curve[e].label, 9) + "," +
                  fixed(stage1.curve[e].domain, 9) + "\n";
    }
    std::vector<double> train_probs;
    std::string kind;
    if (a.cnn_only) {
        kind = "cnn";
        for (const auto& s : cohort) {
            const auto p = train::predict_windows(stage1.model, s);
            train_probs.insert(train_probs.end(), p.begin(), p.end());
        }
    } else {
        kind = "cnn_bilstm";
        auto stage2 = train::stage2_train(ds, stage1.model.features, cfg.arch, cfg.stage2, stage1.weights, seed,
                                          progress_to(err));
        for (std::size_t e = 0; e < stage2.epoch_loss.size(); ++e) {
            curves += "2," + std::to_string(e + 1) + "," + fixed(stage2.epoch_loss[e], 9) + ",\n";
        }
        for (const auto& s : cohort) {
            const auto p = train::predict_sequence(stage2.model, s);
            train_probs.insert(train_probs.end(), p.begin(), p.end());
        }
        io::save_weights(stage2.model.named_state(), cfg.output / "stage2.weights");
    }
    io::save_weights(stage1.model.named_state(), cfg.output / "stage1.weights");
    const auto choice = eval::select_threshold(train_probs, ds.labels());
    write_text(cfg.output / "loss_curves.csv", curves);
    const json tau{{"tau", choice.tau},
                   {"train_f1", choice.f1},
                   {"model", kind},
                   {"adversarial", !a.no_adversarial},
                   {"seed", seed},
                   {"config_hash", config_hash(cfg)}};
    write_text(cfg.output / "threshold.json", tau.dump(2) + "\n");
    out << "tau " << fixed(choice.tau) << " (training F1 " << fixed(choice.f1, 4) << ") -> " << cfg.output.string()
        << "\n";
    return 0;
}

struct EvalArgs {
    std::string config;
    std::optional<std::size_t> workers;
    bool restart = false;
    std::string out;
};

int command_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
    RunConfig cfg = load_config(a.config);
    if (!a.out.empty()) {
        cfg.output = a.out;
    }
    if (cfg.output.empty()) {
        throw ConfigError("no output directory (config \"output\" or --out)");
    }
    if (a.workers) {
        if (*a.workers == 0) {
            throw ConfigError("--workers must be positive");
        }
        cfg.workers = *a.workers;
    }
    const auto cohort = load_cohort(cfg, err);
    fs::create_directories(cfg.output / "curves");
    const fs::path manifest_path = cfg.output / "manifest.json";
    const std::string hash = config_hash(cfg);

    std::vector<eval::FoldResult> completed;
    if (!a.restart && fs::exists(manifest_path)) {
        const json m = parse_json_file(manifest_path, false);
        if (m.value("config_hash", "") != hash) {
            throw ConfigError(manifest_path.string() + " belongs to a different config; use --restart");
        }
        for (const auto& r : m.at("completed")) {
            completed.push_back(fold_from_json(r));
        }
        err << "resuming with " << completed.size() << " completed fold runs\n";
    }

    json manifest{{"config_hash", hash}, {"config", config_to_json(cfg)}, {"complete", false}};
    manifest["completed"] = json::array();
    for (const auto& r : completed) {
        manifest["completed"].push_back(fold_to_json(r));
    }
    write_text(manifest_path, manifest.dump(2) + "\n");

    const auto on_unit = [&](const std::vector<eval::FoldOutputs>& outs) {
        for (const auto& o : outs) {
            const std::string stem = o.result.patient_id + "_s" + std::to_string(o.result.seed) + "_" +
                                     eval::arm_name(o.result.arm);
            write_text(cfg.output / "curves" / (stem + "_roc.csv"),
                       curve_csv(eval::roc_curve(o.test_probs, o.test_labels), "fpr", "tpr"));
            write_text(cfg.output / "curves" / (stem + "_pr.csv"),
                       curve_csv(eval::pr_curve(o.test_probs, o.test_labels), "recall", "precision"));
            manifest["completed"].push_back(fold_to_json(o.result));
        }
        write_text(manifest_path, manifest.dump(2) + "\n");
    };
    eval::LopoConfig lc;
    lc.arch = cfg.arch;
    lc.stage1 = cfg.stage1;
    lc.stage2 = cfg.stage2;
    lc.seeds = cfg.seeds;
    lc.arms = cfg.arms;
    lc.workers = cfg.workers;
    const auto report = eval::lopo(cohort, lc, completed, on_unit, progress_to(err));
    for (const auto& w : report.warnings) {
        err << "warning: " << w << "\n";
    }
    write_text(cfg.output / "per_patient.csv", report.rows_csv());
    write_text(cfg.output / "aggregate.csv", report.aggregate_csv());
    manifest["complete"] = true;
    manifest["warnings"] = report.warnings;
    write_text(manifest_path, manifest.dump(2) + "\n");

    for (const auto& row : report.aggregate()) {
        out << eval::arm_name(row.arm);
        for (std::size_t m = 0; m < 5; ++m) {
            out << "  " << eval::kMetricNames[m] << " " << fixed(row.mean[m], 4) << " +- " << fixed(row.sd[m], 4);
        }
        out << "\n";
    }
    return 0;
}

struct InferArgs {
    std::string weights;
    std::string recording;
    double tau = 0.5;
    std::string config;
    std::string out;
    std::string svg;
};

int command_infer(const InferArgs& a, std::ostream& out) {
    if (!(a.tau > 0.0 && a.tau < 1.0)) {
        throw ConfigError("--tau must lie in (0, 1)");
    }
    const RunConfig cfg = a.config.empty() ? RunConfig{} : load_config(a.config);
    fs::path csv(a.recording);
    if (csv.extension() != ".csv") {
        csv += ".csv";
    }
    io::RecordingPaths paths{csv, fs::path(csv).replace_extension(".json")};
    const auto rec = io::load_recording(paths);
    const auto seq = pre::preprocess(rec, cfg.preprocess);
    if (seq.channels != cfg.arch.in_channels || seq.window != cfg.arch.window) {
        throw io::ShapeMismatch("recording yields " + std::to_string(seq.channels) + "x" +
                                std::to_string(seq.window) + " windows but the config expects " +
                                std::to_string(cfg.arch.in_channels) + "x" + std::to_string(cfg.arch.window));
    }

    const auto blocks = io::read_blocks(a.weights);
    const bool sequence = std::any_of(blocks.begin(), blocks.end(),
                                      [](const io::Block& b) { return b.name.rfind("sequence.", 0) == 0; });
    std::vector<double> probs;
    model::Rng rng(0);
    if (sequence) {
        model::SequenceModel m(cfg.arch, rng);
        io::assign_blocks(blocks, m.named_state());
        probs = train::predict_sequence(m, seq);
    } else {
        std::vector<io::Block> kept;
        for (const auto& b : blocks) {
            if (b.name.rfind("domain.", 0) != 0) {
                kept.push_back(b);
            }
        }
        model::DannModel m(cfg.arch, 2, rng);
        nn::NamedTensors state;
        m.features.append_state(state, "features");
        m.label.append_params(state, "label");
        io::assign_blocks(kept, state);
        probs = train::predict_windows(m, seq);
    }
    const auto decisions = eval::detect(probs, a.tau);
    const double window_s = static_cast<double>(cfg.arch.window) / rec.fs;
    std::string text = "window,start_s,probability,decision\n";
    for (std::size_t t = 0; t < probs.size(); ++t) {
        text += std::to_string(t) + "," + fixed(static_cast<double>(t) * window_s, 3) + "," + fixed(probs[t], 9) +
                "," + std::to_string(decisions[t]) + "\n";
    }
    if (a.out.empty()) {
        out << text;
    } else {
        write_text(a.out, text);
    }
    if (!a.svg.empty()) {
        write_text(a.svg, probability_svg(probs, seq.labels, a.tau, window_s, seq.patient_id));
    }
    return 0;
}

struct CurvesArgs {
    std::string input;
};

int command_curves(const CurvesArgs& a, std::ostream& out) {
    const fs::path dir = fs::path(a.input) / "curves";
    if (!fs::is_directory(dir)) {
        throw DataError("no curves directory in " + a.input);
    }
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.path().extension() == ".csv") {
            files.push_back(e.path());
        }
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        const std::string stem = f.stem().string();
        const bool roc = stem.size() > 4 && stem.substr(stem.size() - 4) == "_roc";
        const auto pts = read_curve_csv(f);
        fs::path svg = f;
        svg.replace_extension(".svg");
        write_text(svg, curve_svg(pts, stem, roc ? "false positive rate" : "recall",
                                  roc ? "true positive rate" : "precision"));
    }
    out << files.size() << " curves rendered in " << dir.string() << "\n";
    return 0;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

RunConfig parse_config(const json& doc, const fs::path& base_dir) {
    reject_unknown(doc, "config",
                   {"recordings", "cache", "output", "preprocess", "arch", "stage1", "stage2", "seeds", "arms",
                    "workers"});
    RunConfig cfg;
    std::string recordings, cache, output;
    read(doc, "recordings", recordings, "config");
    read(doc, "cache", cache, "config");
    read(doc, "output", output, "config");
    cfg.recordings = resolve(recordings, base_dir);
    cfg.cache = resolve(cache, base_dir);
    cfg.output = resolve(output, base_dir);

    if (doc.contains("preprocess")) {
        const auto& p = doc["preprocess"];
        reject_unknown(p, "preprocess", {"low_hz", "high_hz", "filter_order", "window"});
        read(p, "low_hz", cfg.preprocess.low_hz, "preprocess");
        read(p, "high_hz", cfg.preprocess.high_hz, "preprocess");
        read(p, "filter_order", cfg.preprocess.filter_order, "preprocess");
        read(p, "window", cfg.preprocess.window, "preprocess");
        positive(cfg.preprocess.low_hz, "preprocess.low_hz");
        if (cfg.preprocess.high_hz <= cfg.preprocess.low_hz) {
            throw ConfigError("preprocess.high_hz must exceed low_hz");
        }
        if (cfg.preprocess.filter_order <= 0 || cfg.preprocess.filter_order % 2 != 0) {
            throw ConfigError("preprocess.filter_order must be a positive even number");
        }
        positive(cfg.preprocess.window, "preprocess.window");
    }
    cfg.arch.window = cfg.preprocess.window;

    if (doc.contains("arch")) {
        const auto& a = doc["arch"];
        reject_unknown(a, "arch",
                       {"in_channels", "block_channels", "kernel", "label_hidden", "domain_hidden", "lstm_hidden",
                        "lstm_layers"});
        read(a, "in_channels", cfg.arch.in_channels, "arch");
        read(a, "block_channels", cfg.arch.block_channels, "arch");
        read(a, "kernel", cfg.arch.kernel, "arch");
        read(a, "label_hidden", cfg.arch.label_hidden, "arch");
        read(a, "domain_hidden", cfg.arch.domain_hidden, "arch");
        read(a, "lstm_hidden", cfg.arch.lstm_hidden, "arch");
        read(a, "lstm_layers", cfg.arch.lstm_layers, "arch");
        positive(cfg.arch.in_channels, "arch.in_channels");
        if (cfg.arch.block_channels.empty() ||
            std::find(cfg.arch.block_channels.begin(), cfg.arch.block_channels.end(), 0u) !=
                cfg.arch.block_channels.end()) {
            throw ConfigError("arch.block_channels must be a non-empty list of positive widths");
        }
        if (cfg.arch.kernel % 2 == 0) {
            throw ConfigError("arch.kernel must be odd");
        }
        positive(cfg.arch.label_hidden, "arch.label_hidden");
        positive(cfg.arch.domain_hidden, "arch.domain_hidden");
        positive(cfg.arch.lstm_hidden, "arch.lstm_hidden");
        positive(cfg.arch.lstm_layers, "arch.lstm_layers");
    }
    if ((cfg.arch.window >> cfg.arch.block_channels.size()) == 0) {
        throw ConfigError("window of " + std::to_string(cfg.arch.window) + " samples is too short for " +
                          std::to_string(cfg.arch.block_channels.size()) + " pooling blocks");
    }

    if (doc.contains("stage1")) {
        const auto& s = doc["stage1"];
        reject_unknown(s, "stage1", {"lr", "batch_size", "epochs"});
        read(s, "lr", cfg.stage1.lr, "stage1");
        read(s, "batch_size", cfg.stage1.batch_size, "stage1");
        read(s, "epochs", cfg.stage1.epochs, "stage1");
    }
    positive(cfg.stage1.lr, "stage1.lr");
    positive(cfg.stage1.batch_size, "stage1.batch_size");
    positive(cfg.stage1.epochs, "stage1.epochs");
    if (cfg.stage1.batch_size < 2) {
        throw ConfigError("stage1.batch_size must be at least 2 (batch norm)");
    }

    if (doc.contains("stage2")) {
        const auto& s = doc["stage2"];
        reject_unknown(s, "stage2", {"lr", "batch_size", "epochs", "recompute_class_weights"});
        read(s, "lr", cfg.stage2.lr, "stage2");
        read(s, "batch_size", cfg.stage2.batch_size, "stage2");
        read(s, "epochs", cfg.stage2.epochs, "stage2");
        read(s, "recompute_class_weights", cfg.stage2.recompute_class_weights, "stage2");
    }
    positive(cfg.stage2.lr, "stage2.lr");
    positive(cfg.stage2.batch_size, "stage2.batch_size");
    positive(cfg.stage2.epochs, "stage2.epochs");

    read(doc, "seeds", cfg.seeds, "config");
    if (cfg.seeds.empty()) {
        throw ConfigError("seeds must not be empty");
    }
    if (std::set<std::uint64_t>(cfg.seeds.begin(), cfg.seeds.end()).size() != cfg.seeds.size()) {
        throw ConfigError("seeds must be distinct");
    }
    if (doc.contains("arms")) {
        std::vector<std::string> names;
        read(doc, "arms", names, "config");
        cfg.arms.clear();
        for (const auto& n : names) {
            const auto arm = eval::parse_arm(n);
            if (!arm) {
                throw ConfigError("unknown arm \"" + n + "\"");
            }
            cfg.arms.push_back(*arm);
        }
        if (cfg.arms.empty()) {
            throw ConfigError("arms must not be empty");
        }
    }
    read(doc, "workers", cfg.workers, "config");
    positive(cfg.workers, "workers");
    return cfg;
}

RunConfig load_config(const fs::path& path) {
    return parse_config(parse_json_file(path, true), path.parent_path());
}

json config_to_json(const RunConfig& c) {
    std::vector<std::string> arms;
    for (auto a : c.arms) {
        arms.push_back(eval::arm_name(a));
    }
    return {{"recordings", c.recordings.string()},
            {"cache", c.cache.string()},
            {"output", c.output.string()},
            {"preprocess",
             {{"low_hz", c.preprocess.low_hz},
              {"high_hz", c.preprocess.high_hz},
              {"filter_order", c.preprocess.filter_order},
              {"window", c.preprocess.window}}},
            {"arch",
             {{"in_channels", c.arch.in_channels},
              {"block_channels", c.arch.block_channels},
              {"kernel", c.arch.kernel},
              {"label_hidden", c.arch.label_hidden},
              {"domain_hidden", c.arch.domain_hidden},
              {"lstm_hidden", c.arch.lstm_hidden},
              {"lstm_layers", c.arch.lstm_layers}}},
            {"stage1", {{"lr", c.stage1.lr}, {"batch_size", c.stage1.batch_size}, {"epochs", c.stage1.epochs}}},
            {"stage2",
             {{"lr", c.stage2.lr},
              {"batch_size", c.stage2.batch_size},
              {"epochs", c.stage2.epochs},
              {"recompute_class_weights", c.stage2.recompute_class_weights}}},
            {"seeds", c.seeds},
            {"arms", arms},
            {"workers", c.workers}};
}

std::string config_hash(const RunConfig& config) {
    json j = config_to_json(config);
    // Output location and parallelism do not change results.
    j.erase("output");
    j.erase("workers");
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : j.dump()) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

io::CohortSpec parse_cohort_spec(const json& doc) {
    reject_unknown(doc, "cohort spec",
                   {"patients", "seed", "fs", "duration_mean_s", "duration_sd_s", "duration_min_s", "seizure_mean_s",
                    "seizure_sd_s", "seizure_min_s", "background_uv", "shift_strength", "tilt_base", "tilt_spread",
                    "amplitude_spread", "rhythm_amplitude", "rhythm_low_hz", "rhythm_high_hz", "rhythm_width", "seizure_low_hz",
                    "seizure_high_hz", "ramp_start", "ramp_end", "focal_width", "propagation_rad", "ecg_amplitude", "heart_low_bpm", "heart_high_bpm",
                    "artifact_rate_per_min", "artifact_amplitude", "artifact_min_s", "artifact_max_s",
                    "outlier_patient", "quantum_uv"});
    io::CohortSpec s;
    const std::string w = "cohort spec";
    read(doc, "patients", s.patients, w);
    read(doc, "seed", s.seed, w);
    read(doc, "fs", s.fs, w);
    read(doc, "duration_mean_s", s.duration_mean_s, w);
    read(doc, "duration_sd_s", s.duration_sd_s, w);
    read(doc, "duration_min_s", s.duration_min_s, w);
    read(doc, "seizure_mean_s", s.seizure_mean_s, w);
    read(doc, "seizure_sd_s", s.seizure_sd_s, w);
    read(doc, "seizure_min_s", s.seizure_min_s, w);
    read(doc, "background_uv", s.background_uv, w);
    read(doc, "shift_strength", s.shift_strength, w);
    read(doc, "tilt_base", s.tilt_base, w);
    read(doc, "tilt_spread", s.tilt_spread, w);
    read(doc, "amplitude_spread", s.amplitude_spread, w);
    read(doc, "rhythm_amplitude", s.rhythm_amplitude, w);
    read(doc, "rhythm_low_hz", s.rhythm_low_hz, w);
    read(doc, "rhythm_high_hz", s.rhythm_high_hz, w);
    read(doc, "rhythm_width", s.rhythm_width, w);
    read(doc, "seizure_low_hz", s.seizure_low_hz, w);
    read(doc, "seizure_high_hz", s.seizure_high_hz, w);
    read(doc, "ramp_start", s.ramp_start, w);
    read(doc, "ramp_end", s.ramp_end, w);
    read(doc, "focal_width", s.focal_width, w);
    read(doc, "propagation_rad", s.propagation_rad, w);
    read(doc, "ecg_amplitude", s.ecg_amplitude, w);
    read(doc, "heart_low_bpm", s.heart_low_bpm, w);
    read(doc, "heart_high_bpm", s.heart_high_bpm, w);
    read(doc, "artifact_rate_per_min", s.artifact_rate_per_min, w);
    read(doc, "artifact_amplitude", s.artifact_amplitude, w);
    read(doc, "artifact_min_s", s.artifact_min_s, w);
    read(doc, "artifact_max_s", s.artifact_max_s, w);
    read(doc, "outlier_patient", s.outlier_patient, w);
    read(doc, "quantum_uv", s.quantum_uv, w);
    return s;
}

// ---------------------------------------------------------------------------
// SVG
// ---------------------------------------------------------------------------

namespace {

constexpr double kWidth = 720.0;
constexpr double kHeight = 320.0;
constexpr double kLeft = 60.0;
constexpr double kRight = 20.0;
constexpr double kTop = 30.0;
constexpr double kBottom = 45.0;

std::string svg_open(double w, double h, const std::string& title) {
    return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fixed(w, 0) + "\" height=\"" + fixed(h, 0) +
           "\" font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
           "<text x=\"" + fixed(w / 2, 1) + "\" y=\"18\" text-anchor=\"middle\">" + xml_escape(title) + "</text>\n";
}

std::string axes(double w, double h, const std::string& x_label, const std::string& y_label, double x_max) {
    const double pw = w - kLeft - kRight;
    const double ph = h - kTop - kBottom;
    std::string s = "<rect x=\"" + fixed(kLeft, 1) + "\" y=\"" + fixed(kTop, 1) + "\" width=\"" + fixed(pw, 1) +
                    "\" height=\"" + fixed(ph, 1) + "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double f = i / 4.0;
        const double y = kTop + ph * (1.0 - f);
        const double x = kLeft + pw * f;
        s += "<text x=\"" + fixed(kLeft - 6, 1) + "\" y=\"" + fixed(y + 4, 1) + "\" text-anchor=\"end\">" +
             fixed(f, 2) + "</text>\n";
        s += "<text x=\"" + fixed(x, 1) + "\" y=\"" + fixed(kTop + ph + 16, 1) + "\" text-anchor=\"middle\">" +
             fixed(f * x_max, x_max > 10 ? 0 : 2) + "</text>\n";
    }
    s += "<text x=\"" + fixed(kLeft + pw / 2, 1) + "\" y=\"" + fixed(h - 8, 1) + "\" text-anchor=\"middle\">" +
         xml_escape(x_label) + "</text>\n";
    s += "<text transform=\"translate(14," + fixed(kTop + ph / 2, 1) + ") rotate(-90)\" text-anchor=\"middle\">" +
         xml_escape(y_label) + "</text>\n";
    return s;
}

}  // namespace

std::string probability_svg(const std::vector<double>& probs, const std::vector<int>& labels, double tau,
                            double window_s, const std::string& title) {
    const double pw = kWidth - kLeft - kRight;
    const double ph = kHeight - kTop - kBottom;
    const double span = std::max(1.0, static_cast<double>(probs.size()) * window_s);
    const auto px = [&](double t) { return kLeft + pw * t / span; };
    const auto py = [&](double p) { return kTop + ph * (1.0 - p); };
    std::string s = svg_open(kWidth, kHeight, title);
    // Annotated seizure windows as a shaded band.
    for (std::size_t t = 0; t < labels.size(); ++t) {
        if (labels[t] == 1) {
            s += "<rect x=\"" + fixed(px(t * window_s), 2) + "\" y=\"" + fixed(kTop, 1) + "\" width=\"" +
                 fixed(pw * window_s / span, 2) + "\" height=\"" + fixed(ph, 1) + "\" fill=\"#f6d5d5\"/>\n";
        }
    }
    s += axes(kWidth, kHeight, "time (s)", "seizure probability", span);
    if (!probs.empty()) {
        s += "<polyline fill=\"none\" stroke=\"#1f4e9c\" stroke-width=\"1.5\" points=\"";
        for (std::size_t t = 0; t < probs.size(); ++t) {
            s += fixed(px((t + 0.5) * window_s), 2) + "," + fixed(py(probs[t]), 2) + " ";
        }
        s += "\"/>\n";
    }
    s += "<line x1=\"" + fixed(kLeft, 1) + "\" x2=\"" + fixed(kLeft + pw, 1) + "\" y1=\"" + fixed(py(tau), 2) +
         "\" y2=\"" + fixed(py(tau), 2) + "\" stroke=\"#c0392b\" stroke-dasharray=\"6 4\"/>\n";
    s += "<text x=\"" + fixed(kLeft + pw - 4, 1) + "\" y=\"" + fixed(py(tau) - 4, 2) +
         "\" text-anchor=\"end\" fill=\"#c0392b\">tau = " + fixed(tau, 3) + "</text>\n";
    s += "</svg>\n";
    return s;
}

std::string curve_svg(const std::vector<eval::CurvePoint>& points, const std::string& title,
                      const std::string& x_label, const std::string& y_label) {
    const double size = 360.0;
    const double pw = size - kLeft - kRight;
    const double ph = size - kTop - kBottom;
    std::string s = svg_open(size, size, title);
    s += axes(size, size, x_label, y_label, 1.0);
    s += "<polyline fill=\"none\" stroke=\"#1f4e9c\" stroke-width=\"1.5\" points=\"";
    for (const auto& p : points) {
        s += fixed(kLeft + pw * p.x, 2) + "," + fixed(kTop + ph * (1.0 - p.y), 2) + " ";
    }
    s += "\"/>\n</svg>\n";
    return s;
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Cross-patient EEG seizure detection with domain-adversarial training"};
    app.require_subcommand(1);

    SynthArgs synth;
    auto* c_synth = app.add_subcommand("synth", "Write a synthetic recording cohort");
    c_synth->add_option("--patients", synth.patients, "Number of patients (default 6)");
    c_synth->add_option("--seed", synth.seed, "Cohort seed (default 7)");
    c_synth->add_option("--shift", synth.shift, "Between-patient shift strength");
    c_synth->add_option("--spec", synth.spec, "Cohort spec JSON");
    c_synth->add_option("--out", synth.out, "Output directory")->required();

    PreprocessArgs prep;
    auto* c_prep = app.add_subcommand("preprocess", "Montage, filter, standardise and window a recording directory");
    c_prep->add_option("--in", prep.input, "Recording directory")->required();
    c_prep->add_option("--out", prep.out, "Window cache file")->required();
    c_prep->add_option("--config", prep.config, "Run config JSON (preprocess section)");

    TrainArgs tr;
    auto* c_train = app.add_subcommand("train", "Train on every patient of the cohort");
    c_train->add_option("--config", tr.config, "Run config JSON")->required();
    c_train->add_flag("--no-adversarial", tr.no_adversarial, "Stage 1 with the gradient reversal disabled");
    c_train->add_flag("--cnn-only", tr.cnn_only, "Skip the BiLSTM stage");
    c_train->add_option("--seed", tr.seed, "Seed (default: first config seed)");
    c_train->add_option("--out", tr.out, "Output directory (overrides config)");

    EvalArgs ev;
    auto* c_eval = app.add_subcommand("eval", "Leave-one-patient-out evaluation over seeds and arms");
    c_eval->add_option("--config", ev.config, "Run config JSON")->required();
    c_eval->add_option("--workers", ev.workers, "Parallel fold runs");
    c_eval->add_flag("--restart", ev.restart, "Ignore an existing manifest");
    c_eval->add_option("--out", ev.out, "Output directory (overrides config)");

    InferArgs inf;
    auto* c_infer = app.add_subcommand("infer", "Per-window probabilities and decisions for one recording");
    c_infer->add_option("--weights", inf.weights, "stage1.weights or stage2.weights")->required();
    c_infer->add_option("--recording", inf.recording, "Recording CSV (sidecar JSON alongside)")->required();
    c_infer->add_option("--tau", inf.tau, "Decision threshold")->required();
    c_infer->add_option("--config", inf.config, "Run config JSON (architecture, preprocessing)");
    c_infer->add_option("--out", inf.out, "Output CSV (default: stdout)");
    c_infer->add_option("--svg", inf.svg, "Probability trace SVG");

    CurvesArgs cur;
    auto* c_curves = app.add_subcommand("curves", "Render ROC/PR point files of an eval run as SVG");
    c_curves->add_option("--in", cur.input, "Eval output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*c_synth) {
            return command_synth(synth, out);
        }
        if (*c_prep) {
            return command_preprocess(prep, out, err);
        }
        if (*c_train) {
            return command_train(tr, out, err);
        }
        if (*c_eval) {
            return command_eval(ev, out, err);
        }
        if (*c_infer) {
            return command_infer(inf, out);
        }
        if (*c_curves) {
            return command_curves(cur, out);
        }
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << "\n";
        return 3;
    } catch (const NumericError& e) {
        err << "numeric failure: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

}  // namespace eegdann::cli

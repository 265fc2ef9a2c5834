#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mtseg/checkpoint.hpp"
#include "mtseg/detection.hpp"
#include "mtseg/eval.hpp"
#include "mtseg/gradcheck.hpp"
#include "mtseg/io_util.hpp"
#include "mtseg/network.hpp"
#include "mtseg/optimizer.hpp"
#include "mtseg/pgm.hpp"
#include "mtseg/preprocess.hpp"
#include "mtseg/synthdata.hpp"

namespace fs = std::filesystem;
using namespace mtseg;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// One flat option set shared by every subcommand; each command reads the
// fields it needs. Config-file keys use the flag names with '-' -> '_'.
struct Opts {
    uint64_t seed = 1;
    double width_mult = 1.0;
    int input_size = 96;
    std::string config, out, dataset, detections, checkpoint, frame;
    std::string truth_comp, truth_tip;

    int count = 100;
    double split = 0.7;
    int size = 160;
    double occlude = 0.2;

    int epochs = 120;
    int batch = 8;
    double lr = 1e-3;
    int64_t max_steps = 0;
    bool no_augment = false;
    int checkpoint_every = 0;

    std::string thresholds = "0.25,0.5,1,2,4,8";
    std::string seg_thresholds = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.8,1";
    int band_t = 300;
    int mode_bin = 1;
    int min_blob = 3;
    int64_t min_area = 64;
    int bench_iters = 30;
};

void assign(uint64_t& var, const std::string& v) { var = uint64_t(io::parse_int(v, "config value")); }
void assign(int& var, const std::string& v) { var = int(io::parse_int(v, "config value")); }
void assign(int64_t& var, const std::string& v) { var = io::parse_int(v, "config value"); }
void assign(double& var, const std::string& v) { var = io::parse_double(v, "config value"); }
void assign(std::string& var, const std::string& v) { var = v; }
void assign(bool& var, const std::string& v) {
    if (v == "true" || v == "1")
        var = true;
    else if (v == "false" || v == "0")
        var = false;
    else
        throw DataError("boolean config value must be true/false/1/0, got `" + v + "`");
}

struct Setting {
    CLI::Option* opt = nullptr;
    std::function<void(const std::string&)> set;
};

struct Registry {
    std::map<std::string, Setting> by_key;
    std::set<std::string> provided;  // set by flag or config file

    bool has(const std::string& key) const { return provided.count(key) > 0; }
};

template <typename T>
void add_opt(Registry& reg, CLI::App* cmd, const std::string& flag, T& var,
             const std::string& help) {
    CLI::Option* opt = cmd->add_option(flag, var, help);
    std::string key = flag.substr(2);
    std::replace(key.begin(), key.end(), '-', '_');
    reg.by_key[key] = {opt, [&var](const std::string& v) { assign(var, v); }};
}

void add_flag(Registry& reg, CLI::App* cmd, const std::string& flag, bool& var,
              const std::string& help) {
    CLI::Option* opt = cmd->add_flag(flag, var, help);
    std::string key = flag.substr(2);
    std::replace(key.begin(), key.end(), '-', '_');
    reg.by_key[key] = {opt, [&var](const std::string& v) { assign(var, v); }};
}

Registry add_common(CLI::App* cmd, Opts& o) {
    Registry reg;
    add_opt(reg, cmd, "--config", o.config, "flat key=value config file; flags win");
    add_opt(reg, cmd, "--seed", o.seed, "deterministic stream seed");
    add_opt(reg, cmd, "--width-mult", o.width_mult, "channel width multiplier");
    add_opt(reg, cmd, "--input-size", o.input_size, "network input height and width");
    add_opt(reg, cmd, "--out", o.out, "output directory");
    add_opt(reg, cmd, "--dataset", o.dataset, "dataset manifest path");
    add_opt(reg, cmd, "--detections", o.detections, "detector output file; frame_id must match the depth file stem");
    add_opt(reg, cmd, "--checkpoint", o.checkpoint, "model checkpoint path");
    add_opt(reg, cmd, "--frame", o.frame, "16-bit depth PGM to run inference on");
    add_opt(reg, cmd, "--truth-comp", o.truth_comp, "component truth PGM for accuracy reporting");
    add_opt(reg, cmd, "--truth-tip", o.truth_tip, "fingertip truth PGM for accuracy reporting");
    add_opt(reg, cmd, "--count", o.count, "scenes to generate");
    add_opt(reg, cmd, "--split", o.split, "train fraction of the dataset");
    add_opt(reg, cmd, "--size", o.size, "generated scene canvas size");
    add_opt(reg, cmd, "--occlude", o.occlude, "fraction of scenes with an occluded fingertip");
    add_opt(reg, cmd, "--epochs", o.epochs, "training epochs");
    add_opt(reg, cmd, "--batch", o.batch, "batch size");
    add_opt(reg, cmd, "--lr", o.lr, "initial learning rate");
    add_opt(reg, cmd, "--max-steps", o.max_steps, "hard cap on optimizer steps (0 = none)");
    add_flag(reg, cmd, "--no-augment", o.no_augment, "disable training augmentation");
    add_opt(reg, cmd, "--checkpoint-every", o.checkpoint_every, "also checkpoint every N epochs");
    add_opt(reg, cmd, "--thresholds", o.thresholds, "fingertip error thresholds, comma separated");
    add_opt(reg, cmd, "--seg-thresholds", o.seg_thresholds, "segmentation error thresholds, comma separated");
    add_opt(reg, cmd, "--band-t", o.band_t, "depth band half-width around the mode");
    add_opt(reg, cmd, "--mode-bin", o.mode_bin, "histogram bin width for the depth mode");
    add_opt(reg, cmd, "--min-blob", o.min_blob, "minimum fingertip component area");
    add_opt(reg, cmd, "--min-area", o.min_area, "minimum proposed region area");
    add_opt(reg, cmd, "--bench-iters", o.bench_iters, "timed iterations for bench");
    return reg;
}

// key=value lines; blank lines and # comments allowed; unknown keys and
// duplicates are rejected so typos cannot pass silently.
void apply_config(Registry& reg, const fs::path& path) {
    const std::string text = io::read_text_file(path);
    std::set<std::string> seen;
    size_t start = 0;
    int line_no = 0;
    while (start < text.size()) {
        size_t end = text.find('\n', start);
        if (end == std::string::npos) end = text.size();
        std::string line = text.substr(start, end - start);
        start = end + 1;
        ++line_no;
        const auto where = [&] { return path.string() + ":" + std::to_string(line_no); };

        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\r");
            const auto b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        if (trim(line).empty()) continue;

        const size_t eq = line.find('=');
        if (eq == std::string::npos) throw DataError(where() + ": expected key=value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw DataError(where() + ": empty key");

        const auto it = reg.by_key.find(key);
        if (it == reg.by_key.end()) throw DataError(where() + ": unknown config key `" + key + "`");
        if (!seen.insert(key).second) throw DataError(where() + ": duplicate key `" + key + "`");

        reg.provided.insert(key);
        if (it->second.opt->count() == 0) it->second.set(value);
    }
}

void note_flag_provenance(Registry& reg) {
    for (auto& [key, setting] : reg.by_key)
        if (setting.opt->count() > 0) reg.provided.insert(key);
}

std::vector<double> parse_threshold_list(const std::string& s, const char* what) {
    std::vector<double> out;
    size_t start = 0;
    while (start <= s.size()) {
        size_t comma = s.find(',', start);
        if (comma == std::string::npos) comma = s.size();
        const std::string tok = s.substr(start, comma - start);
        if (!tok.empty()) out.push_back(io::parse_double(tok, what));
        start = comma + 1;
    }
    if (out.empty()) throw DataError(std::string(what) + ": empty threshold list");
    return out;
}

void require(bool ok, const std::string& what) {
    if (!ok) throw UsageError(what);
}

ThresholdParams threshold_params(const Opts& o) {
    ThresholdParams p;
    p.t = o.band_t;
    p.mode_bin_width = o.mode_bin;
    return p;
}

NetworkSpec spec_from(const Opts& o) {
    NetworkSpec spec;
    spec.input_h = o.input_size;
    spec.input_w = o.input_size;
    spec.width_multiplier = float(o.width_mult);
    spec.validate();
    return spec;
}

Image8 as_image(const ClassMap& m) {
    Image8 img(m.w, m.h);
    img.v = m.v;
    return img;
}

constexpr const char* kFingerNames[5] = {"thumb", "index", "middle", "ring", "pinky"};

int cmd_synth(const Opts& o, const Registry& reg) {
    require(reg.has("seed"), "synth requires --seed");
    require(!o.out.empty(), "synth requires --out");
    const DatasetSummary ds = make_dataset(o.out, o.count, o.seed, o.split, o.size,
                                           float(o.occlude));
    std::cout << "wrote " << ds.train_ids.size() << " train / " << ds.test_ids.size()
              << " test scenes under " << ds.dir.string() << "\n"
              << "train manifest: " << ds.train_manifest.string() << "\n"
              << "test manifest:  " << ds.test_manifest.string() << "\n";
    return 0;
}

int cmd_train(const Opts& o, const Registry& reg) {
    require(reg.has("seed"), "train requires --seed");
    require(!o.dataset.empty(), "train requires --dataset");
    require(!o.out.empty(), "train requires --out");

    TrainConfig cfg;
    cfg.batch_size = o.batch;
    cfg.lr_start = float(o.lr);
    cfg.epochs = o.epochs;
    cfg.max_steps = o.max_steps;
    cfg.seed = o.seed;
    cfg.augment = !o.no_augment;
    cfg.out_dir = o.out;
    cfg.checkpoint_every_epochs = o.checkpoint_every;
    cfg.validate();

    Network* net = nullptr;
    std::optional<Network> fresh;
    std::optional<LoadedCheckpoint> loaded;
    std::optional<ResumeState> resume;
    if (!o.checkpoint.empty()) {
        loaded.emplace(load_checkpoint(o.checkpoint));
        if (!loaded->has_adam)
            throw DataError(o.checkpoint + ": checkpoint has no optimizer state to resume from");
        net = &loaded->net;
        resume.emplace(ResumeState{loaded->adam, loaded->meta});
        std::cout << "resuming from " << o.checkpoint << " at step "
                  << loaded->meta.iteration << "\n";
    } else {
        fresh.emplace(spec_from(o), o.seed);
        net = &*fresh;
    }

    const auto samples = load_samples(o.dataset, threshold_params(o), net->spec().input_h,
                                      net->spec().input_w);
    std::cout << "training on " << samples.size() << " samples, width "
              << net->spec().width_multiplier << ", batch " << cfg.batch_size << "\n";

    TrainCallbacks callbacks;
    callbacks.augment = [](const TrainSample& s, uint64_t key) { return augment(s, key); };
    callbacks.on_epoch = [](int epoch, double mean_loss, float lr) {
        std::cout << "epoch " << epoch << " loss " << mean_loss << " lr " << lr << "\n";
    };

    const TrainResult result = train_loop(*net, samples, cfg, callbacks,
                                          resume ? &*resume : nullptr);
    if (result.diverged) {
        std::cerr << "error: training diverged: " << result.message << "\n";
        return 3;
    }
    std::cout << "ran " << result.steps_run << " steps; checkpoint at "
              << result.checkpoint_path.string() << "\n";
    return 0;
}

int cmd_eval(const Opts& o) {
    require(!o.dataset.empty(), "eval requires --dataset");
    require(!o.checkpoint.empty(), "eval requires --checkpoint");
    require(!o.out.empty(), "eval requires --out");

    LoadedCheckpoint loaded = load_checkpoint(o.checkpoint);
    Network& net = loaded.net;
    const auto samples = load_samples(o.dataset, threshold_params(o), net.spec().input_h,
                                      net.spec().input_w);
    if (samples.empty()) throw DataError(o.dataset + ": empty dataset");

    std::vector<ClassMap> comp_pred, comp_truth, tip_pred, tip_truth;
    std::vector<TipErrors> errors;
    for (const auto& s : samples) {
        Network::Prediction pred = net.predict(s.input);
        const auto tips = extract_tip_centers(pred.tip, o.min_blob);
        errors.push_back(fingertip_error(tips, s.tips));
        comp_pred.push_back(std::move(pred.comp));
        tip_pred.push_back(std::move(pred.tip));
        comp_truth.push_back(s.comp);
        tip_truth.push_back(s.tip);
    }

    EvalReport report;
    report.precision =
        precision_curve(errors, parse_threshold_list(o.thresholds, "thresholds"));
    const auto seg_ts = parse_threshold_list(o.seg_thresholds, "seg_thresholds");
    report.comp_seg = seg_error_curve(comp_pred, comp_truth, seg_ts);
    report.tip_seg = seg_error_curve(tip_pred, tip_truth, seg_ts);

    const ReportPaths paths = emit_report(report, o.out);

    double comp_err = 0, tip_err = 0;
    for (size_t i = 0; i < samples.size(); ++i) {
        comp_err += seg_frame_error(comp_pred[i], comp_truth[i]);
        tip_err += seg_frame_error(tip_pred[i], tip_truth[i]);
    }
    std::cout << "evaluated " << samples.size() << " frames\n"
              << "mean component frame error " << comp_err / double(samples.size()) << "\n"
              << "mean fingertip frame error " << tip_err / double(samples.size()) << "\n"
              << io::read_text_file(paths.summary)
              << "wrote " << paths.precision_csv.string() << ", "
              << paths.comp_seg_csv.string() << ", " << paths.tip_seg_csv.string() << "\n";
    return 0;
}

int cmd_infer(const Opts& o) {
    require(!o.frame.empty(), "infer requires --frame");
    require(!o.checkpoint.empty(), "infer requires --checkpoint");
    require(!o.out.empty(), "infer requires --out");
    require(o.truth_comp.empty() == o.truth_tip.empty(),
            "truth maps come as a pair: --truth-comp with --truth-tip");

    LoadedCheckpoint loaded = load_checkpoint(o.checkpoint);
    Network& net = loaded.net;

    const Image16 depth = read_pgm16(o.frame);
    RgbdFrame frame(depth.width, depth.height);
    frame.depth = depth.v;

    std::vector<BBox> boxes;
    if (!o.detections.empty()) {
        const auto recs = load_detections(o.detections);
        const std::string id = fs::path(o.frame).stem().string();
        const auto it = recs.find(id);
        if (it == recs.end())
            throw DataError(o.detections + ": no detections for frame id `" + id + "`");
        for (const auto& d : it->second.detections) {
            d.box.validate(frame.width, frame.height);
            boxes.push_back(d.box);
        }
    } else {
        boxes = propose_regions(frame, o.min_area, o.band_t);
        if (boxes.empty()) throw DataError(o.frame + ": no regions above the area floor");
    }

    Image8 truth_comp, truth_tip;
    if (!o.truth_comp.empty()) {
        truth_comp = read_pgm8(o.truth_comp);
        truth_tip = read_pgm8(o.truth_tip);
    }

    fs::create_directories(o.out);
    std::string report;
    char name[64];
    for (size_t i = 0; i < boxes.size(); ++i) {
        const DepthCrop crop = threshold_hand(frame, boxes[i], threshold_params(o));
        const Tensor4 input = to_network_input(crop, net.spec().input_h, net.spec().input_w);
        const Network::Prediction pred = net.predict(input);

        std::snprintf(name, sizeof name, "comp_%02zu.pgm", i);
        write_pgm(fs::path(o.out) / name, as_image(pred.comp));
        std::snprintf(name, sizeof name, "tip_%02zu.pgm", i);
        write_pgm(fs::path(o.out) / name, as_image(pred.tip));

        const auto tips = extract_tip_centers(pred.tip, o.min_blob);
        std::string tip_lines;
        for (size_t f = 0; f < 5; ++f) {
            tip_lines += kFingerNames[f];
            if (tips[f].present)
                tip_lines += " " + io::format_float(double(tips[f].x)) + " " +
                             io::format_float(double(tips[f].y));
            else
                tip_lines += " absent";
            tip_lines += "\n";
        }
        std::snprintf(name, sizeof name, "tips_%02zu.txt", i);
        io::write_file_atomic(fs::path(o.out) / name, tip_lines);

        std::string line = "region " + std::to_string(i) + " box (" +
                           std::to_string(boxes[i].x0) + "," + std::to_string(boxes[i].y0) +
                           ")-(" + std::to_string(boxes[i].x1) + "," +
                           std::to_string(boxes[i].y1) + ")";
        if (!o.truth_comp.empty()) {
            std::array<TipPoint, 5> no_tips{};
            const TrainSample target =
                make_training_sample(frame, truth_comp, truth_tip, no_tips, boxes[i],
                                     threshold_params(o), net.spec().input_h, net.spec().input_w);
            line += " comp_acc " +
                    io::format_float(1.0 - seg_frame_error(pred.comp, target.comp));
            line += " tip_acc " + io::format_float(1.0 - seg_frame_error(pred.tip, target.tip));
        }
        report += line + "\n";
        std::cout << line << "\n";
    }
    io::write_file_atomic(fs::path(o.out) / "report.txt", report);
    return 0;
}

int cmd_gradcheck(const Opts& o) {
    (void)o;
    const double tolerance = 1e-3;
    double worst = 0;
    for (const uint64_t seed : {1ull, 42ull, 1234ull})
        for (const auto& name : gradcheck_cases()) {
            const GradCheckReport r = gradcheck(name, seed);
            worst = std::max(worst, r.max_rel_err);
            std::cout << name << " seed " << seed << " max_rel_err " << r.max_rel_err
                      << (r.max_rel_err < tolerance ? " ok" : " FAIL") << "\n";
        }
    std::cout << (worst < tolerance ? "gradcheck passed" : "gradcheck FAILED")
              << " (worst " << worst << ", tolerance " << tolerance << ")\n";
    return worst < tolerance ? 0 : 3;
}

int cmd_params(const Opts& o) {
    const NetworkSpec spec = spec_from(o);
    const auto defs = layer_defs(spec);
    std::cout << "layer            in   out  params\n";
    for (const auto& d : defs) {
        const int64_t params = int64_t(d.out_ch) * d.in_ch * 9 + d.out_ch +
                               (d.bn ? 2 * int64_t(d.out_ch) : 0);
        std::printf("%-14s %5d %5d %9lld\n", d.name.c_str(), d.in_ch, d.out_ch,
                    (long long)params);
    }
    const ParamCount pc = count_params(spec);
    std::cout << "encoder          " << pc.encoder << "\n"
              << "decoder (each)   " << pc.decoder_each << "\n"
              << "total            " << pc.total << "\n"
              << "two single-task  " << pc.two_single_task << "\n"
              << "savings          " << pc.savings
              << (pc.savings == pc.encoder ? " (= encoder, shared once instead of twice)" : "")
              << "\n";
    if (spec.width_multiplier == 1.0f)
        std::cout << "reference savings figure at this width: 10014563\n";
    return 0;
}

int cmd_bench(const Opts& o) {
    std::optional<Network> net;
    if (!o.checkpoint.empty())
        net.emplace(load_checkpoint(o.checkpoint).net);
    else
        net.emplace(spec_from(o), o.seed);

    Rng rng(o.seed);
    Tensor4 input = Tensor4::random_uniform(1, 1, net->spec().input_h, net->spec().input_w,
                                            rng, 0.0f, 1.0f);
    net->predict(input);  // warm up

    const int64_t passes_before = net->encoder_passes();
    const auto start = std::chrono::steady_clock::now();
    for (int i = 0; i < o.bench_iters; ++i) net->predict(input);
    const auto stop = std::chrono::steady_clock::now();
    const double secs = std::chrono::duration<double>(stop - start).count();

    std::cout << "ran " << o.bench_iters << " two-branch inferences in " << secs << " s ("
              << double(o.bench_iters) / secs << " fps)\n"
              << "encoder passes used: " << (net->encoder_passes() - passes_before)
              << " (one per inference, shared across both branches)\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"depth-image hand segmentation and fingertip detection pipeline"};
    app.require_subcommand(1);
    Opts o;

    std::map<const CLI::App*, Registry> registries;
    CLI::App* synth = app.add_subcommand("synth", "generate a labeled synthetic dataset");
    CLI::App* train = app.add_subcommand("train", "train the two-branch network");
    CLI::App* eval_cmd = app.add_subcommand("eval", "segmentation and fingertip metrics");
    CLI::App* infer = app.add_subcommand("infer", "run the full pipeline on one depth frame");
    CLI::App* gradcheck_cmd =
        app.add_subcommand("gradcheck", "finite-difference gradient verification");
    CLI::App* params = app.add_subcommand("params", "parameter counts and sharing savings");
    CLI::App* bench = app.add_subcommand("bench", "inference throughput");
    for (CLI::App* cmd : {synth, train, eval_cmd, infer, gradcheck_cmd, params, bench})
        registries.emplace(cmd, add_common(cmd, o));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        CLI::App* active = app.get_subcommands().front();
        Registry& reg = registries.at(active);
        note_flag_provenance(reg);
        if (!o.config.empty()) apply_config(reg, o.config);

        if (active == synth) return cmd_synth(o, reg);
        if (active == train) return cmd_train(o, reg);
        if (active == eval_cmd) return cmd_eval(o);
        if (active == infer) return cmd_infer(o);
        if (active == gradcheck_cmd) return cmd_gradcheck(o);
        if (active == params) return cmd_params(o);
        return cmd_bench(o);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

// Command-line front end: make-data, train, infer, eval, ablate, plot.
//
// Exit codes: 0 success; 2 usage, config, or schema errors; 1 anything else.
// Failures print a single machine-readable line to stderr:
//   error: <category>: <message>

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "diffpose/dataset.hpp"
#include "diffpose/engine.hpp"
#include "diffpose/errors.hpp"
#include "diffpose/metrics.hpp"
#include "diffpose/plot.hpp"

namespace fs = std::filesystem;
using namespace diffpose;

namespace {

PipelineConfig load_config_or_default(const std::string& path) {
    PipelineConfig cfg;
    if (!path.empty()) cfg = PipelineConfig::load(path);
    apply_env_overrides(cfg);
    return cfg;
}

// Per-clip RNG for inference noise.  Shared between `infer` and `ablate` so a
// given (seed, clip) pair sees the same noise stream regardless of the verb,
// and smaller ensembles consume a prefix of larger ones.
Rng clip_rng(std::uint64_t seed, int clip_id) {
    return Rng(Rng::derive(seed, 0x4000 + static_cast<std::uint64_t>(clip_id)));
}

std::string format_g17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// Map a keypoint set from heatmap coordinates back to scene coordinates and
// wrap it as a prediction record for the clip.
AnnotationRecord prediction_record(const PreparedClip& clip, const KeypointSet& heatmap_kp,
                                   const PipelineConfig& cfg) {
    KeypointSet input_kp = heatmap_to_input(heatmap_kp, cfg.input_height, cfg.input_width,
                                            cfg.heatmap_height, cfg.heatmap_width);
    KeypointSet scene_kp = input_kp;
    for (Keypoint& k : scene_kp.joints) clip.crop.to_scene(k.x, k.y, k.x, k.y);
    char image_id[32];
    std::snprintf(image_id, sizeof(image_id), "clip_%05d", clip.id);
    return AnnotationRecord::from_keypoints(image_id, 0, clip.bbox, scene_kp);
}

struct MakeDataArgs {
    std::string config_path;
    std::string out_dir;
    int clips = 100;
    double hard_fraction = -1.0;  // <0: take from config
    std::uint64_t seed = 0;
    bool seed_set = false;
};

void run_make_data(const MakeDataArgs& a) {
    PipelineConfig cfg = load_config_or_default(a.config_path);
    const SyntheticSceneConfig scene = SyntheticSceneConfig::from_pipeline(cfg);
    const double hard = a.hard_fraction < 0.0 ? cfg.hard_fraction : a.hard_fraction;
    const std::uint64_t seed = a.seed_set ? a.seed : cfg.seed;
    Dataset ds = make_dataset(scene, a.clips, hard, seed);
    write_dataset(ds, a.out_dir);
    int hard_count = 0;
    for (const DatasetClip& c : ds.clips)
        if (c.difficulty == Difficulty::kHard) ++hard_count;
    std::cout << "wrote " << ds.clips.size() << " clips (" << hard_count << " hard, "
              << ds.clips.size() - static_cast<std::size_t>(hard_count) << " easy) to " << a.out_dir
              << "\n";
}

struct TrainArgs {
    std::string config_path;
    std::string data_dir;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int epochs = 0;  // 0: take from config
    int save_every = 0;
};

void run_train(const TrainArgs& a) {
    PipelineConfig cfg = load_config_or_default(a.config_path);
    if (a.seed_set) cfg.seed = a.seed;
    if (a.epochs > 0) cfg.epochs = a.epochs;
    cfg.validate();

    Dataset ds = load_dataset(a.data_dir);
    std::vector<PreparedClip> prepared = prepare_clips(ds, cfg);
    std::vector<TrainSample> samples;
    samples.reserve(prepared.size());
    for (PreparedClip& p : prepared) samples.push_back(std::move(p.sample));

    fs::create_directories(a.out_dir);
    cfg.save((fs::path(a.out_dir) / "config.json").string());

    Model model = Model::build(cfg);
    AdamW adam(0.9, 0.999, 1e-8, cfg.weight_decay);

    std::ofstream loss_csv(fs::path(a.out_dir) / "loss.csv");
    if (!loss_csv) throw IoError("train: cannot write loss.csv in '" + a.out_dir + "'");
    loss_csv << "epoch,step,lr,loss\n";

    double epoch_loss = 0.0;
    std::int64_t epoch_steps = 0;
    TrainHooks hooks;
    hooks.on_step = [&](int epoch, std::int64_t step, double lr, double loss) {
        loss_csv << epoch << "," << step << "," << format_g17(lr) << "," << format_g17(loss)
                 << "\n";
        epoch_loss += loss;
        ++epoch_steps;
    };
    hooks.on_epoch_end = [&](int epoch) {
        std::cout << "epoch " << epoch << "/" << cfg.epochs << " lr "
                  << format_g17(cfg.lr_at_epoch(epoch)) << " mean-loss "
                  << format_g17(epoch_steps ? epoch_loss / static_cast<double>(epoch_steps) : 0.0)
                  << "\n";
        epoch_loss = 0.0;
        epoch_steps = 0;
        if (a.save_every > 0 && epoch % a.save_every == 0) {
            char name[32];
            std::snprintf(name, sizeof(name), "epoch_%03d", epoch);
            save_checkpoint(model, adam, epoch,
                            (fs::path(a.out_dir) / "checkpoints" / name).string());
        }
    };

    train(model, samples, adam, hooks);
    save_checkpoint(model, adam, cfg.epochs, (fs::path(a.out_dir) / "checkpoint_final").string());
    std::cout << "wrote " << (fs::path(a.out_dir) / "checkpoint_final").string() << "\n";
}

struct InferArgs {
    std::string checkpoint_dir;
    std::string data_dir;
    std::string out_path;
    int steps = 0;     // 0: take from config
    int ensemble = 0;  // 0: take from config
    std::uint64_t seed = 0;
    bool seed_set = false;
};

void run_infer(const InferArgs& a) {
    LoadedCheckpoint ckpt = load_checkpoint(a.checkpoint_dir);
    Model& model = ckpt.model;
    const PipelineConfig& cfg = model.config;

    InferenceOptions opts;
    opts.steps = a.steps > 0 ? a.steps : cfg.infer_steps;
    opts.ensemble = a.ensemble > 0 ? a.ensemble : cfg.ensemble_size;
    opts.seed = a.seed_set ? a.seed : cfg.seed;

    Dataset ds = load_dataset(a.data_dir);
    std::vector<PreparedClip> prepared = prepare_clips(ds, cfg);

    std::vector<AnnotationRecord> predictions;
    predictions.reserve(prepared.size());
    for (const PreparedClip& p : prepared) {
        Rng rng = clip_rng(opts.seed, p.id);
        KeypointSet kp = predict_keypoints(model, p.sample.clip, opts, rng);
        predictions.push_back(prediction_record(p, kp, cfg));
    }
    save_annotations(predictions, a.out_path, /*top_level_array=*/true);
    std::cout << "wrote " << predictions.size() << " predictions to " << a.out_path << "\n";
}

struct EvalArgs {
    std::string pred_path;
    std::string gt_path;
    std::string out_json;
    std::string out_csv;
    std::vector<double> thresholds = {0.05, 0.1, 0.2};
};

void run_eval(const EvalArgs& a) {
    const std::vector<AnnotationRecord> pred = load_keypoint_annotations(a.pred_path);
    const std::vector<AnnotationRecord> gt = load_keypoint_annotations(a.gt_path);
    MetricReport report = evaluate_predictions(pred, gt, a.thresholds);
    if (!a.out_json.empty()) {
        std::ofstream out(a.out_json);
        if (!out) throw IoError("eval: cannot write '" + a.out_json + "'");
        out << report.to_json().dump(2) << "\n";
    }
    if (!a.out_csv.empty()) {
        std::ofstream out(a.out_csv);
        if (!out) throw IoError("eval: cannot write '" + a.out_csv + "'");
        out << report.to_csv();
    }
    for (std::size_t t = 0; t < report.thresholds.size(); ++t) {
        std::cout << "PCK@" << report.thresholds[t] << " mean ";
        if (report.mean[t])
            std::cout << format_g17(*report.mean[t]);
        else
            std::cout << "absent";
        std::cout << "\n";
    }
}

struct AblateArgs {
    std::string checkpoint_dir;
    std::string data_dir;
    std::string out_csv;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

std::string format_cell(const std::optional<double>& v) {
    if (!v) return "";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", *v);
    return buf;
}

void run_ablate(const AblateArgs& a) {
    LoadedCheckpoint ckpt = load_checkpoint(a.checkpoint_dir);
    Model& model = ckpt.model;
    const PipelineConfig& cfg = model.config;
    const std::uint64_t seed = a.seed_set ? a.seed : cfg.seed;

    Dataset ds = load_dataset(a.data_dir);
    std::vector<PreparedClip> prepared = prepare_clips(ds, cfg);
    const std::vector<AnnotationRecord> gt = dataset_annotations(ds);
    std::vector<AnnotationRecord> gt_easy, gt_hard;
    for (std::size_t i = 0; i < prepared.size(); ++i) {
        (prepared[i].difficulty == Difficulty::kHard ? gt_hard : gt_easy).push_back(gt[i]);
    }

    // The condition map does not depend on (N, steps); compute it once per
    // clip and reuse it across the grid.
    std::vector<Tensor> conditions;
    conditions.reserve(prepared.size());
    for (const PreparedClip& p : prepared)
        conditions.push_back(compute_condition(model, p.sample.clip));

    const std::vector<double> thresholds = {0.05, 0.1, 0.2};
    std::ofstream out(a.out_csv);
    if (!out) throw IoError("ablate: cannot write '" + a.out_csv + "'");
    out << "ensemble,steps,mean_pck_0.05,mean_pck_0.1,mean_pck_0.2,mean_pck_0.1_easy,mean_pck_0.1_hard\n";

    for (int n : {1, 5, 10}) {
        for (int steps : {1, 2, 4}) {
            InferenceOptions opts;
            opts.steps = steps;
            opts.ensemble = n;
            opts.seed = seed;
            std::vector<AnnotationRecord> predictions, pred_easy, pred_hard;
            for (std::size_t i = 0; i < prepared.size(); ++i) {
                const PreparedClip& p = prepared[i];
                Rng rng = clip_rng(seed, p.id);
                Tensor avg = sample_pose(model, conditions[i], opts, rng);
                KeypointSet kp = decode_keypoints(avg, model.codec);
                AnnotationRecord rec = prediction_record(p, kp, cfg);
                (p.difficulty == Difficulty::kHard ? pred_hard : pred_easy).push_back(rec);
                predictions.push_back(std::move(rec));
            }
            MetricReport report = evaluate_predictions(predictions, gt, thresholds);
            std::optional<double> easy01, hard01;
            if (!gt_easy.empty())
                easy01 = evaluate_predictions(pred_easy, gt_easy, {0.1}).mean[0];
            if (!gt_hard.empty())
                hard01 = evaluate_predictions(pred_hard, gt_hard, {0.1}).mean[0];
            out << n << "," << steps << "," << format_cell(report.mean[0]) << ","
                << format_cell(report.mean[1]) << "," << format_cell(report.mean[2]) << ","
                << format_cell(easy01) << "," << format_cell(hard01) << "\n";
            std::cout << "ensemble " << n << " steps " << steps << " PCK@0.1 "
                      << format_cell(report.mean[1]) << "\n";
        }
    }
    std::cout << "wrote " << a.out_csv << "\n";
}

struct PlotArgs {
    std::string in_csv;
    std::string out_svg;
    std::string x_column;
    std::vector<std::string> y_columns;
    std::string title;
};

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.push_back("");
    return cells;
}

bool parse_number(const std::string& s, double& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    out = std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size();
}

void run_plot(const PlotArgs& a) {
    std::ifstream in(a.in_csv);
    if (!in) throw IoError("plot: cannot open '" + a.in_csv + "'");
    std::string line;
    if (!std::getline(in, line)) throw ParseError("plot: '" + a.in_csv + "' is empty");
    const std::vector<std::string> header = split_csv_line(line);
    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells = split_csv_line(line);
        cells.resize(header.size());
        rows.push_back(std::move(cells));
    }
    if (rows.empty()) throw ParseError("plot: '" + a.in_csv + "' has no data rows");

    auto column_index = [&](const std::string& name) -> int {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        return -1;
    };

    int x_idx = -1;
    if (!a.x_column.empty()) {
        x_idx = column_index(a.x_column);
        if (x_idx < 0) throw ConfigError("plot: no column named '" + a.x_column + "'");
    }

    std::vector<std::string> y_names = a.y_columns;
    if (y_names.empty()) {
        // Default: every numeric column except the x column.
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (static_cast<int>(i) == x_idx) continue;
            double v;
            if (parse_number(rows[0][i], v)) y_names.push_back(header[i]);
        }
        if (y_names.empty()) throw ConfigError("plot: no numeric columns to plot");
    }

    std::vector<PlotSeries> series;
    for (const std::string& name : y_names) {
        const int y_idx = column_index(name);
        if (y_idx < 0) throw ConfigError("plot: no column named '" + name + "'");
        PlotSeries s;
        s.label = name;
        for (std::size_t r = 0; r < rows.size(); ++r) {
            double y;
            if (!parse_number(rows[r][static_cast<std::size_t>(y_idx)], y)) continue;
            double x = static_cast<double>(r);
            if (x_idx >= 0 && !parse_number(rows[r][static_cast<std::size_t>(x_idx)], x)) continue;
            s.x.push_back(x);
            s.y.push_back(y);
        }
        if (!s.x.empty()) series.push_back(std::move(s));
    }
    if (series.empty()) throw ConfigError("plot: selected columns have no numeric data");

    const std::string title =
        a.title.empty() ? fs::path(a.in_csv).stem().string() : a.title;
    const std::string x_label = a.x_column.empty() ? "row" : a.x_column;
    write_line_chart(a.out_svg, title, x_label, "value", series);
    std::cout << "wrote " << a.out_svg << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Video pose estimation via conditional heatmap diffusion"};
    app.require_subcommand(1);

    MakeDataArgs make_args;
    CLI::App* make_cmd = app.add_subcommand("make-data", "Generate a synthetic clip dataset");
    make_cmd->add_option("--config", make_args.config_path, "Pipeline config JSON");
    make_cmd->add_option("--out", make_args.out_dir, "Output dataset directory")->required();
    make_cmd->add_option("--clips", make_args.clips, "Number of clips");
    make_cmd->add_option("--hard-fraction", make_args.hard_fraction,
                         "Fraction of hard clips (default: from config)");
    make_cmd->add_option("--seed", make_args.seed, "Dataset seed (default: from config)")
        ->each([&](const std::string&) { make_args.seed_set = true; });

    TrainArgs train_args;
    CLI::App* train_cmd = app.add_subcommand("train", "Train a model on a dataset");
    train_cmd->add_option("--config", train_args.config_path, "Pipeline config JSON");
    train_cmd->add_option("--data", train_args.data_dir, "Dataset directory")->required();
    train_cmd->add_option("--out", train_args.out_dir, "Output run directory")->required();
    train_cmd->add_option("--seed", train_args.seed, "Override config seed")
        ->each([&](const std::string&) { train_args.seed_set = true; });
    train_cmd->add_option("--epochs", train_args.epochs, "Override config epochs");
    train_cmd->add_option("--save-every", train_args.save_every,
                          "Also checkpoint every k epochs (0 = final only)");

    InferArgs infer_args;
    CLI::App* infer_cmd = app.add_subcommand("infer", "Predict keypoints for a dataset");
    infer_cmd->add_option("--checkpoint", infer_args.checkpoint_dir, "Checkpoint directory")
        ->required();
    infer_cmd->add_option("--data", infer_args.data_dir, "Dataset directory")->required();
    infer_cmd->add_option("--out", infer_args.out_path, "Predictions JSON path")->required();
    infer_cmd->add_option("--steps", infer_args.steps, "Sampling steps (default: from config)");
    infer_cmd->add_option("--ensemble", infer_args.ensemble,
                          "Ensemble size N (default: from config)");
    infer_cmd->add_option("--seed", infer_args.seed, "Noise seed (default: from config)")
        ->each([&](const std::string&) { infer_args.seed_set = true; });

    EvalArgs eval_args;
    CLI::App* eval_cmd = app.add_subcommand("eval", "Score predictions against ground truth");
    eval_cmd->add_option("--pred", eval_args.pred_path, "Predictions JSON")->required();
    eval_cmd->add_option("--gt", eval_args.gt_path, "Ground-truth annotations JSON")->required();
    eval_cmd->add_option("--out-json", eval_args.out_json, "Report JSON path");
    eval_cmd->add_option("--out-csv", eval_args.out_csv, "Report CSV path");
    eval_cmd->add_option("--thresholds", eval_args.thresholds, "PCK thresholds")
        ->delimiter(',');

    AblateArgs ablate_args;
    CLI::App* ablate_cmd =
        app.add_subcommand("ablate", "Sweep ensemble size and sampling steps");
    ablate_cmd->add_option("--checkpoint", ablate_args.checkpoint_dir, "Checkpoint directory")
        ->required();
    ablate_cmd->add_option("--data", ablate_args.data_dir, "Dataset directory")->required();
    ablate_cmd->add_option("--out", ablate_args.out_csv, "Comparison CSV path")->required();
    ablate_cmd->add_option("--seed", ablate_args.seed, "Noise seed (default: from config)")
        ->each([&](const std::string&) { ablate_args.seed_set = true; });

    PlotArgs plot_args;
    CLI::App* plot_cmd = app.add_subcommand("plot", "Render a CSV as an SVG line chart");
    plot_cmd->add_option("--in", plot_args.in_csv, "Input CSV")->required();
    plot_cmd->add_option("--out", plot_args.out_svg, "Output SVG")->required();
    plot_cmd->add_option("--x", plot_args.x_column, "X column name (default: row index)");
    plot_cmd->add_option("--y", plot_args.y_columns, "Y column names (default: numeric columns)")
        ->delimiter(',');
    plot_cmd->add_option("--title", plot_args.title, "Chart title");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: usage: " << e.what() << "\n";
        return 2;
    }

    try {
        if (make_cmd->parsed()) run_make_data(make_args);
        if (train_cmd->parsed()) run_train(train_args);
        if (infer_cmd->parsed()) run_infer(infer_args);
        if (eval_cmd->parsed()) run_eval(eval_args);
        if (ablate_cmd->parsed()) run_ablate(ablate_args);
        if (plot_cmd->parsed()) run_plot(plot_args);
    } catch (const ConfigError& e) {
        std::cerr << "error: config: " << e.what() << "\n";
        return 2;
    } catch (const ParseError& e) {
        std::cerr << "error: parse: " << e.what() << "\n";
        return 2;
    } catch (const ShapeError& e) {
        std::cerr << "error: shape: " << e.what() << "\n";
        return 2;
    } catch (const RangeError& e) {
        std::cerr << "error: range: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: runtime: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

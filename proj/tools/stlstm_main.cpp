#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "stlstm/checkpoint.hpp"
#include "stlstm/manifest.hpp"
#include "stlstm/metrics.hpp"
#include "stlstm/train.hpp"
#include "stlstm/verify.hpp"
#include "stlstm/version.hpp"

namespace fs = std::filesystem;
using namespace stlstm;

namespace {

// Exit codes: 0 success, 1 usage, 2 data error, 3 numerical failure.
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

std::string fmt(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

std::vector<fs::path> list_trajectory_files(const fs::path& dir) {
  if (dir.empty()) throw UsageError("no data directory given (flag --data or STLSTM_DATA_DIR)");
  if (!fs::exists(dir) || !fs::is_directory(dir))
    throw UsageError("data directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".txt") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no .txt trajectory files in " + dir.string());
  return files;
}

std::vector<Scene> load_scenes(const std::vector<fs::path>& files) {
  std::vector<Scene> scenes;
  scenes.reserve(files.size());
  for (const auto& f : files) scenes.push_back(parse_dataset(f));
  return scenes;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write: " + path.string());
  out << text;
}

std::string loss_curve_csv(const std::vector<double>& curve) {
  std::string csv = "epoch,mean_loss\n";
  for (std::size_t e = 0; e < curve.size(); ++e)
    csv += std::to_string(e + 1) + "," + fmt(curve[e]) + "\n";
  return csv;
}

// ---- SVG plot ---------------------------------------------------------------

struct Polyline {
  std::vector<Vec2> points;
  std::string color;
  std::string dash;  // empty = solid
};

void write_svg(const fs::path& path, const std::vector<Polyline>& lines) {
  double min_x = 1e300, min_y = 1e300, max_x = -1e300, max_y = -1e300;
  for (const auto& l : lines)
    for (const auto& p : l.points) {
      min_x = std::min(min_x, p.x);
      max_x = std::max(max_x, p.x);
      min_y = std::min(min_y, p.y);
      max_y = std::max(max_y, p.y);
    }
  if (min_x > max_x) {
    min_x = min_y = 0.0;
    max_x = max_y = 1.0;
  }
  const double w = 800.0, h = 600.0, margin = 40.0;
  const double span_x = std::max(max_x - min_x, 1e-9);
  const double span_y = std::max(max_y - min_y, 1e-9);
  const double s = std::min((w - 2 * margin) / span_x, (h - 2 * margin) / span_y);
  auto sx = [&](double x) { return margin + (x - min_x) * s; };
  auto sy = [&](double y) { return h - margin - (y - min_y) * s; };

  std::string svg = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(w) + "\" height=\"" +
         fmt(h) + "\" viewBox=\"0 0 " + fmt(w) + " " + fmt(h) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (const auto& l : lines) {
    svg += "<polyline fill=\"none\" stroke=\"" + l.color + "\" stroke-width=\"2\"";
    if (!l.dash.empty()) svg += " stroke-dasharray=\"" + l.dash + "\"";
    svg += " points=\"";
    for (std::size_t i = 0; i < l.points.size(); ++i) {
      if (i) svg += ' ';
      svg += fmt(sx(l.points[i].x)) + "," + fmt(sy(l.points[i].y));
    }
    svg += "\"/>\n";
  }
  svg += "</svg>\n";
  write_text(path, svg);
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

// ---- subcommand state ---------------------------------------------------------

struct TrainArgs {
  std::string data_dir;
  std::string out;
  std::string loss_csv;
  std::string folds_file;
  ModelConfig mcfg;
  TrainConfig tcfg;
  double radius = 0.0;  // 0 = fully connected
};

struct EvalArgs {
  std::string ckpt;
  std::string data_dir;
  std::string out_prefix = "eval_report";
  std::size_t obs = 0, pred = 0;  // 0 = take from checkpoint
  EvalOptions opts;
  bool gt_collision = false;
};

struct PredictArgs {
  std::string ckpt;
  std::string data_file;
  std::string out;
  std::string svg;
  std::size_t stride = 0;  // 0 = non-overlapping windows
};

struct SynthArgs {
  std::string kind;
  std::string out;
  std::uint64_t seed = 1;
  ScenarioParams params;
};

struct GradcheckArgs {
  std::uint64_t seed = 12;
  std::string out = "gradcheck_report.json";
  bool corrupt = false;
};

int run_train(const TrainArgs& a) {
  RunManifest manifest;
  manifest.command = "train";
  manifest.started_utc = utc_now();
  manifest.seed = a.tcfg.seed;

  ModelConfig mcfg = a.mcfg;
  if (a.radius > 0.0) mcfg.radius = a.radius;
  const auto files = list_trajectory_files(a.data_dir);
  const auto scenes = load_scenes(files);
  manifest.inputs = files;

  nlohmann::json cfg = mcfg.to_json();
  cfg["epochs"] = a.tcfg.epochs;
  cfg["batch_size"] = a.tcfg.batch_size;
  cfg["lr"] = a.tcfg.lr;
  cfg["lambda_recon"] = a.tcfg.lambda_recon;
  cfg["grad_clip_norm"] = a.tcfg.grad_clip_norm;
  cfg["stride"] = a.tcfg.stride;
  cfg["teacher_forcing"] = a.tcfg.teacher_forcing;
  cfg["lr_decay"] = a.tcfg.lr_decay;
  cfg["lr_decay_every"] = a.tcfg.lr_decay_every;
  manifest.config = cfg;

  const std::string loss_path = a.loss_csv.empty() ? a.out + ".loss.csv" : a.loss_csv;

  if (!a.folds_file.empty()) {
    std::ifstream in(a.folds_file);
    if (!in) throw UsageError("cannot open fold file: " + a.folds_file);
    nlohmann::json fold_spec;
    try {
      fold_spec = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("fold file is not valid JSON: " + std::string(e.what()));
    }
    std::vector<std::vector<Scene>> folds;
    std::vector<std::string> fold_names;
    for (const auto& group : fold_spec) {
      std::vector<Scene> fold;
      std::string name;
      for (const auto& scene_name : group) {
        const std::string want = scene_name.get<std::string>();
        auto it = std::find_if(scenes.begin(), scenes.end(),
                               [&](const Scene& s) { return s.name == want; });
        if (it == scenes.end()) throw DataError("fold scene not found in data dir: " + want);
        fold.push_back(*it);
        name += (name.empty() ? "" : "+") + want;
      }
      folds.push_back(std::move(fold));
      fold_names.push_back(name);
    }
    EvalOptions eopts;
    eopts.seed = a.tcfg.seed;
    auto reports = leave_one_out(folds, mcfg, a.tcfg, eopts);

    nlohmann::json out_json;
    out_json["folds"] = nlohmann::json::array();
    std::string csv = "scene,n_sequences,ade_m,fde_m,collision_pct\n";
    for (std::size_t i = 0; i + 1 < reports.size(); ++i) {
      out_json["folds"].push_back(reports[i].to_json());
      const auto& agg = reports[i].aggregate;
      csv += fold_names[i] + "," + std::to_string(agg.n_sequences) + "," + fmt(agg.ade_m) +
             "," + fmt(agg.fde_m) + "," + fmt(agg.collision_pct) + "\n";
    }
    const auto& avg = reports.back().aggregate;
    out_json["avg"] = reports.back().to_json();
    csv += "AVG," + std::to_string(avg.n_sequences) + "," + fmt(avg.ade_m) + "," +
           fmt(avg.fde_m) + "," + fmt(avg.collision_pct) + "\n";
    write_text(a.out + ".loo.json", out_json.dump(2) + "\n");
    write_text(a.out + ".loo.csv", csv);
    manifest.outputs = {a.out + ".loo.json", a.out + ".loo.csv"};
    manifest.finished_utc = utc_now();
    manifest.write(a.out + ".loo.json");
    std::cout << "leave-one-out AVG: ADE " << avg.ade_m << " m, FDE " << avg.fde_m
              << " m over " << fold_names.size() << " folds\n";
    return 0;
  }

  TrainResult result = train(mcfg, a.tcfg, scenes);
  save_checkpoint(a.out, result.params);
  write_text(loss_path, loss_curve_csv(result.loss_curve));
  manifest.outputs = {a.out, loss_path};
  manifest.finished_utc = utc_now();
  manifest.write(a.out);
  std::cout << "trained " << result.params.parameter_count() << " parameters for "
            << result.loss_curve.size() << " epochs; final mean loss "
            << (result.loss_curve.empty() ? 0.0 : result.loss_curve.back()) << "\n"
            << "checkpoint: " << a.out << "\nloss curve: " << loss_path << "\n";
  return 0;
}

int run_eval(const EvalArgs& a) {
  RunManifest manifest;
  manifest.command = "eval";
  manifest.started_utc = utc_now();
  manifest.seed = a.opts.seed;

  const auto files = list_trajectory_files(a.data_dir);
  const auto scenes = load_scenes(files);
  manifest.inputs = files;

  EvalOptions opts = a.opts;
  opts.gt_collision = a.gt_collision;

  EvalReport report;
  if (!a.ckpt.empty()) {
    ModelParams params = load_checkpoint(a.ckpt);
    manifest.inputs.push_back(a.ckpt);
    if (a.obs != 0 && a.obs != params.config.t_obs)
      throw UsageError("checkpoint was trained with t_obs = " +
                       std::to_string(params.config.t_obs) + " but --obs " +
                       std::to_string(a.obs) + " was requested; refusing to evaluate");
    if (a.pred != 0 && a.pred != params.config.t_pred)
      throw UsageError("checkpoint was trained with t_pred = " +
                       std::to_string(params.config.t_pred) + " but --pred " +
                       std::to_string(a.pred) + " was requested; refusing to evaluate");
    report = evaluate(params, scenes, opts);
  } else if (a.gt_collision) {
    // Collision statistics of the recorded tracks themselves.
    report.seed = opts.seed;
    report.config = {{"mode", "gt-collision"},
                     {"collision_threshold", opts.collision_threshold},
                     {"sample_agents", opts.sample_agents}};
    SceneReport avg;
    avg.scene = "AVG";
    for (const auto& scene : scenes) {
      SceneReport r;
      r.scene = scene.name;
      r.collision_pct = opts.sample_agents > 0
                            ? sampled_collision_rate(scene, opts.collision_threshold,
                                                     opts.sample_agents, opts.seed)
                            : scene_collision_rate(scene, opts.collision_threshold);
      avg.collision_pct += r.collision_pct;
      report.scenes.push_back(r);
    }
    if (!report.scenes.empty())
      avg.collision_pct /= static_cast<double>(report.scenes.size());
    report.aggregate = avg;
  } else {
    throw UsageError("eval needs --ckpt (or --gt-collision for ground-truth statistics)");
  }

  const std::string json_path = a.out_prefix + ".json";
  const std::string csv_path = a.out_prefix + ".csv";
  write_text(json_path, report.to_json().dump(2) + "\n");
  write_text(csv_path, report.to_csv());
  manifest.config = report.config;
  manifest.outputs = {json_path, csv_path};
  manifest.finished_utc = utc_now();
  manifest.write(json_path);
  std::cout << report.to_csv();
  return 0;
}

int run_predict(const PredictArgs& a) {
  RunManifest manifest;
  manifest.command = "predict";
  manifest.started_utc = utc_now();

  ModelParams params = load_checkpoint(a.ckpt);
  Scene scene = parse_dataset(a.data_file);
  manifest.inputs = {a.ckpt, a.data_file};
  manifest.config = params.config.to_json();

  const std::size_t t_obs = params.config.t_obs, t_pred = params.config.t_pred;
  const std::size_t stride = a.stride ? a.stride : t_obs + t_pred;
  auto windows = make_sequences(scene, t_obs, t_pred, stride);
  if (windows.empty()) throw DataError("no complete windows in " + a.data_file);

  std::string csv = "scene,ped_id,step,x_pred,y_pred\n";
  std::vector<Polyline> lines;
  for (const auto& window : windows) {
    Tensor pred = predict_window(params, window, t_pred);
    for (std::size_t i = 0; i < window.nodes(); ++i) {
      const std::size_t color = static_cast<std::size_t>(window.ped_ids[i]) %
                                (sizeof(kPalette) / sizeof(kPalette[0]));
      Polyline obs{{}, kPalette[color], ""};
      Polyline gt{{}, kPalette[color], "8,4"};
      Polyline hat{{}, kPalette[color], "2,4"};
      for (std::size_t t = 0; t < t_obs; ++t)
        obs.points.push_back({window.positions_obs.at(i, t, 0),
                              window.positions_obs.at(i, t, 1)});
      for (std::size_t t = 0; t < t_pred; ++t) {
        gt.points.push_back({window.positions_gt.at(i, t, 0),
                             window.positions_gt.at(i, t, 1)});
        hat.points.push_back({pred.at(i, t, 0), pred.at(i, t, 1)});
        csv += scene.name + "," + std::to_string(window.ped_ids[i]) + "," +
               std::to_string(window.start_frame + static_cast<long>(t_obs + t)) + "," +
               fmt(pred.at(i, t, 0)) + "," + fmt(pred.at(i, t, 1)) + "\n";
      }
      lines.push_back(std::move(obs));
      lines.push_back(std::move(gt));
      lines.push_back(std::move(hat));
    }
  }
  write_text(a.out, csv);
  manifest.outputs = {a.out};
  if (!a.svg.empty()) {
    write_svg(a.svg, lines);
    manifest.outputs.push_back(a.svg);
  }
  manifest.finished_utc = utc_now();
  manifest.write(a.out);
  std::cout << "predicted " << windows.size() << " windows from " << scene.name << "\n";
  return 0;
}

int run_synth(const SynthArgs& a) {
  RunManifest manifest;
  manifest.command = "synth";
  manifest.started_utc = utc_now();
  manifest.seed = a.seed;

  Scene scene = synth_scenario(scenario_kind_from_string(a.kind), a.params, a.seed);
  write_dataset(scene, a.out);
  manifest.config = {{"kind", a.kind},        {"speed", a.params.speed},
                     {"offset", a.params.start_offset}, {"noise", a.params.noise_std},
                     {"frames", a.params.frames},       {"angle_deg", a.params.angle_deg},
                     {"dt", a.params.dt}};
  manifest.outputs = {a.out};
  manifest.finished_utc = utc_now();
  manifest.write(a.out);
  std::cout << "wrote " << scene.observations.size() << " observations to " << a.out << "\n";
  return 0;
}

int run_gradcheck(const GradcheckArgs& a) {
  RunManifest manifest;
  manifest.command = "gradcheck";
  manifest.started_utc = utc_now();
  manifest.seed = a.seed;

  ModelGradCheckReport report = run_model_gradcheck(a.seed, 1e-5, 1e-4, a.corrupt);
  write_text(a.out, report.to_json().dump(2) + "\n");
  manifest.config = {{"h", 1e-5}, {"tolerance", report.tolerance}};
  manifest.outputs = {a.out};
  manifest.finished_utc = utc_now();
  manifest.write(a.out);

  std::cout << (report.pass ? "PASS" : "FAIL") << ": max relative error "
            << report.max_rel_error << " over " << report.parameters
            << " parameters (tolerance " << report.tolerance << ")\n"
            << "worst parameter: " << report.worst_param << " analytic "
            << report.worst_analytic << " vs numeric " << report.worst_numeric << "\n";
  return report.pass ? 0 : kExitNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pedestrian trajectory prediction with a graph + temporal-convolution "
               "feature block and an LSTM encoder-decoder"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train a model on trajectory files");
  train_cmd->add_option("--data", train_args.data_dir, "Directory of .txt trajectory files")
      ->envname("STLSTM_DATA_DIR");
  train_cmd->add_option("--out", train_args.out, "Checkpoint output path")->required();
  train_cmd->add_option("--loss-csv", train_args.loss_csv, "Loss curve path (default <out>.loss.csv)");
  train_cmd->add_option("--folds", train_args.folds_file,
                        "JSON list of scene-name groups: leave-one-out mode");
  train_cmd->add_option("--epochs", train_args.tcfg.epochs, "Training epochs")
      ->default_val(250);
  train_cmd->add_option("--batch", train_args.tcfg.batch_size, "Windows per SGD step")
      ->default_val(128);
  train_cmd->add_option("--lr", train_args.tcfg.lr, "Learning rate")->default_val(0.001);
  train_cmd->add_option("--obs", train_args.mcfg.t_obs, "Observed steps")->default_val(8);
  train_cmd->add_option("--pred", train_args.mcfg.t_pred, "Predicted steps")->default_val(12);
  train_cmd->add_option("--seed", train_args.tcfg.seed, "RNG seed")->default_val(1);
  train_cmd->add_option("--lambda-recon", train_args.tcfg.lambda_recon,
                        "Adjacency reconstruction loss weight")
      ->default_val(0.1);
  train_cmd->add_flag("--teacher-forcing,!--no-teacher-forcing", train_args.tcfg.teacher_forcing,
                      "Feed ground-truth previous positions while training (default on)");
  train_cmd->add_option("--stride", train_args.tcfg.stride, "Window stride")->default_val(1);
  train_cmd->add_option("--grad-clip", train_args.tcfg.grad_clip_norm, "Global gradient norm clip")
      ->default_val(10.0);
  train_cmd->add_option("--lr-decay", train_args.tcfg.lr_decay, "Step decay factor")
      ->default_val(1.0);
  train_cmd->add_option("--lr-decay-every", train_args.tcfg.lr_decay_every,
                        "Epochs between decays (0 = constant)")
      ->default_val(0);
  train_cmd->add_option("--radius", train_args.radius,
                        "Graph edge cutoff in meters (0 = fully connected)")
      ->default_val(0.0);
  train_cmd->add_option("--st-depth", train_args.mcfg.st_depth, "Stacked ST-Blocks")
      ->default_val(1);

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint (ADE/FDE/collision)");
  eval_cmd->add_option("--ckpt", eval_args.ckpt, "Checkpoint path");
  eval_cmd->add_option("--data", eval_args.data_dir, "Directory of .txt trajectory files")
      ->envname("STLSTM_DATA_DIR");
  eval_cmd->add_option("--out", eval_args.out_prefix, "Report path prefix")
      ->default_val("eval_report");
  eval_cmd->add_option("--obs", eval_args.obs, "Expected observed steps (must match checkpoint)");
  eval_cmd->add_option("--pred", eval_args.pred, "Expected predicted steps (must match checkpoint)");
  eval_cmd->add_option("--collision-threshold", eval_args.opts.collision_threshold,
                       "Collision distance in meters")
      ->default_val(0.10);
  eval_cmd->add_option("--sample-agents", eval_args.opts.sample_agents,
                       "Sample N agents over their first 8 s (0 = full population)")
      ->default_val(0);
  eval_cmd->add_option("--seed", eval_args.opts.seed, "Sampling seed")->default_val(1);
  eval_cmd->add_option("--stride", eval_args.opts.stride, "Window stride")->default_val(1);
  eval_cmd->add_option("--threads", eval_args.opts.threads, "Worker threads (0 = auto)")
      ->default_val(0);
  eval_cmd->add_flag("--gt-collision", eval_args.gt_collision,
                     "Collision rate of the recorded ground-truth tracks");

  PredictArgs predict_args;
  auto* predict_cmd = app.add_subcommand("predict", "Predict trajectories for one file");
  predict_cmd->add_option("--ckpt", predict_args.ckpt, "Checkpoint path")->required();
  predict_cmd->add_option("--data", predict_args.data_file, "Trajectory file")->required();
  predict_cmd->add_option("--out", predict_args.out, "Prediction CSV path")->required();
  predict_cmd->add_option("--svg", predict_args.svg, "Optional SVG overlay plot");
  predict_cmd->add_option("--stride", predict_args.stride,
                          "Window stride (default: non-overlapping)");

  SynthArgs synth_args;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic interaction scene");
  synth_cmd->add_option("--kind", synth_args.kind,
                        "following|meeting|group_avoid|merge|angle_cross")
      ->required();
  synth_cmd->add_option("--out", synth_args.out, "Output trajectory file")->required();
  synth_cmd->add_option("--seed", synth_args.seed, "RNG seed")->default_val(1);
  synth_cmd->add_option("--frames", synth_args.params.frames, "Frames per pedestrian")
      ->default_val(24);
  synth_cmd->add_option("--speed", synth_args.params.speed, "Walking speed m/s")
      ->default_val(1.0);
  synth_cmd->add_option("--offset", synth_args.params.start_offset, "Start separation m")
      ->default_val(8.0);
  synth_cmd->add_option("--noise", synth_args.params.noise_std, "Gaussian noise stddev m")
      ->default_val(0.0);
  synth_cmd->add_option("--angle", synth_args.params.angle_deg, "Crossing angle (angle_cross)")
      ->default_val(90.0);

  GradcheckArgs gradcheck_args;
  auto* gradcheck_cmd =
      app.add_subcommand("gradcheck", "Finite-difference check of the full model's gradients");
  gradcheck_cmd->add_option("--seed", gradcheck_args.seed, "RNG seed")->default_val(12);
  gradcheck_cmd->add_option("--out", gradcheck_args.out, "Report JSON path")
      ->default_val("gradcheck_report.json");
  gradcheck_cmd->add_flag("--corrupt-gradient", gradcheck_args.corrupt, "")->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (train_cmd->parsed()) return run_train(train_args);
    if (eval_cmd->parsed()) return run_eval(eval_args);
    if (predict_cmd->parsed()) return run_predict(predict_args);
    if (synth_cmd->parsed()) return run_synth(synth_args);
    if (gradcheck_cmd->parsed()) return run_gradcheck(gradcheck_args);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return 0;
}

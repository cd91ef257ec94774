// gate-adapt: dataset generation, training, baselines, evaluation, ablation
// and qualitative overlays as one reproducible pipeline. Every subcommand
// reads a single JSON experiment config, writes its artifacts plus a resolved
// config copy into --out, and is byte-reproducible from (config, seed).

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gateadapt/config.hpp"
#include "gateadapt/dataset.hpp"
#include "gateadapt/errors.hpp"
#include "gateadapt/eval.hpp"
#include "gateadapt/nn.hpp"
#include "gateadapt/rng.hpp"
#include "gateadapt/sim.hpp"
#include "gateadapt/train.hpp"

namespace fs = std::filesystem;
using namespace gateadapt;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc | std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("write failed: " + path.string());
}

// every run directory carries the resolved config it actually ran with
void stamp_run_dir(const fs::path& out, const ExperimentConfig& cfg) {
  fs::create_directories(out);
  write_text(out / "config.json", experiment_config_json(cfg));
}

Dataset load_input_dataset(const ExperimentConfig& cfg) {
  if (cfg.io.dataset_dir.empty())
    throw ConfigInvalid("config: \"io.dataset_dir\" is required for this command");
  return load_dataset(cfg.io.dataset_dir);
}

ModelParams load_input_checkpoint(const std::string& path, const char* key) {
  if (path.empty())
    throw ConfigInvalid(std::string("config: \"io.") + key +
                        "\" is required for this command");
  return load_checkpoint(path).params;
}

const std::vector<Sequence>* find_frames(const Dataset& ds) {
  for (const auto* split : {&ds.real_test, &ds.sim_train, &ds.sim_val,
                            &ds.real_train, &ds.real_val})
    if (!split->empty()) return split;
  return nullptr;
}

void check_model_fits(const ModelConfig& model, const Dataset& ds) {
  const std::vector<Sequence>* split = find_frames(ds);
  if (split == nullptr) return;
  const Sequence& seq = split->front();
  if (seq.width != model.input_size || seq.height != model.input_size)
    throw ConfigInvalid("checkpoint/model expects " +
                        std::to_string(model.input_size) + "x" +
                        std::to_string(model.input_size) +
                        " input but dataset frames are " +
                        std::to_string(seq.width) + "x" +
                        std::to_string(seq.height));
}

CheckpointHook epoch_checkpoint_hook(const fs::path& out) {
  return [out](int epoch, const ModelParams& params) {
    char name[40];
    std::snprintf(name, sizeof(name), "checkpoint_epoch%04d.gapw", epoch);
    save_checkpoint((out / name).string(), params);
  };
}

std::vector<Pose> test_labels(const std::vector<Sequence>& split) {
  std::vector<Pose> gts;
  for (const Sequence& seq : split)
    for (const Sample& s : seq.samples)
      if (s.gt_gate.has_value()) gts.push_back(*s.gt_gate);
  if (gts.empty()) throw DataEmpty("test split carries no ground truth");
  return gts;
}

// Results accumulate per method so a pipeline script pointing every stage at
// one run directory ends up with the full five-row table. Rows are keyed by
// method and kept in the canonical row order, which also makes reruns of any
// stage byte-identical.
int method_rank(const std::string& m) {
  const char* order[] = {"mean_predictor", "zero_shot", "pencil", "da", "ours"};
  for (int i = 0; i < 5; ++i)
    if (m == order[i]) return i;
  return 5;
}

std::optional<double> parse_opt(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return std::stod(s);
}

std::vector<ResultRow> read_results_csv(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  std::vector<ResultRow> rows;
  if (!f) return rows;
  std::string line;
  std::getline(f, line);  // header
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.push_back("");
    if (cells.size() != 12)
      throw IoError("malformed results row in " + path.string());
    ResultRow r;
    r.method = cells[0];
    r.metrics.mse_xyz_cm2 = std::stod(cells[1]);
    r.metrics.mae_x_cm = std::stod(cells[2]);
    r.metrics.mae_y_cm = std::stod(cells[3]);
    r.metrics.mae_z_cm = std::stod(cells[4]);
    r.metrics.mae_yaw_deg = std::stod(cells[5]);
    r.metrics.rho_x = parse_opt(cells[6]);
    r.metrics.rho_y = parse_opt(cells[7]);
    r.metrics.rho_z = parse_opt(cells[8]);
    r.metrics.rho_yaw = parse_opt(cells[9]);
    r.metrics.n_test = std::stoi(cells[10]);
    r.seed = std::stoull(cells[11]);
    rows.push_back(std::move(r));
  }
  return rows;
}

void upsert_result_row(const fs::path& path, const ResultRow& row) {
  std::vector<ResultRow> rows = read_results_csv(path);
  bool replaced = false;
  for (ResultRow& r : rows)
    if (r.method == row.method) {
      r = row;
      replaced = true;
    }
  if (!replaced) rows.push_back(row);
  std::stable_sort(rows.begin(), rows.end(),
                   [](const ResultRow& a, const ResultRow& b) {
                     return method_rank(a.method) < method_rank(b.method);
                   });
  write_results_csv(path.string(), rows);
}

void write_pgm(const fs::path& path, const Image& img) {
  std::ofstream f(path, std::ios::trunc | std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << "P5\n" << img.w << " " << img.h << "\n255\n";
  for (double px : img.pixels) f.put(static_cast<char>(quantize_pixel(px)));
  if (!f) throw IoError("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// subcommands
// ---------------------------------------------------------------------------

int cmd_generate(const ExperimentConfig& cfg, const fs::path& out) {
  const Dataset ds = generate_dataset(cfg.dataset);
  const fs::path dir = out / "dataset";
  save_dataset(dir.string(), ds, cfg.dataset);
  const int total = static_cast<int>(ds.sim_train.size() + ds.sim_val.size() +
                                     ds.real_train.size() + ds.real_val.size() +
                                     ds.real_test.size());
  std::printf("generate: wrote %d sequences to %s\n", total, dir.c_str());
  return 0;
}

int cmd_pretrain(const ExperimentConfig& cfg, const fs::path& out) {
  const Dataset ds = load_input_dataset(cfg);
  check_model_fits(cfg.model, ds);
  const ModelParams init =
      init_model(cfg.model, splitmix64_at(cfg.pretrain.seed, 0));
  const TrainResult r = pretrain(cfg.pretrain, init, ds.sim_train, ds.sim_val,
                                 cfg.pretrain.checkpoint_every > 0
                                     ? epoch_checkpoint_hook(out)
                                     : CheckpointHook{});
  save_checkpoint((out / "pretrained.gapw").string(), r.best);
  write_curves_csv((out / "pretrain_curves.csv").string(), r.curves);
  std::printf("pretrain: best epoch %d, val loss %.6g\n", r.best_epoch,
              r.curves[static_cast<std::size_t>(r.best_epoch - 1)].val_loss);
  return 0;
}

int cmd_finetune(const ExperimentConfig& cfg, const fs::path& out) {
  const Dataset ds = load_input_dataset(cfg);
  const ModelParams start = load_input_checkpoint(cfg.io.checkpoint, "checkpoint");
  check_model_fits(start.cfg, ds);
  const TrainResult r = finetune_sc(cfg.finetune, start, ds.real_train,
                                    ds.real_val, cfg.sampler,
                                    cfg.finetune.checkpoint_every > 0
                                        ? epoch_checkpoint_hook(out)
                                        : CheckpointHook{});
  save_checkpoint((out / "finetuned.gapw").string(), r.best);
  write_curves_csv((out / "finetune_curves.csv").string(), r.curves);
  std::printf("finetune: best epoch %d, val SC loss %.6g\n", r.best_epoch,
              r.curves[static_cast<std::size_t>(r.best_epoch - 1)].val_loss);
  return 0;
}

int cmd_evaluate(const ExperimentConfig& cfg, const fs::path& out) {
  const Dataset ds = load_input_dataset(cfg);
  const ModelParams params = load_input_checkpoint(cfg.io.checkpoint, "checkpoint");
  check_model_fits(params.cfg, ds);
  const EvalMetrics m =
      evaluate(Predictor::network(params), ds.real_test, cfg.calibration);
  upsert_result_row(out / "results.csv", {"ours", m, cfg.finetune.seed});
  std::printf("evaluate: mse_xyz %.3f cm^2 over %d frames\n", m.mse_xyz_cm2,
              m.n_test);
  return 0;
}

int cmd_baseline(const ExperimentConfig& cfg, const fs::path& out,
                 const std::string& method) {
  const Dataset ds = load_input_dataset(cfg);
  ResultRow row;
  row.seed = cfg.pretrain.seed;

  if (method == "mean") {
    const PoseVector9 enc = mean_predictor(test_labels(ds.real_test));
    row.method = "mean_predictor";
    row.metrics =
        evaluate(Predictor::constant_pose(enc), ds.real_test, cfg.calibration);
  } else if (method == "zero_shot") {
    const ModelParams pre = load_input_checkpoint(cfg.io.checkpoint, "checkpoint");
    check_model_fits(pre.cfg, ds);
    const ModelParams zs = run_zero_shot(pre);
    save_checkpoint((out / "zero_shot.gapw").string(), zs);
    row.method = "zero_shot";
    row.metrics = evaluate(Predictor::network(zs), ds.real_test, cfg.calibration);
  } else if (method == "pencil") {
    check_model_fits(cfg.model, ds);
    TrainConfig pcfg = cfg.pretrain;
    pcfg.augment = false;  // the filter itself is the transfer mechanism
    const ModelParams init = init_model(cfg.model, splitmix64_at(pcfg.seed, 0));
    const TrainResult r = pretrain(pcfg, init, pencil_split(ds.sim_train),
                                   pencil_split(ds.sim_val));
    save_checkpoint((out / "pencil.gapw").string(), r.best);
    write_curves_csv((out / "pencil_curves.csv").string(), r.curves);
    row.method = "pencil";
    row.metrics = evaluate(Predictor::pencil_network(r.best), ds.real_test,
                           cfg.calibration);
  } else {  // "da"
    check_model_fits(cfg.model, ds);
    const ModelParams init = init_model(cfg.model, splitmix64_at(cfg.pretrain.seed, 0));
    ModelParams stream_a;
    const bool have_a = !cfg.io.stream_a.empty();
    if (have_a) stream_a = load_input_checkpoint(cfg.io.stream_a, "stream_a");
    const DaResult r =
        train_da_baseline(cfg.pretrain, cfg.da, init, ds.sim_train,
                          ds.real_train, have_a ? &stream_a : nullptr);
    save_checkpoint((out / "da.gapw").string(), r.stream_b);
    save_checkpoint((out / "da_stream_a.gapw").string(), r.stream_a);
    write_curves_csv((out / "da_curves.csv").string(), r.curves);
    row.method = "da";
    row.metrics =
        evaluate(Predictor::network(r.stream_b), ds.real_test, cfg.calibration);
  }

  upsert_result_row(out / "results.csv", row);
  std::printf("baseline %s: mse_xyz %.3f cm^2 over %d frames\n",
              row.method.c_str(), row.metrics.mse_xyz_cm2, row.metrics.n_test);
  return 0;
}

int cmd_ablate(const ExperimentConfig& cfg, const fs::path& out) {
  const Dataset ds = load_input_dataset(cfg);
  const ModelParams pre = load_input_checkpoint(cfg.io.checkpoint, "checkpoint");
  check_model_fits(pre.cfg, ds);
  AblationConfig acfg;
  acfg.seq_counts = cfg.ablation_counts;
  acfg.finetune = cfg.finetune;
  acfg.sampler = cfg.sampler;
  acfg.calibration = cfg.calibration;
  const std::vector<AblationRow> rows =
      ablation(acfg, pre, ds.real_train, ds.real_val, ds.real_test);
  write_ablation_csv((out / "ablation.csv").string(), rows);
  std::printf("ablate: %d rows written\n", static_cast<int>(rows.size()));
  return 0;
}

int cmd_overlay(const ExperimentConfig& cfg, const fs::path& out) {
  const Dataset ds = load_input_dataset(cfg);
  const ModelParams params = load_input_checkpoint(cfg.io.checkpoint, "checkpoint");
  check_model_fits(params.cfg, ds);
  if (cfg.overlay_frames.empty())
    throw ConfigInvalid("config: \"overlay.frames\" is required for overlay");

  int written = 0;
  for (const OverlayFrameRef& ref : cfg.overlay_frames) {
    const std::vector<Sequence>* split = nullptr;
    if (ref.split == "sim_train") split = &ds.sim_train;
    else if (ref.split == "sim_val") split = &ds.sim_val;
    else if (ref.split == "real_train") split = &ds.real_train;
    else if (ref.split == "real_val") split = &ds.real_val;
    else if (ref.split == "real_test") split = &ds.real_test;
    else
      throw ConfigInvalid("overlay: unknown split \"" + ref.split + "\"");
    if (ref.seq < 0 || ref.seq >= static_cast<int>(split->size()))
      throw ConfigInvalid("overlay: sequence index " + std::to_string(ref.seq) +
                          " out of range for split " + ref.split);
    const Sequence& seq = (*split)[static_cast<std::size_t>(ref.seq)];
    if (ref.frame < 0 || ref.frame >= static_cast<int>(seq.samples.size()))
      throw ConfigInvalid("overlay: frame index " + std::to_string(ref.frame) +
                          " out of range for sequence " + std::to_string(ref.seq));

    Sequence single;
    single.width = seq.width;
    single.height = seq.height;
    single.samples.push_back(seq.samples[static_cast<std::size_t>(ref.frame)]);
    const Pose pred =
        predict_split(Predictor::network(params), {single}).front();

    Image img = seq.image(static_cast<std::size_t>(ref.frame));
    draw_gate_wireframe(img, pred, cfg.dataset.cam, cfg.dataset.gate, 0.0);

    char name[64];
    std::snprintf(name, sizeof(name), "overlay_%s_%03d_%04d.pgm",
                  ref.split.c_str(), ref.seq, ref.frame);
    write_pgm(out / name, img);
    ++written;
  }
  std::printf("overlay: wrote %d frames\n", written);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"self-supervised sim-to-real adaptation for gate pose regression"};
  app.require_subcommand(1);

  struct SubArgs {
    std::string config;
    std::string out;
    std::uint64_t seed = 0;
    CLI::Option* seed_opt = nullptr;
  };
  const std::vector<std::string> names = {"generate", "pretrain", "finetune",
                                          "baseline", "evaluate", "ablate",
                                          "overlay"};
  std::map<std::string, SubArgs> args;
  std::string method;
  for (const std::string& name : names) {
    CLI::App* sub = app.add_subcommand(name);
    SubArgs& a = args[name];
    sub->add_option("--config", a.config, "experiment config (JSON)")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--out", a.out, "run directory for artifacts")->required();
    a.seed_opt = sub->add_option("--seed", a.seed, "override the stage seed");
    if (name == "baseline")
      sub->add_option("--method", method, "baseline to run")
          ->required()
          ->check(CLI::IsMember({"mean", "zero_shot", "pencil", "da"}));
  }

  CLI11_PARSE(app, argc, argv);

  const std::string name = app.get_subcommands().front()->get_name();
  const SubArgs& a = args[name];

  try {
    ExperimentConfig cfg = load_experiment_config(a.config);
    if (a.seed_opt->count() > 0) {
      if (name == "generate") cfg.dataset.master_seed = a.seed;
      else if (name == "pretrain" || name == "baseline") cfg.pretrain.seed = a.seed;
      else cfg.finetune.seed = a.seed;  // finetune, evaluate, ablate, overlay
    }
    const fs::path out(a.out);
    stamp_run_dir(out, cfg);

    if (name == "generate") return cmd_generate(cfg, out);
    if (name == "pretrain") return cmd_pretrain(cfg, out);
    if (name == "finetune") return cmd_finetune(cfg, out);
    if (name == "evaluate") return cmd_evaluate(cfg, out);
    if (name == "baseline") return cmd_baseline(cfg, out, method);
    if (name == "ablate") return cmd_ablate(cfg, out);
    return cmd_overlay(cfg, out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "gate-adapt: error: %s\n", e.what());
    return 1;
  }
}

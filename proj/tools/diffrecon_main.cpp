#include <chrono>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "diffrecon/config.hpp"
#include "diffrecon/eval.hpp"
#include "diffrecon/io.hpp"
#include "diffrecon/pipeline.hpp"
#include "diffrecon/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace diffrecon;

namespace {

constexpr const char* kVersion = "diffrecon 0.1.0";

struct RunContext {
  RunConfig cfg;
  fs::path out;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
};

[[noreturn]] void die(const std::string& msg) {
  json err = {{"error", msg}};
  std::cerr << err.dump() << "\n";
  std::exit(1);
}

std::string require_path(const std::string& value, const std::string& field) {
  if (value.empty()) die("missing required config field: " + field);
  return value;
}

void write_manifest(const RunContext& ctx, const std::string& command) {
  json m = {{"command", command},
            {"version", kVersion},
            {"seed", ctx.cfg.seed},
            {"config_hash", config_hash64(ctx.cfg.resolved())},
            {"inputs", ctx.inputs},
            {"outputs", ctx.outputs},
            {"written_at", format_iso8601(static_cast<UnixTime>(
                               std::chrono::duration_cast<std::chrono::seconds>(
                                   std::chrono::system_clock::now().time_since_epoch())
                                   .count()))}};
  io::write_file_atomic(ctx.out / "manifest.json", m.dump(1));
}

fs::path out_file(RunContext& ctx, const std::string& name) {
  fs::path p = ctx.out / name;
  ctx.outputs.push_back(p.string());
  return p;
}

fs::path in_file(RunContext& ctx, const std::string& value, const std::string& field) {
  fs::path p = require_path(value, field);
  ctx.inputs.push_back(p.string());
  return p;
}

GridSeries training_slice(const RunConfig& cfg, const GridSeries& fine) {
  int holdout = cfg.eval.holdout_steps;
  int train_steps = fine.steps() - holdout;
  if (train_steps < 1) train_steps = fine.steps();
  return slice_steps(fine, 0, train_steps);
}

void cmd_synth(RunContext& ctx) {
  GridSeries fine = generate_synthetic(ctx.cfg.to_synth_spec());
  io::write_grid_series(out_file(ctx, "fine.stgr"), fine);
}

void cmd_ingest(RunContext& ctx) {
  auto records = io::read_point_records(in_file(ctx, ctx.cfg.paths.records, "paths.records"));
  UnixTime start = parse_iso8601(ctx.cfg.ingest.start_time).value();
  auto [series, masks] = ingest_records(records, ctx.cfg.grid, start, ctx.cfg.ingest.steps);
  io::write_grid_series(out_file(ctx, "observed.stgr"), series);
  io::write_mask_sequence(out_file(ctx, "masks.stgr"), masks);
}

void cmd_mask(RunContext& ctx) {
  GridSeries fine = io::read_grid_series(in_file(ctx, ctx.cfg.paths.input, "paths.input"));
  GridSeries coarse = downsample(fine);
  MaskSequence masks = generate_masks(ctx.cfg.sparse, coarse.steps(), coarse.rows(), coarse.cols());
  GridSeries observed = apply_mask(coarse, masks);
  io::write_grid_series(out_file(ctx, "coarse.stgr"), coarse);
  io::write_mask_sequence(out_file(ctx, "masks.stgr"), masks);
  io::write_grid_series(out_file(ctx, "observed.stgr"), observed);
}

void cmd_pretrain(RunContext& ctx) {
  GridSeries fine = io::read_grid_series(in_file(ctx, ctx.cfg.paths.input, "paths.input"));
  TrainConfig tc = ctx.cfg.to_train_config();
  tc.no_joint = true;
  CheckpointBundle ckpt = train_full(training_slice(ctx.cfg, fine), ctx.cfg.sparse, tc);
  save_checkpoint(out_file(ctx, "checkpoint.json"), ckpt);
}

void cmd_train(RunContext& ctx) {
  GridSeries fine = io::read_grid_series(in_file(ctx, ctx.cfg.paths.input, "paths.input"));
  TrainConfig tc = ctx.cfg.to_train_config();
  CheckpointBundle ckpt = train_full(training_slice(ctx.cfg, fine), ctx.cfg.sparse, tc);
  save_checkpoint(out_file(ctx, "checkpoint.json"), ckpt);
}

void cmd_reconstruct(RunContext& ctx) {
  CheckpointBundle ckpt =
      load_checkpoint(in_file(ctx, ctx.cfg.paths.checkpoint, "paths.checkpoint"));
  GridSeries observed = io::read_grid_series(in_file(ctx, ctx.cfg.paths.observed, "paths.observed"));
  MaskSequence masks = io::read_mask_sequence(in_file(ctx, ctx.cfg.paths.masks, "paths.masks"));
  std::vector<ExternalFeatureVector> ext;
  for (int s = 0; s < observed.steps(); ++s) ext.push_back(calendar_features(observed.time_at(s)));
  GridSeries fine = reconstruct(ckpt, observed, masks, ext, ctx.cfg.seed, ctx.cfg.eval.samples);
  io::write_grid_series(out_file(ctx, "reconstruction.stgr"), fine);
}

void cmd_eval(RunContext& ctx) {
  CheckpointBundle ckpt =
      load_checkpoint(in_file(ctx, ctx.cfg.paths.checkpoint, "paths.checkpoint"));
  GridSeries truth = io::read_grid_series(in_file(ctx, ctx.cfg.paths.truth, "paths.truth"));
  int holdout = std::min(ctx.cfg.eval.holdout_steps, truth.steps());
  GridSeries test = slice_steps(truth, truth.steps() - holdout, truth.steps());
  EvalReport report = run_scenario(ckpt, test, ctx.cfg.sparse, ctx.cfg.seed, ctx.cfg.eval.samples);
  io::write_file_atomic(out_file(ctx, "report.json"), report.to_json());
}

void cmd_ablate(RunContext& ctx) {
  GridSeries fine = io::read_grid_series(in_file(ctx, ctx.cfg.paths.input, "paths.input"));
  int train_steps = fine.steps() - ctx.cfg.eval.holdout_steps;
  if (train_steps < 1) die("eval.holdout_steps leaves no training data");
  AblationVariant v;
  const std::string& name = ctx.cfg.ablate.variant;
  if (name == "noPre") v = AblationVariant::noPre;
  else if (name == "noJoint") v = AblationVariant::noJoint;
  else if (name == "noSTPointFormer") v = AblationVariant::noSTPointFormer;
  else if (name == "noTPatternNet") v = AblationVariant::noTPatternNet;
  else v = AblationVariant::noFGSwap;

  int magnification = fine.spec.magnification;
  FinePredictorPlugin bilinear = [magnification](const GridSeries& completed) {
    MaskSequence all_observed;
    all_observed.flags = Tensor::full({completed.steps(), completed.rows(), completed.cols()}, 1.0);
    return nn_fill_bilinear(completed, all_observed, magnification);
  };
  AblationResult res = run_ablation(v, fine, train_steps, ctx.cfg.sparse,
                                    ctx.cfg.to_train_config(),
                                    v == AblationVariant::noFGSwap ? &bilinear : nullptr,
                                    ctx.cfg.eval.samples);
  json j = {{"variant", name},
            {"full", json::parse(res.full.to_json())},
            {"ablated", json::parse(res.variant.to_json())},
            {"full_param_count", res.full_param_count},
            {"variant_param_count", res.variant_param_count}};
  io::write_file_atomic(out_file(ctx, "ablation.json"), j.dump(1));
}

void cmd_export(RunContext& ctx) {
  GridSeries map = io::read_grid_series(in_file(ctx, ctx.cfg.paths.input, "paths.input"));
  if (!ctx.cfg.paths.truth.empty()) {
    GridSeries truth = io::read_grid_series(in_file(ctx, ctx.cfg.paths.truth, "paths.truth"));
    export_heatmap(map, ctx.cfg.eval.export_step, ctx.out / "heatmap", &truth);
    ctx.outputs.push_back((ctx.out / "heatmap.err.csv").string());
  } else {
    export_heatmap(map, ctx.cfg.eval.export_step, ctx.out / "heatmap");
  }
  ctx.outputs.push_back((ctx.out / "heatmap.ppm").string());
  ctx.outputs.push_back((ctx.out / "heatmap.csv").string());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DiffRecon: fine-grained grid map reconstruction from sparse coarse observations"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = ".";
  std::int64_t seed_override = -1;
  bool seed_given = false;

  const std::vector<std::string> commands = {"synth", "ingest", "mask",  "pretrain", "train",
                                             "reconstruct", "eval", "ablate", "export"};
  for (const auto& name : commands) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "run configuration file (JSON)")->required();
    sub->add_option("--seed", seed_override, "seed override")->each([&](const std::string&) {
      seed_given = true;
    });
    sub->add_option("--out", out_dir, "output directory");
  }

  CLI11_PARSE(app, argc, argv);
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    RunContext ctx;
    ctx.cfg = parse_config(config_path);
    if (seed_given) ctx.cfg.seed = static_cast<std::uint64_t>(seed_override);
    ctx.out = out_dir;
    fs::create_directories(ctx.out);
    ctx.inputs.push_back(config_path);
    io::write_file_atomic(ctx.out / "resolved_config.json", ctx.cfg.resolved());

    if (command == "synth") cmd_synth(ctx);
    else if (command == "ingest") cmd_ingest(ctx);
    else if (command == "mask") cmd_mask(ctx);
    else if (command == "pretrain") cmd_pretrain(ctx);
    else if (command == "train") cmd_train(ctx);
    else if (command == "reconstruct") cmd_reconstruct(ctx);
    else if (command == "eval") cmd_eval(ctx);
    else if (command == "ablate") cmd_ablate(ctx);
    else if (command == "export") cmd_export(ctx);

    write_manifest(ctx, command);
  } catch (const std::exception& e) {
    die(e.what());
  }
  return 0;
}

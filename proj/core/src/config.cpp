#include "diffrecon/config.hpp"

#include <set>

#include "json.hpp"

#include "diffrecon/io.hpp"

namespace diffrecon {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ConfigError(path + ": " + what);
}

std::string join(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

/// Walks the document against the schema tree, rejecting unknown keys.
void check_keys(const json& doc, const json& schema, const std::string& prefix) {
  if (!doc.is_object()) fail(prefix.empty() ? "(root)" : prefix, "expected an object");
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    if (!schema.contains(it.key())) fail(join(prefix, it.key()), "unknown key");
    if (schema[it.key()].is_object()) check_keys(it.value(), schema[it.key()], join(prefix, it.key()));
  }
}

template <typename T>
void read(const json& doc, const std::string& section, const std::string& key, T& out,
          const std::string& prefix) {
  if (!doc.contains(section) || !doc[section].contains(key)) return;
  try {
    out = doc[section][key].get<T>();
  } catch (const json::exception&) {
    fail(join(prefix, key), "type mismatch");
  }
}

template <typename T>
void read_top(const json& doc, const std::string& key, T& out) {
  if (!doc.contains(key)) return;
  try {
    out = doc[key].get<T>();
  } catch (const json::exception&) {
    fail(key, "type mismatch");
  }
}

json schema() {
  return {
      {"seed", true},
      {"grid",
       {{"rows", true},
        {"cols", true},
        {"magnification", true},
        {"interval_s", true},
        {"bbox", {{"lat_min", true}, {"lat_max", true}, {"lon_min", true}, {"lon_max", true}}}}},
      {"sparse", {{"kind", true}, {"missing_ratio", true}, {"seed", true}}},
      {"synth",
       {{"steps", true},
        {"periods", true},
        {"period_amplitude", true},
        {"bumps", true},
        {"noise_sigma", true},
        {"base_level", true},
        {"start_time", true}}},
      {"net",
       {{"d_model", true},
        {"heads", true},
        {"layers", true},
        {"ff_width", true},
        {"l_blocks", true},
        {"k_periods", true},
        {"t_hist", true},
        {"base_filters", true}}},
      {"train",
       {{"steps_c", true},
        {"steps_f", true},
        {"steps_joint", true},
        {"batch", true},
        {"lr", true},
        {"lambda_c", true},
        {"lambda_f", true},
        {"no_pre", true},
        {"no_joint", true},
        {"no_stpointformer", true},
        {"no_tpatternnet", true}}},
      {"diffusion", {{"steps", true}, {"beta_start", true}, {"beta_end", true}, {"kind", true}}},
      {"eval", {{"holdout_steps", true}, {"export_step", true}, {"samples", true}}},
      {"ablate", {{"variant", true}}},
      {"ingest", {{"start_time", true}, {"steps", true}}},
      {"paths",
       {{"input", true},
        {"records", true},
        {"truth", true},
        {"checkpoint", true},
        {"observed", true},
        {"masks", true}}},
  };
}

void validate(const RunConfig& c) {
  if (c.grid.rows < 1) fail("grid.rows", "must be >= 1");
  if (c.grid.cols < 1) fail("grid.cols", "must be >= 1");
  if (c.grid.magnification < 1) fail("grid.magnification", "must be >= 1");
  if (c.grid.interval_s < 1) fail("grid.interval_s", "must be >= 1");
  if (!(c.grid.bbox.lat_min < c.grid.bbox.lat_max)) fail("grid.bbox.lat_min", "must be < lat_max");
  if (!(c.grid.bbox.lon_min < c.grid.bbox.lon_max)) fail("grid.bbox.lon_min", "must be < lon_max");
  if (c.sparse.missing_ratio < 0.0 || c.sparse.missing_ratio > 1.0)
    fail("sparse.missing_ratio", "must be in [0, 1]");
  if (c.synth.steps < 1) fail("synth.steps", "must be >= 1");
  if (c.synth.periods.empty()) fail("synth.periods", "must be non-empty");
  for (int p : c.synth.periods)
    if (p < 2 || p > c.synth.steps / 2) fail("synth.periods", "each period must lie in [2, steps/2]");
  if (c.synth.bumps < 1) fail("synth.bumps", "must be >= 1");
  if (c.synth.noise_sigma < 0.0) fail("synth.noise_sigma", "must be >= 0");
  if (c.synth.period_amplitude < 0.0) fail("synth.period_amplitude", "must be >= 0");
  if (!(c.synth.base_level > 0.0)) fail("synth.base_level", "must be > 0");
  if (c.net.d_model < 1 || c.net.heads < 1 || c.net.d_model % c.net.heads != 0)
    fail("net.heads", "must divide net.d_model");
  if (c.net.layers < 0) fail("net.layers", "must be >= 0");
  if (c.net.ff_width < 1) fail("net.ff_width", "must be >= 1");
  if (c.net.l_blocks < 0) fail("net.l_blocks", "must be >= 0");
  if (c.net.k_periods < 1) fail("net.k_periods", "must be >= 1");
  if (c.net.t_hist < 1) fail("net.t_hist", "must be >= 1");
  if (c.net.base_filters < 1) fail("net.base_filters", "must be >= 1");
  if (c.train.steps_c < 0) fail("train.steps_c", "must be >= 0");
  if (c.train.steps_f < 0) fail("train.steps_f", "must be >= 0");
  if (c.train.steps_joint < 0) fail("train.steps_joint", "must be >= 0");
  if (c.train.batch < 1) fail("train.batch", "must be >= 1");
  if (!(c.train.lr > 0.0)) fail("train.lr", "must be > 0");
  if (c.train.lambda_c < 0.0) fail("train.lambda_c", "must be >= 0");
  if (c.train.lambda_f < 0.0) fail("train.lambda_f", "must be >= 0");
  if (c.diffusion.steps < 1) fail("diffusion.steps", "must be >= 1");
  if (!(c.diffusion.beta_start > 0.0 && c.diffusion.beta_start <= c.diffusion.beta_end &&
        c.diffusion.beta_end < 1.0))
    fail("diffusion.beta_start", "need 0 < beta_start <= beta_end < 1");
  if (c.diffusion.kind != "linear" && c.diffusion.kind != "cosine")
    fail("diffusion.kind", "must be \"linear\" or \"cosine\"");
  if (c.sparse.kind != SparseKind::fixed && c.sparse.kind != SparseKind::random_per_step &&
      c.sparse.kind != SparseKind::large_scale)
    fail("sparse.kind", "invalid");
  if (c.eval.holdout_steps < 1) fail("eval.holdout_steps", "must be >= 1");
  if (c.eval.export_step < 0) fail("eval.export_step", "must be >= 0");
  if (c.eval.samples < 1) fail("eval.samples", "must be >= 1");
  static const std::set<std::string> variants = {"noPre", "noJoint", "noSTPointFormer",
                                                "noTPatternNet", "noFG-swap"};
  if (!variants.count(c.ablate.variant))
    fail("ablate.variant",
         "must be one of noPre, noJoint, noSTPointFormer, noTPatternNet, noFG-swap");
  if (c.ingest.steps < 1) fail("ingest.steps", "must be >= 1");
  if (!parse_iso8601(c.synth.start_time)) fail("synth.start_time", "not an ISO-8601 timestamp");
  if (!parse_iso8601(c.ingest.start_time)) fail("ingest.start_time", "not an ISO-8601 timestamp");
}

SparseKind kind_from(const std::string& s, const std::string& path) {
  if (s == "fixed") return SparseKind::fixed;
  if (s == "random_per_step") return SparseKind::random_per_step;
  if (s == "large_scale") return SparseKind::large_scale;
  fail(path, "must be one of fixed, random_per_step, large_scale");
}

std::string kind_name(SparseKind k) {
  switch (k) {
    case SparseKind::fixed: return "fixed";
    case SparseKind::random_per_step: return "random_per_step";
    case SparseKind::large_scale: return "large_scale";
  }
  return "fixed";
}

}  // namespace

RunConfig parse_config_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("(root): not valid JSON: ") + e.what());
  }
  check_keys(doc, schema(), "");

  RunConfig c;
  read_top(doc, "seed", c.seed);
  read(doc, "grid", "rows", c.grid.rows, "grid");
  read(doc, "grid", "cols", c.grid.cols, "grid");
  read(doc, "grid", "magnification", c.grid.magnification, "grid");
  read(doc, "grid", "interval_s", c.grid.interval_s, "grid");
  if (doc.contains("grid") && doc["grid"].contains("bbox")) {
    const json& b = doc["grid"]["bbox"];
    read(doc["grid"], "bbox", "lat_min", c.grid.bbox.lat_min, "grid.bbox");
    read(doc["grid"], "bbox", "lat_max", c.grid.bbox.lat_max, "grid.bbox");
    read(doc["grid"], "bbox", "lon_min", c.grid.bbox.lon_min, "grid.bbox");
    read(doc["grid"], "bbox", "lon_max", c.grid.bbox.lon_max, "grid.bbox");
    (void)b;
  }
  if (doc.contains("sparse") && doc["sparse"].contains("kind")) {
    std::string k;
    read(doc, "sparse", "kind", k, "sparse");
    c.sparse.kind = kind_from(k, "sparse.kind");
  }
  read(doc, "sparse", "missing_ratio", c.sparse.missing_ratio, "sparse");
  read(doc, "sparse", "seed", c.sparse.seed, "sparse");
  read(doc, "synth", "steps", c.synth.steps, "synth");
  read(doc, "synth", "periods", c.synth.periods, "synth");
  read(doc, "synth", "period_amplitude", c.synth.period_amplitude, "synth");
  read(doc, "synth", "bumps", c.synth.bumps, "synth");
  read(doc, "synth", "noise_sigma", c.synth.noise_sigma, "synth");
  read(doc, "synth", "base_level", c.synth.base_level, "synth");
  read(doc, "synth", "start_time", c.synth.start_time, "synth");
  read(doc, "net", "d_model", c.net.d_model, "net");
  read(doc, "net", "heads", c.net.heads, "net");
  read(doc, "net", "layers", c.net.layers, "net");
  read(doc, "net", "ff_width", c.net.ff_width, "net");
  read(doc, "net", "l_blocks", c.net.l_blocks, "net");
  read(doc, "net", "k_periods", c.net.k_periods, "net");
  read(doc, "net", "t_hist", c.net.t_hist, "net");
  read(doc, "net", "base_filters", c.net.base_filters, "net");
  read(doc, "train", "steps_c", c.train.steps_c, "train");
  read(doc, "train", "steps_f", c.train.steps_f, "train");
  read(doc, "train", "steps_joint", c.train.steps_joint, "train");
  read(doc, "train", "batch", c.train.batch, "train");
  read(doc, "train", "lr", c.train.lr, "train");
  read(doc, "train", "lambda_c", c.train.lambda_c, "train");
  read(doc, "train", "lambda_f", c.train.lambda_f, "train");
  read(doc, "train", "no_pre", c.train.no_pre, "train");
  read(doc, "train", "no_joint", c.train.no_joint, "train");
  read(doc, "train", "no_stpointformer", c.train.no_stpointformer, "train");
  read(doc, "train", "no_tpatternnet", c.train.no_tpatternnet, "train");
  read(doc, "diffusion", "steps", c.diffusion.steps, "diffusion");
  read(doc, "diffusion", "beta_start", c.diffusion.beta_start, "diffusion");
  read(doc, "diffusion", "beta_end", c.diffusion.beta_end, "diffusion");
  read(doc, "diffusion", "kind", c.diffusion.kind, "diffusion");
  read(doc, "eval", "holdout_steps", c.eval.holdout_steps, "eval");
  read(doc, "eval", "export_step", c.eval.export_step, "eval");
  read(doc, "eval", "samples", c.eval.samples, "eval");
  read(doc, "ablate", "variant", c.ablate.variant, "ablate");
  read(doc, "ingest", "start_time", c.ingest.start_time, "ingest");
  read(doc, "ingest", "steps", c.ingest.steps, "ingest");
  read(doc, "paths", "input", c.paths.input, "paths");
  read(doc, "paths", "records", c.paths.records, "paths");
  read(doc, "paths", "truth", c.paths.truth, "paths");
  read(doc, "paths", "checkpoint", c.paths.checkpoint, "paths");
  read(doc, "paths", "observed", c.paths.observed, "paths");
  read(doc, "paths", "masks", c.paths.masks, "paths");

  validate(c);
  return c;
}

RunConfig parse_config(const std::filesystem::path& path) {
  return parse_config_text(io::read_file(path));
}

TrainConfig RunConfig::to_train_config() const {
  TrainConfig t;
  t.steps_c = train.steps_c;
  t.steps_f = train.steps_f;
  t.steps_joint = train.steps_joint;
  t.batch = train.batch;
  t.lr = train.lr;
  t.seed = seed;
  t.diffusion_steps = diffusion.steps;
  t.beta_start = diffusion.beta_start;
  t.beta_end = diffusion.beta_end;
  t.schedule_kind = diffusion.kind == "cosine" ? ScheduleKind::cosine : ScheduleKind::linear;
  t.net = net;
  t.no_pre = train.no_pre;
  t.no_joint = train.no_joint;
  t.no_stpointformer = train.no_stpointformer;
  t.no_tpatternnet = train.no_tpatternnet;
  t.lambda_c = train.lambda_c;
  t.lambda_f = train.lambda_f;
  return t;
}

SynthSpec RunConfig::to_synth_spec() const {
  SynthSpec s;
  s.grid = grid;
  s.steps = synth.steps;
  s.periods = synth.periods;
  s.period_amplitude = synth.period_amplitude;
  s.bumps = synth.bumps;
  s.noise_sigma = synth.noise_sigma;
  s.base_level = synth.base_level;
  s.start_time = parse_iso8601(synth.start_time).value();
  s.seed = seed;
  return s;
}

std::string RunConfig::resolved() const {
  json j = {
      {"seed", seed},
      {"grid",
       {{"rows", grid.rows},
        {"cols", grid.cols},
        {"magnification", grid.magnification},
        {"interval_s", grid.interval_s},
        {"bbox",
         {{"lat_min", grid.bbox.lat_min},
          {"lat_max", grid.bbox.lat_max},
          {"lon_min", grid.bbox.lon_min},
          {"lon_max", grid.bbox.lon_max}}}}},
      {"sparse",
       {{"kind", kind_name(sparse.kind)},
        {"missing_ratio", sparse.missing_ratio},
        {"seed", sparse.seed}}},
      {"synth",
       {{"steps", synth.steps},
        {"periods", synth.periods},
        {"period_amplitude", synth.period_amplitude},
        {"bumps", synth.bumps},
        {"noise_sigma", synth.noise_sigma},
        {"base_level", synth.base_level},
        {"start_time", synth.start_time}}},
      {"net",
       {{"d_model", net.d_model},
        {"heads", net.heads},
        {"layers", net.layers},
        {"ff_width", net.ff_width},
        {"l_blocks", net.l_blocks},
        {"k_periods", net.k_periods},
        {"t_hist", net.t_hist},
        {"base_filters", net.base_filters}}},
      {"train",
       {{"steps_c", train.steps_c},
        {"steps_f", train.steps_f},
        {"steps_joint", train.steps_joint},
        {"batch", train.batch},
        {"lr", train.lr},
        {"lambda_c", train.lambda_c},
        {"lambda_f", train.lambda_f},
        {"no_pre", train.no_pre},
        {"no_joint", train.no_joint},
        {"no_stpointformer", train.no_stpointformer},
        {"no_tpatternnet", train.no_tpatternnet}}},
      {"diffusion",
       {{"steps", diffusion.steps},
        {"beta_start", diffusion.beta_start},
        {"beta_end", diffusion.beta_end},
        {"kind", diffusion.kind}}},
      {"eval",
       {{"holdout_steps", eval.holdout_steps},
        {"export_step", eval.export_step},
        {"samples", eval.samples}}},
      {"ablate", {{"variant", ablate.variant}}},
      {"ingest", {{"start_time", ingest.start_time}, {"steps", ingest.steps}}},
      {"paths",
       {{"input", paths.input},
        {"records", paths.records},
        {"truth", paths.truth},
        {"checkpoint", paths.checkpoint},
        {"observed", paths.observed},
        {"masks", paths.masks}}},
  };
  return j.dump(1);
}

}  // namespace diffrecon

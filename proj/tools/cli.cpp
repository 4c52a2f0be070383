#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "hcd/binary_io.hpp"
#include "hcd/error.hpp"
#include "hcd/eval.hpp"
#include "hcd/pipeline.hpp"
#include "hcd/regressor.hpp"
#include "hcd/rng.hpp"
#include "hcd/synth.hpp"

namespace hcd::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

struct Flags {
  std::optional<std::string> config;
  std::optional<std::string> method;
  std::optional<std::uint64_t> seed;
  std::optional<double> threshold;
  std::optional<double> clip_sigma;
  bool no_median = false;
  std::optional<std::size_t> runs;
  std::optional<std::string> out;
  std::optional<std::string> style;
  std::optional<std::string> selection;
};

// Effective configuration: the config file with command-line overrides
// applied, plus the directory relative input paths are resolved against.
struct Config {
  json doc = json::object();
  fs::path base_dir = fs::current_path();

  [[nodiscard]] fs::path path(const std::string& key) const {
    if (!doc.contains(key)) {
      throw InvalidArgument("config key '" + key + "' is required");
    }
    return resolve(doc.at(key).get<std::string>());
  }
  [[nodiscard]] std::optional<fs::path> optional_path(const std::string& key) const {
    if (!doc.contains(key) || doc.at(key).is_null()) {
      return std::nullopt;
    }
    return resolve(doc.at(key).get<std::string>());
  }
  [[nodiscard]] fs::path resolve(const fs::path& p) const { return p.is_absolute() ? p : base_dir / p; }
  template <typename T>
  [[nodiscard]] T get(const std::string& key, T fallback) const {
    return doc.value(key, fallback);
  }
};

Config load_config(const Flags& flags, const std::string& default_out) {
  Config config;
  if (flags.config) {
    const auto bytes = read_file(*flags.config);
    try {
      config.doc = json::parse(std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
    } catch (const json::exception& e) {
      throw FormatError("config " + *flags.config + ": " + e.what());
    }
    if (!config.doc.is_object()) {
      throw FormatError("config " + *flags.config + ": top level must be an object");
    }
    config.base_dir = fs::absolute(*flags.config).parent_path();
  }
  auto& d = config.doc;
  if (flags.method) d["method"] = *flags.method;
  if (flags.seed) d["seed"] = *flags.seed;
  if (flags.threshold) d["threshold"] = *flags.threshold;
  if (flags.clip_sigma) d["clip_sigma"] = *flags.clip_sigma;
  if (flags.no_median) d["median_filter"] = false;
  if (flags.runs) d["runs"] = *flags.runs;
  if (flags.selection) d["selection"] = *flags.selection;
  if (flags.style) d["synth"]["style"] = *flags.style;
  if (flags.out) {
    d["output_dir"] = fs::absolute(*flags.out).string();
  } else if (!d.contains("output_dir")) {
    d["output_dir"] = fs::absolute(default_out).string();
  }
  return config;
}

fs::path prepare_output_dir(const Config& config) {
  const fs::path dir = config.path("output_dir");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  }
  return dir;
}

RegressorSpec spec_of(const Config& config) { return spec_from_json(config.doc.dump()); }

PipelineOptions pipeline_options(const Config& config) {
  PipelineOptions options;
  options.clip_sigma = config.get("clip_sigma", options.clip_sigma);
  options.threshold = config.get("threshold", options.threshold);
  options.median_filter = config.get("median_filter", options.median_filter);
  options.auto_threshold = config.get("auto_threshold", options.auto_threshold);
  options.normalize_inputs = config.get("normalize_inputs", options.normalize_inputs);
  options.log_x = config.get("log_x", options.log_x);
  options.log_y = config.get("log_y", options.log_y);
  if (!(options.threshold >= 0.0 && options.threshold <= 1.0)) {
    throw InvalidArgument("threshold must be in [0, 1]");
  }
  if (!(options.clip_sigma >= 0.0) || !std::isfinite(options.clip_sigma)) {
    throw InvalidArgument("clip_sigma must be finite and non-negative");
  }
  return options;
}

std::string hex64(std::uint64_t v) {
  char buffer[17];
  std::snprintf(buffer, sizeof buffer, "%016llx", static_cast<unsigned long long>(v));
  return buffer;
}

// FNV-1a over the little-endian bytes of every score.
std::uint64_t score_hash(const DistanceImage& d) {
  ByteWriter writer;
  writer.f64s(d.values());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const std::byte b : writer.buffer()) {
    h ^= static_cast<std::uint64_t>(b);
    h *= 0x100000001b3ULL;
  }
  return h;
}

void write_json(const fs::path& path, const json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

int cmd_synth(const Flags& flags, std::ostream& out) {
  const Config config = load_config(flags, "synth_out");
  const json s = config.doc.value("synth", json::object());
  SynthConfig sc;
  sc.height = s.value("height", sc.height);
  sc.width = s.value("width", sc.width);
  sc.latent_channels = s.value("latent_channels", sc.latent_channels);
  sc.channels_a = s.value("channels_a", sc.channels_a);
  sc.channels_b = s.value("channels_b", sc.channels_b);
  sc.sensor_b_style = parse_sensor_style(s.value("style", std::string(to_string(sc.sensor_b_style))));
  sc.change_fraction = s.value("change_fraction", sc.change_fraction);
  sc.noise_sigma = s.value("noise_sigma", sc.noise_sigma);
  sc.seed = config.get("seed", std::uint64_t{0});
  const double train_fraction = s.value("train_fraction", 0.02);

  const SyntheticPair pair = generate(sc);
  const Mask train = fraction_sampler(pair.unchanged, train_fraction)(split_seed(sc.seed, 100));

  const fs::path dir = prepare_output_dir(config);
  write_raster(pair.x, dir / "x.hcdr");
  write_raster(pair.y, dir / "y.hcdr");
  write_mask(pair.change, dir / "change.hcdr");
  write_mask(pair.unchanged, dir / "unchanged.hcdr");
  write_mask(train, dir / "train_mask.hcdr");
  write_pgm(pair.x, 0, dir / "x.pgm");
  write_pgm(pair.y, 0, dir / "y.pgm");
  write_pgm(pair.change, dir / "change.pgm");
  write_pgm(train, dir / "train_mask.pgm");

  // Ready-made config for `run`, `eval` and `grid` on this pair.
  json run;
  run["image_x"] = "x.hcdr";
  run["image_y"] = "y.hcdr";
  run["train_mask"] = "train_mask.hcdr";
  run["ground_truth"] = "change.hcdr";
  run["train_region"] = "unchanged.hcdr";
  run["train_fraction"] = train_fraction;
  run["seed"] = sc.seed;
  run["log_y"] = sc.sensor_b_style == SensorStyle::sar_like;
  write_json(dir / "run.json", run);

  out << "synth: " << sc.height << "x" << sc.width << " " << to_string(sc.sensor_b_style) << ", "
      << pair.change.count() << " changed pixels, " << train.count() << " training pixels -> "
      << dir.string() << "\n";
  return kExitOk;
}

void write_distance(const DistanceImage& d, const fs::path& dir, const std::string& name, bool preview) {
  write_distance_image(d, dir / (name + ".hcdr"));
  if (preview) {
    write_pgm(d, dir / (name + ".pgm"));
  }
}

int cmd_run(const Flags& flags, std::ostream& out) {
  const Config config = load_config(flags, "run_out");
  const Raster x = read_raster(config.path("image_x"));
  const Raster y = read_raster(config.path("image_y"));
  const Mask train = read_mask(config.path("train_mask"));
  std::optional<Mask> truth;
  if (const auto p = config.optional_path("ground_truth")) {
    truth = read_mask(*p);
  }
  const RegressorSpec spec = spec_of(config);
  const PipelineOptions options = pipeline_options(config);
  const fs::path dir = prepare_output_dir(config);

  const ChangeResult result = run_pipeline(x, y, train, spec, options);

  write_raster(result.y_hat, dir / "y_hat.hcdr");
  write_raster(result.x_hat, dir / "x_hat.hcdr");
  write_distance(result.distance_x, dir, "distance_x", false);
  write_distance(result.distance_y, dir, "distance_y", false);
  write_distance(result.clipped_x, dir, "clipped_x", false);
  write_distance(result.clipped_y, dir, "clipped_y", false);
  write_distance(result.normalized_x, dir, "normalized_x", true);
  write_distance(result.normalized_y, dir, "normalized_y", true);
  write_distance(result.fused, dir, "fused", true);
  write_distance(result.score, dir, "score", true);
  write_mask(result.change_map, dir / "change_map.hcdr");
  write_pgm(result.change_map, dir / "change_map.pgm");

  json r;
  r["method"] = to_string(spec.method());
  r["hyperparams"] = describe(spec);
  r["spec"] = json::parse(spec_to_json(spec));
  std::optional<double> auc;
  if (truth) {
    if (const auto roc = roc_auc(result.score, *truth)) {
      auc = roc->auc;
      r["auc"] = roc->auc;
    }
  }
  r["threshold"] = result.threshold_used;
  r["changed_pixels"] = result.change_map.count();
  r["timings"] = {{"fit_xy_s", result.timings.fit_xy},
                  {"predict_xy_s", result.timings.predict_xy},
                  {"fit_yx_s", result.timings.fit_yx},
                  {"predict_yx_s", result.timings.predict_yx},
                  {"total_s", result.timings.total()}};
  r["score_hash"] = hex64(score_hash(result.score));
  r["config"] = config.doc;
  write_json(dir / "result.json", r);

  out << "method: " << to_string(spec.method()) << " (" << describe(spec) << ")\n";
  if (auc) {
    char buffer[64];
    std::snprintf(buffer, sizeof buffer, "%.6f", *auc);
    out << "AUC: " << buffer << "\n";
  }
  out << "elapsed: " << result.timings.total() << " s\n";
  out << "changed pixels: " << result.change_map.count() << " of " << result.change_map.size() << "\n";
  return kExitOk;
}

int cmd_eval(const Flags& flags, std::ostream& out) {
  const Config config = load_config(flags, "eval_out");
  const Raster x = read_raster(config.path("image_x"));
  const Raster y = read_raster(config.path("image_y"));
  const Mask truth = read_mask(config.path("ground_truth"));
  Mask region;
  if (const auto p = config.optional_path("train_region")) {
    region = read_mask(*p);
  } else {
    std::vector<std::uint8_t> v(truth.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = truth[i] ? 0 : 1;
    }
    region = Mask(truth.height(), truth.width(), std::move(v));
  }
  const auto runs = config.get("runs", std::size_t{1});
  const double fraction = config.get("train_fraction", 0.02);
  const RegressorSpec spec = spec_of(config);
  const PipelineOptions options = pipeline_options(config);
  const fs::path dir = prepare_output_dir(config);

  const BenchmarkRecord record =
      repeated_runs(x, y, truth, spec, runs, fraction_sampler(std::move(region), fraction), options);
  const std::vector<BenchmarkRecord> records{record};
  write_file_atomic(dir / "benchmark.csv", scatter_csv(records));
  write_file_atomic(dir / "records.jsonl", records_to_jsonl(records));

  char buffer[160];
  std::snprintf(buffer, sizeof buffer, "auc %.5f +- %.5f, time %.3f +- %.3f s over %zu runs", record.auc_mean,
                record.auc_std, record.time_mean_s, record.time_std_s, record.runs);
  out << to_string(spec.method()) << " (" << record.hyperparams << "): " << buffer << "\n";
  return kExitOk;
}

template <typename T>
std::vector<T> axis(const json& grid, const char* key, std::vector<T> fallback) {
  return grid.contains(key) ? grid.at(key).get<std::vector<T>>() : fallback;
}

std::vector<RegressorSpec> grid_of(const Config& config, const RegressorSpec& base) {
  const json g = config.doc.value("grid", json::object());
  switch (base.method()) {
    case Method::rf: {
      const auto trees = axis<int>(g, "trees", {32, 64, 128, 256, 512});
      const auto leaves = axis<int>(g, "min_leaf", {5, 10, 15, 20});
      return rf_grid(trees, leaves, std::get<RfHyper>(base.hyper), base.seed);
    }
    case Method::hpt: {
      const auto ks = axis<int>(g, "K", {16, 32, 64, 128});
      const auto gammas = axis<double>(g, "gamma", decades(-2, 3));
      return hpt_grid(ks, gammas, std::get<HptHyper>(base.hyper), base.seed);
    }
    case Method::svr: {
      const auto cs = axis<double>(g, "C", decades(-1, 2));
      const auto eps = axis<double>(g, "epsilon", {0.01, 0.05, 0.1});
      const auto sigmas = axis<double>(g, "sigma", {0.1, 0.3, 1.0});
      return svr_grid(cs, eps, sigmas, std::get<SvrHyper>(base.hyper), base.seed);
    }
    case Method::gp:
      // Hyperparameters come from the marginal likelihood; the only choice is
      // isotropic versus anisotropic length-scales.
      {
        std::vector<RegressorSpec> grid;
        for (const bool aniso : {false, true}) {
          GpHyper h = std::get<GpHyper>(base.hyper);
          h.anisotropic = aniso;
          grid.push_back({h, base.seed});
        }
        return grid;
      }
  }
  return {};
}

int cmd_grid(const Flags& flags, std::ostream& out) {
  const Config config = load_config(flags, "grid_out");
  const Raster x = read_raster(config.path("image_x"));
  const Raster y = read_raster(config.path("image_y"));
  const Mask train = read_mask(config.path("train_mask"));
  const RegressorSpec base = spec_of(config);
  GridOptions options;
  options.selection = config.doc.contains("selection")
                          ? parse_selection(config.doc.at("selection").get<std::string>())
                          : default_selection(base.method());
  options.folds = config.get("folds", options.folds);
  options.seed = base.seed;
  options.pipeline = pipeline_options(config);
  if (options.selection == Selection::auc_on_validation) {
    options.validation_truth = read_mask(config.path("ground_truth"));
  }
  const fs::path dir = prepare_output_dir(config);

  const auto grid = grid_of(config, base);
  const GridResult result = grid_search(x, y, train, grid, options);

  std::string csv = "index,method,hyperparams,score,elapsed_s\n";
  for (std::size_t i = 0; i < result.points.size(); ++i) {
    const auto& p = result.points[i];
    char buffer[96];
    std::snprintf(buffer, sizeof buffer, ",%.17g,%.17g\n", p.score, p.elapsed_s);
    csv += std::to_string(i) + "," + std::string(to_string(p.spec.method())) + "," + describe(p.spec) + buffer;
  }
  write_file_atomic(dir / "grid.csv", csv);
  json best = json::parse(spec_to_json(result.best()));
  best["selection"] = to_string(options.selection);
  best["score"] = result.points[result.best_index].score;
  write_json(dir / "best.json", best);

  out << "selection: " << to_string(options.selection) << ", " << result.points.size() << " grid points\n";
  out << "best: " << describe(result.best()) << " (score " << result.points[result.best_index].score << ")\n";
  return kExitOk;
}

void add_common(CLI::App& cmd, Flags& flags) {
  cmd.add_option("--config", flags.config, "JSON configuration file");
  cmd.add_option("--method", flags.method, "Regressor: gp, svr, rf or hpt");
  cmd.add_option("--seed", flags.seed, "Master seed");
  cmd.add_option("--out", flags.out, "Output directory");
}

}  // namespace

int run(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Heterogeneous change detection by image regression", "hcd"};
  app.require_subcommand(1);
  Flags flags;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic image pair with a planted change");
  add_common(*synth, flags);
  synth->add_option("--style", flags.style, "Second sensor: optical or sar_like");

  auto* run_cmd = app.add_subcommand("run", "Run the change-detection pipeline once");
  auto* eval = app.add_subcommand("eval", "Repeated runs with fresh training sets");
  auto* grid = app.add_subcommand("grid", "Grid search over regressor hyperparameters");
  for (auto* cmd : {run_cmd, eval, grid}) {
    add_common(*cmd, flags);
    cmd->add_option("--threshold", flags.threshold, "Change threshold on the fused score");
    cmd->add_option("--clip-sigma", flags.clip_sigma, "Clip distances above mean + k sigma");
    cmd->add_flag("--no-median", flags.no_median, "Skip the 3x3 median filter");
  }
  eval->add_option("--runs", flags.runs, "Number of runs")->check(CLI::PositiveNumber);
  grid->add_option("--selection", flags.selection, "cross_validation, oob or auc_on_validation");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (synth->parsed()) return cmd_synth(flags, out);
    if (run_cmd->parsed()) return cmd_run(flags, out);
    if (eval->parsed()) return cmd_eval(flags, out);
    return cmd_grid(flags, out);
  } catch (const Error& e) {
    err << "error: " << to_string(e.category()) << ": " << e.what() << "\n";
  } catch (const nlohmann::json::exception& e) {
    err << "error: format: config: " << e.what() << "\n";
  } catch (const std::exception& e) {
    err << "error: internal: " << e.what() << "\n";
  }
  return kExitFailure;
}

}  // namespace hcd::cli

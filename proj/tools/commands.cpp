#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>

#include <json.hpp>

#include "guq/autoencoder.hpp"
#include "guq/checkpoint.hpp"
#include "guq/csv.hpp"
#include "guq/error.hpp"
#include "guq/estimator.hpp"
#include "guq/gustgen.hpp"
#include "guq/sensitivity.hpp"
#include "guq/uq.hpp"
#include "svg.hpp"

namespace guq::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "data_dir", "preset", "gusts_per_angle", "snapshots_per_case", "split_seed",
      "dataset", "ae_checkpoint", "latents", "estimator", "estimator_deterministic",
      "report_dir", "sensitivity_dir",
      "beta", "ae_learning_rate", "ae_batch_size", "ae_max_epochs", "ae_patience",
      "dropout", "weight_decay", "train_noise_variance", "est_learning_rate", "est_batch_size",
      "est_max_epochs", "est_patience", "estimator_variant",
      "T", "M", "gamma", "sigma_x2", "gramian_samples", "level", "eval_noise", "eval_cases",
      "sensitivity_cases", "sensitivity_modes"};
  return keys;
}

/// Every setting with its default resolved; the manifest records this.
struct Settings {
  std::string preset;
  std::size_t gusts_per_angle = 0;
  std::size_t snapshots_per_case = 0;
  std::uint64_t split_seed = 0;

  fs::path dataset, ae_checkpoint, latents, estimator, estimator_det, report_dir,
      sensitivity_dir;

  double beta = 0.05;
  double ae_learning_rate = 1e-3;
  std::size_t ae_batch_size = 256;
  std::size_t ae_max_epochs = 0;
  std::size_t ae_patience = 0;

  double dropout = 0.05;
  double weight_decay = 1e-7;
  double train_noise_variance = 2.5e-5;
  double est_learning_rate = 1e-3;
  std::size_t est_batch_size = 256;
  std::size_t est_max_epochs = 0;
  std::size_t est_patience = 0;
  std::string estimator_variant;

  std::size_t passes = 100;
  std::size_t samples = 100;
  double gamma = 0.99;
  double sigma_x2 = 2.5e-5;
  std::size_t gramian_samples = 100;
  double level = 0.95;
  std::string eval_noise;
  std::vector<int> eval_cases;
  std::vector<int> sensitivity_cases;
  std::size_t sensitivity_modes = 2;

  json to_json() const {
    json j;
    j["preset"] = preset;
    j["gusts_per_angle"] = gusts_per_angle;
    j["snapshots_per_case"] = snapshots_per_case;
    j["split_seed"] = split_seed;
    j["dataset"] = dataset.string();
    j["ae_checkpoint"] = ae_checkpoint.string();
    j["latents"] = latents.string();
    j["estimator"] = estimator.string();
    j["estimator_deterministic"] = estimator_det.string();
    j["report_dir"] = report_dir.string();
    j["sensitivity_dir"] = sensitivity_dir.string();
    j["beta"] = beta;
    j["ae_learning_rate"] = ae_learning_rate;
    j["ae_batch_size"] = ae_batch_size;
    j["ae_max_epochs"] = ae_max_epochs;
    j["ae_patience"] = ae_patience;
    j["dropout"] = dropout;
    j["weight_decay"] = weight_decay;
    j["train_noise_variance"] = train_noise_variance;
    j["est_learning_rate"] = est_learning_rate;
    j["est_batch_size"] = est_batch_size;
    j["est_max_epochs"] = est_max_epochs;
    j["est_patience"] = est_patience;
    j["estimator_variant"] = estimator_variant;
    j["T"] = passes;
    j["M"] = samples;
    j["gamma"] = gamma;
    j["sigma_x2"] = sigma_x2;
    j["gramian_samples"] = gramian_samples;
    j["level"] = level;
    j["eval_noise"] = eval_noise;
    j["eval_cases"] = eval_cases;
    j["sensitivity_cases"] = sensitivity_cases;
    j["sensitivity_modes"] = sensitivity_modes;
    return j;
  }
};

std::size_t get_size(const RunConfig& c, const std::string& key, std::size_t fallback) {
  return static_cast<std::size_t>(c.get_u64(key, fallback));
}

Settings resolve(const Context& ctx) {
  const RunConfig& c = ctx.config;
  Settings s;
  s.preset = c.get_string("preset", "desk");
  const gust::Preset preset = gust::Preset::by_name(s.preset);
  const bool desk = preset.name == "desk";
  s.gusts_per_angle = get_size(c, "gusts_per_angle", preset.gusts_per_angle);
  s.snapshots_per_case = get_size(c, "snapshots_per_case", preset.snapshots_per_case);
  s.split_seed = c.get_u64("split_seed", ctx.seed);

  auto path = [&](const std::string& key, const std::string& fallback) {
    fs::path p = c.get_string(key, fallback);
    return p.is_absolute() ? p : ctx.root / p;
  };
  s.dataset = path("dataset", "dataset.guqd");
  s.ae_checkpoint = path("ae_checkpoint", "ae.guqm");
  s.latents = path("latents", "latents.csv");
  s.estimator = path("estimator", "estimator.guqm");
  s.estimator_det = path("estimator_deterministic", "estimator_det.guqm");
  s.report_dir = path("report_dir", "report");
  s.sensitivity_dir = path("sensitivity_dir", "sensitivity");

  // Desk runs cap the epoch budget; patience defaults are clipped to that cap.
  s.beta = c.get_double("beta", 0.05);
  s.ae_learning_rate = c.get_double("ae_learning_rate", 1e-3);
  s.ae_batch_size = get_size(c, "ae_batch_size", 256);
  s.ae_max_epochs = get_size(c, "ae_max_epochs", desk ? 150 : 5000);
  s.ae_patience = get_size(c, "ae_patience", std::min<std::size_t>(200, s.ae_max_epochs));

  s.dropout = c.get_double("dropout", 0.05);
  s.weight_decay = c.get_double("weight_decay", 1e-7);
  s.train_noise_variance = c.get_double("train_noise_variance", 2.5e-5);
  s.est_learning_rate = c.get_double("est_learning_rate", 1e-3);
  s.est_batch_size = get_size(c, "est_batch_size", 256);
  s.est_max_epochs = get_size(c, "est_max_epochs", desk ? 150 : 5000);
  s.est_patience = get_size(c, "est_patience", std::min<std::size_t>(500, s.est_max_epochs));
  s.estimator_variant = c.get_string("estimator_variant", "both");

  s.passes = get_size(c, "T", 100);
  s.samples = get_size(c, "M", 100);
  s.gamma = c.get_double("gamma", 0.99);
  s.sigma_x2 = c.get_double("sigma_x2", 2.5e-5);
  s.gramian_samples = get_size(c, "gramian_samples", 100);
  s.level = c.get_double("level", 0.95);
  s.eval_noise = c.get_string("eval_noise", "structured");
  s.eval_cases = parse_int_list(c.get_string("eval_cases", "auto"), "eval_cases");
  s.sensitivity_cases =
      parse_int_list(c.get_string("sensitivity_cases", "auto"), "sensitivity_cases");
  s.sensitivity_modes = get_size(c, "sensitivity_modes", 2);

  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  require(s.snapshots_per_case >= 2, "snapshots_per_case must be at least 2");
  require(s.beta >= 0.0, "beta must be nonnegative");
  require(s.dropout >= 0.0 && s.dropout < 1.0, "dropout must be in [0, 1)");
  require(s.weight_decay >= 0.0, "weight_decay must be nonnegative");
  require(s.train_noise_variance >= 0.0, "train_noise_variance must be nonnegative");
  require(s.ae_learning_rate > 0.0 && s.est_learning_rate > 0.0, "learning rates must be positive");
  require(s.ae_batch_size > 0 && s.est_batch_size > 0, "batch sizes must be positive");
  require(s.ae_max_epochs > 0 && s.est_max_epochs > 0, "max_epochs must be positive");
  require(s.ae_patience > 0 && s.ae_patience <= s.ae_max_epochs,
          "ae_patience must be in [1, ae_max_epochs]");
  require(s.est_patience > 0 && s.est_patience <= s.est_max_epochs,
          "est_patience must be in [1, est_max_epochs]");
  require(s.estimator_variant == "both" || s.estimator_variant == "probabilistic" ||
              s.estimator_variant == "deterministic",
          "estimator_variant must be both, probabilistic or deterministic");
  require(s.passes >= 2, "T must be at least 2");
  require(s.samples >= 2, "M must be at least 2");
  require(s.gamma >= 0.0 && s.gamma <= 1.0, "gamma must be in [0, 1]");
  require(s.sigma_x2 >= 0.0, "sigma_x2 must be nonnegative");
  require(s.gramian_samples >= 1, "gramian_samples must be at least 1");
  require(s.level > 0.0 && s.level < 1.0, "level must be in (0, 1)");
  require(s.eval_noise == "structured" || s.eval_noise == "white" || s.eval_noise == "none",
          "eval_noise must be structured, white or none");
  require(s.sensitivity_modes >= 1 && s.sensitivity_modes <= gust::kStackedSize,
          "sensitivity_modes must be in [1, 33]");
  return s;
}

void log_line(const Context& ctx, const std::string& text) {
  if (ctx.log) *ctx.log << text << '\n' << std::flush;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void write_json(const fs::path& path, const json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

fs::path sibling(const fs::path& p, const std::string& suffix) {
  return p.parent_path() / (p.stem().string() + suffix);
}

json manifest_base(const Context& ctx, const Settings& s, const std::string& command) {
  json j;
  j["command"] = command;
  j["seed"] = ctx.seed;
  j["settings"] = s.to_json();
  return j;
}

void write_history_csv(const fs::path& path, const nn::TrainResult& r) {
  auto out = open_out(path);
  out << "epoch,train_loss,validation_loss\n";
  for (const auto& h : r.history)
    csv::Row(out) << static_cast<unsigned long>(h.epoch) << h.train_loss << h.validation_loss;
}

json history_json(const nn::TrainResult& r) {
  json j;
  j["epochs_run"] = r.history.size();
  j["best_epoch"] = r.best_epoch;
  j["best_validation_loss"] = r.best_validation_loss;
  j["final_validation_loss"] = r.history.empty() ? 0.0 : r.history.back().validation_loss;
  j["early_stopped"] = r.early_stopped;
  j["diverged"] = r.diverged;
  return j;
}

void check_training(const nn::TrainResult& r, const std::string& what) {
  if (r.diverged) {
    throw NumericError(what + " training diverged after " + std::to_string(r.history.size()) +
                       " epochs");
  }
  if (r.history.empty() || !std::isfinite(r.best_validation_loss)) {
    throw NumericError(what + " training produced no finite validation loss");
  }
}

gust::Dataset load_dataset_checked(const Settings& s) {
  if (!fs::exists(s.dataset)) {
    throw IoError("dataset " + s.dataset.string() + " not found; run `generate` first");
  }
  return gust::load_dataset(s.dataset);
}

ae::Autoencoder load_autoencoder(const Settings& s, const gust::Dataset& data) {
  if (!fs::exists(s.ae_checkpoint)) {
    throw IoError("autoencoder checkpoint " + s.ae_checkpoint.string() +
                  " not found; run `train-ae` first");
  }
  ae::Autoencoder model = ae::Autoencoder::from_checkpoint(load_checkpoint(s.ae_checkpoint));
  if (model.grid_nx() != data.grid.nx || model.grid_ny() != data.grid.ny) {
    throw DataMismatchError("autoencoder grid " + std::to_string(model.grid_nx()) + "x" +
                            std::to_string(model.grid_ny()) + " does not match dataset grid " +
                            std::to_string(data.grid.nx) + "x" + std::to_string(data.grid.ny));
  }
  return model;
}

SensorEstimator load_estimator(const fs::path& path, EstimatorKind expected) {
  if (!fs::exists(path)) {
    throw IoError("estimator checkpoint " + path.string() +
                  " not found; run `train-estimator` first");
  }
  SensorEstimator est = SensorEstimator::from_checkpoint(load_checkpoint(path));
  if (est.kind() != expected) {
    throw DataMismatchError(path.string() + " holds a " +
                            (est.kind() == EstimatorKind::probabilistic ? "probabilistic"
                                                                        : "deterministic") +
                            " estimator");
  }
  if (est.input_dim() != gust::kStackedSize || est.latent_dim() != ae::kLatentDim) {
    throw DataMismatchError(path.string() + ": estimator maps " +
                            std::to_string(est.input_dim()) + " → " +
                            std::to_string(est.latent_dim()) + ", expected 33 → 3");
  }
  return est;
}

/// Undisturbed case of every angle plus its first gust case.
std::vector<int> auto_cases(const gust::Dataset& data) {
  std::vector<int> ids;
  std::set<double> gust_seen;
  for (const auto& c : data.cases) {
    if (!c.disturbed) {
      ids.push_back(c.id);
    } else if (gust_seen.insert(c.alpha_deg).second) {
      ids.push_back(c.id);
    }
  }
  return ids;
}

std::vector<int> requested_cases(const std::vector<int>& ids, const gust::Dataset& data) {
  if (ids.empty()) return auto_cases(data);
  for (int id : ids) {
    const bool found = std::any_of(data.cases.begin(), data.cases.end(),
                                   [id](const gust::FlowCase& c) { return c.id == id; });
    if (!found) throw ConfigError("requested case " + std::to_string(id) + " is not in the dataset");
  }
  return ids;
}

std::vector<double> clean_input(const gust::Dataset& data, std::uint32_t idx) {
  const auto& p = data.snapshots.at(idx).p_stacked;
  return {p.begin(), p.end()};
}

sens::GramianResult snapshot_gramian(const SensorEstimator& det, std::span<const double> base,
                                     double variance, std::size_t n_mc, Rng& rng) {
  const ad::VectorFunction f = [&det](ad::Var x) { return det.mean_on_tape(x); };
  return sens::measurement_gramian(f, base, sens::white_noise(base.size(), gust::kSensorCount, variance),
                                   n_mc, rng);
}

// Seed namespaces for the independent random streams of one run.
constexpr std::uint64_t kGramianStream = 0x6772616dULL;
constexpr std::uint64_t kNoiseStream = 0x6e6f6973ULL;
constexpr std::uint64_t kPassStream = 0x70617373ULL;
constexpr std::uint64_t kDecodeStream = 0x6465636fULL;

struct Inference {
  std::vector<double> input;
  prob::LatentDistribution aleatoric;
  prob::LatentDistribution epistemic;
  std::optional<std::array<double, gust::kSensorCount>> leading_bars;
};

using Bars = std::array<double, gust::kSensorCount>;

/// Leading-mode bars at four evenly spaced snapshots.
void write_bars_svg(const fs::path& path, int case_id, const std::vector<Bars>& bars,
                    const std::vector<double>& times) {
  SvgPlot plot(720, 360, {0.0, static_cast<double>(gust::kSensorCount) + 1.0}, {-1.0, 1.0});
  plot.title("Leading Gramian mode, case " + std::to_string(case_id));
  plot.axis_labels("sensor", "weight");
  const std::array<const char*, 4> colors{"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728"};
  std::vector<std::pair<std::string, std::string>> legend;
  for (std::size_t q = 0; q < 4; ++q) {
    const std::size_t i = q * (bars.size() - 1) / 3;
    for (std::size_t k = 0; k < gust::kSensorCount; ++k) {
      plot.bar(static_cast<double>(k + 1) - 0.3 + 0.2 * static_cast<double>(q), 0.18, bars[i][k],
               colors[q]);
    }
    legend.emplace_back("t = " + csv::num(times[i]), colors[q]);
  }
  plot.legend(legend);
  write_text_file(path.string(), plot.str());
}

}  // namespace

Context make_context(const RunConfig& config, std::uint64_t seed, std::ostream& log) {
  config.check_known(known_keys());
  Context ctx;
  ctx.config = config;
  ctx.seed = seed;
  ctx.log = &log;
  if (config.has("data_dir")) {
    ctx.root = config.get_string("data_dir", ".");
  } else if (const char* env = std::getenv("GUQ_DATA_DIR"); env && *env) {
    ctx.root = env;
  } else {
    ctx.root = fs::current_path();
  }
  return ctx;
}

void cmd_generate(const Context& ctx) {
  const Settings s = resolve(ctx);
  gust::Preset preset = gust::Preset::by_name(s.preset);
  preset.gusts_per_angle = s.gusts_per_angle;
  preset.snapshots_per_case = s.snapshots_per_case;
  const auto cases = gust::make_cases(preset, ctx.seed);
  log_line(ctx, "generate: " + std::to_string(cases.size()) + " cases x " +
                    std::to_string(preset.snapshots_per_case) + " snapshots");
  const gust::Dataset data =
      gust::build_dataset(cases, preset.snapshots_per_case, preset.grid, s.split_seed);

  if (s.dataset.has_parent_path()) fs::create_directories(s.dataset.parent_path());
  gust::save_dataset(s.dataset, data);
  {
    auto out = open_out(sibling(s.dataset, "_snapshots.csv"));
    gust::write_dataset_csv(out, data);
  }
  {
    auto out = open_out(sibling(s.dataset, "_cases.csv"));
    gust::write_cases_csv(out, data.cases);
  }
  json m = manifest_base(ctx, s, "generate");
  m["cases"] = data.cases.size();
  m["undisturbed_cases"] =
      std::count_if(data.cases.begin(), data.cases.end(), [](auto& c) { return !c.disturbed; });
  m["snapshots_per_case"] = data.snapshots_per_case;
  m["snapshots"] = data.snapshots.size();
  m["train"] = data.train.size();
  m["validation"] = data.validation.size();
  m["grid"] = {data.grid.nx, data.grid.ny};
  m["sensors"] = gust::kSensorCount;
  json cj = json::array();
  for (const auto& c : data.cases) {
    cj.push_back({{"id", c.id},
                  {"alpha_deg", c.alpha_deg},
                  {"disturbed", c.disturbed},
                  {"G", c.gust_strength},
                  {"gust_diameter", c.gust_diameter},
                  {"y_offset", c.y_offset},
                  {"x_start", c.x_start},
                  {"reynolds", c.reynolds}});
  }
  m["case_parameters"] = cj;
  write_json(sibling(s.dataset, "_manifest.json"), m);
  log_line(ctx, "generate: wrote " + s.dataset.string());
}

void cmd_train_ae(const Context& ctx) {
  const Settings s = resolve(ctx);
  const gust::Dataset data = load_dataset_checked(s);
  ae::AutoencoderConfig cfg;
  cfg.beta = s.beta;
  cfg.train.learning_rate = s.ae_learning_rate;
  cfg.train.batch_size = s.ae_batch_size;
  cfg.train.max_epochs = s.ae_max_epochs;
  cfg.train.patience = s.ae_patience;
  cfg.train.seed = ctx.seed;
  log_line(ctx, "train-ae: " + std::to_string(data.train.size()) + " train / " +
                    std::to_string(data.validation.size()) + " validation snapshots, up to " +
                    std::to_string(cfg.train.max_epochs) + " epochs");
  ae::AutoencoderTrainResult r = ae::train_autoencoder(data, cfg);
  check_training(r.history, "autoencoder");

  save_checkpoint(s.ae_checkpoint, r.model.to_checkpoint());
  write_history_csv(sibling(s.ae_checkpoint, "_history.csv"), r.history);
  {
    auto out = open_out(s.latents);
    ae::write_trajectories_csv(out, r.trajectories);
  }
  const ae::PodBaseline pod = ae::pod_baseline(data, ae::kLatentDim);
  json m = manifest_base(ctx, s, "train-ae");
  m["history"] = history_json(r.history);
  m["train_field_mse"] = ae::field_mse(r.model, data, data.train);
  m["validation_field_mse"] = ae::field_mse(r.model, data, data.validation);
  m["pod_rank3_train_mse"] = pod.train_mse;
  m["pod_rank3_validation_mse"] = pod.validation_mse;
  write_json(sibling(s.ae_checkpoint, "_manifest.json"), m);
  log_line(ctx, "train-ae: validation field MSE " + csv::num(m["validation_field_mse"]) +
                    " (rank-3 POD " + csv::num(pod.validation_mse) + ")");
}

void cmd_train_estimator(const Context& ctx) {
  const Settings s = resolve(ctx);
  const gust::Dataset data = load_dataset_checked(s);
  const ae::Autoencoder model = load_autoencoder(s, data);
  if (!fs::exists(s.latents)) {
    throw IoError("latent trajectories " + s.latents.string() + " not found; run `train-ae` first");
  }
  std::ifstream lin(s.latents, std::ios::binary);
  const auto trajs = ae::read_trajectories_csv(lin);
  const std::vector<gust::Latent> targets = ae::latents_for(data, trajs);
  if (model.latent_dim() != gust::kLatentDim) {
    throw DataMismatchError("autoencoder latent dimension does not match the estimator");
  }

  json m = manifest_base(ctx, s, "train-estimator");
  auto run = [&](EstimatorKind kind, const fs::path& path, const char* name) {
    EstimatorTrainConfig cfg;
    cfg.dropout_rate = s.dropout;
    cfg.weight_decay = s.weight_decay;
    cfg.noise_variance = kind == EstimatorKind::probabilistic ? s.train_noise_variance : 0.0;
    cfg.train.learning_rate = s.est_learning_rate;
    cfg.train.batch_size = s.est_batch_size;
    cfg.train.max_epochs = s.est_max_epochs;
    cfg.train.patience = s.est_patience;
    cfg.train.seed = mix_seed(ctx.seed ^ (kind == EstimatorKind::probabilistic ? 0x70ULL : 0x64ULL));
    log_line(ctx, std::string("train-estimator: ") + name + ", up to " +
                      std::to_string(cfg.train.max_epochs) + " epochs");
    EstimatorTrainResult r = train_estimator(data, targets, kind, cfg);
    check_training(r.history, std::string(name) + " estimator");
    if (r.estimator.input_dim() != gust::kStackedSize) {
      throw ShapeError("estimator input dimension is " + std::to_string(r.estimator.input_dim()) +
                       ", expected 33");
    }
    save_checkpoint(path, r.estimator.to_checkpoint());
    write_history_csv(sibling(path, "_history.csv"), r.history);
    json h = history_json(r.history);
    h["input_dim"] = r.estimator.input_dim();
    h["parameters"] = r.estimator.network().parameter_count();
    m[name] = h;
    log_line(ctx, std::string("train-estimator: ") + name + " best validation loss " +
                      csv::num(r.history.best_validation_loss) + " at epoch " +
                      std::to_string(r.history.best_epoch));
  };
  if (s.estimator_variant != "deterministic")
    run(EstimatorKind::probabilistic, s.estimator, "probabilistic");
  if (s.estimator_variant != "probabilistic")
    run(EstimatorKind::deterministic, s.estimator_det, "deterministic");
  write_json(sibling(s.estimator, "_manifest.json"), m);
}

void cmd_evaluate(const Context& ctx) {
  const Settings s = resolve(ctx);
  const gust::Dataset data = load_dataset_checked(s);
  const ae::Autoencoder model = load_autoencoder(s, data);
  const SensorEstimator est = load_estimator(s.estimator, EstimatorKind::probabilistic);
  const bool structured = s.eval_noise == "structured";
  std::optional<SensorEstimator> det;
  if (structured) det = load_estimator(s.estimator_det, EstimatorKind::deterministic);
  const std::vector<gust::Latent> truth = ae::encode_dataset(model, data);
  const std::vector<int> cases = requested_cases(s.eval_cases, data);
  const std::vector<bool> mask = sens::coordinate_mask();
  const gust::SensorLayout& layout = gust::default_sensor_layout();

  std::map<std::uint32_t, Inference> cache;
  auto infer = [&](std::uint32_t idx) -> const Inference& {
    auto it = cache.find(idx);
    if (it != cache.end()) return it->second;
    Inference inf;
    inf.input = clean_input(data, idx);
    Rng noise_rng = Rng::substream(ctx.seed ^ kNoiseStream, idx);
    if (structured) {
      Rng g_rng = Rng::substream(ctx.seed ^ kGramianStream, idx);
      const auto g = snapshot_gramian(*det, inf.input, s.sigma_x2, s.gramian_samples, g_rng);
      inf.leading_bars = sens::sensor_importance(g.eigenvectors, 0, layout);
      const sens::NoiseModel nm = sens::make_noise_model(g, s.gamma, s.sigma_x2, mask);
      const auto eta = sens::structured_noise(nm, noise_rng);
      for (std::size_t j = 0; j < eta.size(); ++j) inf.input[j] += eta[j];
    } else if (s.eval_noise == "white") {
      const auto eta = sens::white_noise(inf.input.size(), gust::kSensorCount, s.sigma_x2)(noise_rng);
      for (std::size_t j = 0; j < eta.size(); ++j) inf.input[j] += eta[j];
    }
    Rng pass_rng = Rng::substream(ctx.seed ^ kPassStream, idx);
    const uq::PredictiveEnsemble ens = uq::mc_predict(est, inf.input, s.passes, pass_rng);
    inf.aleatoric = uq::aleatoric_distribution(ens);
    inf.epistemic = uq::epistemic_distribution(ens);
    return cache.emplace(idx, std::move(inf)).first->second;
  };

  fs::create_directories(s.report_dir);

  // Held-out calibration over the validation split.
  std::size_t inside_alea = 0, inside_epi_total = 0;
  log_line(ctx, "evaluate: " + std::to_string(data.validation.size()) +
                    " validation snapshots, T=" + std::to_string(s.passes));
  for (auto idx : data.validation) {
    const Inference& inf = infer(idx);
    if (uq::ellipsoid_contains(inf.aleatoric, truth[idx], s.level)) ++inside_alea;
    prob::LatentDistribution total = inf.aleatoric;
    axpy(total.covariance, 1.0, inf.epistemic.covariance);
    if (uq::ellipsoid_contains(total, truth[idx], s.level)) ++inside_epi_total;
  }
  const double val_coverage =
      static_cast<double>(inside_alea) / static_cast<double>(data.validation.size());
  const double val_coverage_total =
      static_cast<double>(inside_epi_total) / static_cast<double>(data.validation.size());

  std::vector<uq::ReportRow> report;
  std::vector<double> traces;
  auto cov_out = open_out(s.report_dir / "coverage.csv");
  cov_out << "scope,case_id,snapshots,lift_band_aleatoric,lift_band_epistemic,"
             "ellipsoid_aleatoric,ellipsoid_epistemic\n";
  const std::array<std::array<std::size_t, 2>, 3> planes{{{0, 1}, {0, 2}, {1, 2}}};
  const double z2 = 2.0;
  json case_summaries = json::array();

  for (int case_id : cases) {
    log_line(ctx, "evaluate: case " + std::to_string(case_id));
    const auto rows = data.case_snapshots(case_id);
    const gust::FlowCase& fc = data.case_of(data.snapshots[rows.front()]);
    auto lift_out = open_out(s.report_dir / ("lift_case" + std::to_string(case_id) + ".csv"));
    lift_out << "time_index,t,lift_true,lift_decoded_truth,aleatoric_mean,aleatoric_2sigma,"
                "epistemic_mean,epistemic_2sigma\n";
    auto lat_out = open_out(s.report_dir / ("latent_case" + std::to_string(case_id) + ".csv"));
    {
      csv::Row h(lat_out);
      h << "time_index" << "t" << "xi1_true" << "xi2_true" << "xi3_true";
      for (const char* k : {"aleatoric", "epistemic"}) {
        h << (std::string(k) + "_xi1") << (std::string(k) + "_xi2") << (std::string(k) + "_xi3");
        for (const char* p : {"12", "13", "23"}) {
          h << (std::string(k) + "_a" + p) << (std::string(k) + "_b" + p)
            << (std::string(k) + "_angle" + p);
        }
        h << (std::string(k) + "_inside");
      }
    }
    auto field_out = open_out(s.report_dir / ("fields_case" + std::to_string(case_id) + ".csv"));
    field_out << "time_index,kind,mean_variance,max_variance,rmse_to_truth,avg_loglik\n";

    std::vector<double> ts, lift_true, a_mean, a_band, e_mean, e_band;
    std::vector<std::array<uq::EllipseSpec, 2>> ellipses12;
    std::vector<std::array<double, 2>> truth12, mean12;
    std::vector<Bars> bars;
    std::size_t band_a = 0, band_e = 0, ell_a = 0, ell_e = 0;
    for (auto idx : rows) {
      const auto& snap = data.snapshots[idx];
      const Inference& inf = infer(idx);
      std::vector<double> lat_row_vals;
      csv::Row lr(lat_out);
      lr << snap.time_index << snap.t << truth[idx][0] << truth[idx][1] << truth[idx][2];

      Matrix decoded_truth_field;
      std::vector<double> decoded_truth_lift;
      model.decode(Matrix::row_vector(truth[idx]), decoded_truth_field, decoded_truth_lift);

      std::array<uq::FieldStats, 2> stats;
      std::array<uq::EllipseSpec, 2> e12;
      for (int k = 0; k < 2; ++k) {
        const prob::LatentDistribution& dist = k == 0 ? inf.aleatoric : inf.epistemic;
        Rng dec_rng = Rng::substream(ctx.seed ^ kDecodeStream, 2 * std::uint64_t{idx} + k);
        stats[k] = uq::reconstruct_stats(dist, model, s.samples, dec_rng);
        const double ll = uq::avg_loglikelihood(stats[k], snap.vorticity);
        uq::ReportRow row;
        row.case_id = case_id;
        row.time_index = snap.time_index;
        row.kind = dist.kind;
        row.lift_mean = stats[k].lift_mean;
        row.lift_two_sigma = z2 * std::sqrt(stats[k].lift_variance);
        row.avg_loglikelihood = ll;
        report.push_back(row);
        traces.push_back(trace(dist.covariance));

        lr << dist.mean[0] << dist.mean[1] << dist.mean[2];
        for (std::size_t p = 0; p < planes.size(); ++p) {
          const uq::EllipseSpec e = uq::confidence_ellipse(dist, planes[p], s.level);
          lr << e.semi_axes[0] << e.semi_axes[1] << e.angle;
          if (p == 0) e12[k] = e;
        }
        bool inside = false;
        try {
          inside = uq::ellipsoid_contains(dist, truth[idx], s.level);
        } catch (const NumericError&) {
          inside = false;  // singular covariance: only the mean itself is inside
        }
        lr << (inside ? 1 : 0);
        if (inside) ++(k == 0 ? ell_a : ell_e);

        double mean_var = 0.0, max_var = 0.0, sq = 0.0;
        for (std::size_t p = 0; p < stats[k].mean.size(); ++p) {
          mean_var += stats[k].variance[p];
          max_var = std::max(max_var, stats[k].variance[p]);
          const double d = stats[k].mean[p] - snap.vorticity[p];
          sq += d * d;
        }
        const double npx = static_cast<double>(stats[k].mean.size());
        csv::Row(field_out) << snap.time_index << prob::to_string(dist.kind) << mean_var / npx
                            << max_var << std::sqrt(sq / npx) << ll;
      }
      const double band_a_w = z2 * std::sqrt(stats[0].lift_variance);
      const double band_e_w = z2 * std::sqrt(stats[1].lift_variance);
      if (std::abs(snap.lift - stats[0].lift_mean) <= band_a_w) ++band_a;
      if (std::abs(snap.lift - stats[1].lift_mean) <= band_e_w) ++band_e;
      csv::Row(lift_out) << snap.time_index << snap.t << snap.lift << decoded_truth_lift[0]
                         << stats[0].lift_mean << band_a_w << stats[1].lift_mean << band_e_w;

      ts.push_back(snap.t);
      lift_true.push_back(snap.lift);
      a_mean.push_back(stats[0].lift_mean);
      a_band.push_back(band_a_w);
      e_mean.push_back(stats[1].lift_mean);
      e_band.push_back(band_e_w);
      ellipses12.push_back(e12);
      truth12.push_back({truth[idx][0], truth[idx][1]});
      mean12.push_back({inf.aleatoric.mean[0], inf.aleatoric.mean[1]});
      if (inf.leading_bars) bars.push_back(*inf.leading_bars);
    }
    const double n = static_cast<double>(rows.size());
    csv::Row(cov_out) << "case" << case_id << static_cast<unsigned long>(rows.size())
                      << band_a / n << band_e / n << ell_a / n << ell_e / n;
    case_summaries.push_back({{"case_id", case_id},
                              {"alpha_deg", fc.alpha_deg},
                              {"disturbed", fc.disturbed},
                              {"lift_band_aleatoric", band_a / n},
                              {"lift_band_epistemic", band_e / n},
                              {"ellipsoid_aleatoric", ell_a / n}});

    // Lift bands.
    {
      std::vector<double> lo_a, hi_a, lo_e, hi_e;
      for (std::size_t i = 0; i < ts.size(); ++i) {
        lo_a.push_back(a_mean[i] - a_band[i]);
        hi_a.push_back(a_mean[i] + a_band[i]);
        lo_e.push_back(e_mean[i] - e_band[i]);
        hi_e.push_back(e_mean[i] + e_band[i]);
      }
      SvgPlot plot(720, 360, {ts.front(), ts.back()}, data_range({lift_true, lo_a, hi_a, lo_e, hi_e}));
      plot.title("Lift, case " + std::to_string(case_id) + " (alpha " + csv::num(fc.alpha_deg) +
                 (fc.disturbed ? ", gust)" : ")"));
      plot.axis_labels("t", "C_L");
      plot.band(ts, lo_a, hi_a, "#1f77b4", 0.25);
      plot.band(ts, lo_e, hi_e, "#d62728", 0.25);
      plot.line(ts, a_mean, "#1f77b4");
      plot.line(ts, lift_true, "#000000", 1.2, true);
      plot.legend({{"aleatoric 2 sigma", "#1f77b4"}, {"epistemic 2 sigma", "#d62728"},
                   {"truth", "#000000"}});
      write_text_file((s.report_dir / ("lift_case" + std::to_string(case_id) + ".svg")).string(),
                      plot.str());
    }
    // Ellipse overlay on the (xi1, xi2) plane.
    {
      std::vector<double> x, y, mx, my;
      for (std::size_t i = 0; i < truth12.size(); ++i) {
        x.push_back(truth12[i][0]);
        y.push_back(truth12[i][1]);
        mx.push_back(mean12[i][0]);
        my.push_back(mean12[i][1]);
      }
      auto xr = data_range({x, mx});
      auto yr = data_range({y, my});
      SvgPlot plot(480, 480, xr, yr);
      plot.title("Latent (xi1, xi2), case " + std::to_string(case_id));
      plot.axis_labels("xi1", "xi2");
      plot.line(x, y, "#000000", 1.0, true);
      const std::size_t stride = std::max<std::size_t>(1, truth12.size() / 15);
      for (std::size_t i = 0; i < truth12.size(); i += stride) {
        const auto& ea = ellipses12[i][0];
        const auto& ee = ellipses12[i][1];
        plot.ellipse(ea.center[0], ea.center[1], ea.semi_axes[0], ea.semi_axes[1], ea.angle,
                     "#1f77b4");
        plot.ellipse(ee.center[0], ee.center[1], ee.semi_axes[0], ee.semi_axes[1], ee.angle,
                     "#d62728");
        plot.point(mx[i], my[i], "#1f77b4", 1.8);
      }
      plot.legend({{"aleatoric 95%", "#1f77b4"}, {"epistemic 95%", "#d62728"},
                   {"truth", "#000000"}});
      write_text_file((s.report_dir / ("ellipses_case" + std::to_string(case_id) + ".svg")).string(),
                      plot.str());
    }
    if (bars.size() == rows.size()) {
      write_bars_svg(s.report_dir / ("importance_case" + std::to_string(case_id) + ".svg"), case_id,
                     bars, ts);
    }
  }
  csv::Row(cov_out) << "validation" << -1 << static_cast<unsigned long>(data.validation.size())
                    << "" << "" << val_coverage << "";

  uq::flag_max_uncertainty(report, traces);
  {
    auto out = open_out(s.report_dir / "report.csv");
    uq::write_report_csv(out, report);
  }
  json m = manifest_base(ctx, s, "evaluate");
  m["validation_snapshots"] = data.validation.size();
  m["validation_ellipsoid_coverage_aleatoric"] = val_coverage;
  m["validation_ellipsoid_coverage_total"] = val_coverage_total;
  m["cases"] = case_summaries;
  write_json(s.report_dir / "manifest.json", m);
  log_line(ctx, "evaluate: aleatoric 95% ellipsoid coverage on validation " +
                    csv::num(val_coverage));
}

void cmd_sensitivity(const Context& ctx) {
  const Settings s = resolve(ctx);
  const gust::Dataset data = load_dataset_checked(s);
  const SensorEstimator det = load_estimator(s.estimator_det, EstimatorKind::deterministic);
  const std::vector<int> cases = requested_cases(s.sensitivity_cases, data);
  const gust::SensorLayout& layout = gust::default_sensor_layout();
  fs::create_directories(s.sensitivity_dir);

  // Leading-mode bars of each undisturbed case, for matched-phase comparison.
  std::map<double, std::vector<Bars>> base_bars;
  struct CaseResult {
    int id;
    const gust::FlowCase* fc;
    std::vector<Bars> bars;
    std::vector<double> share;
  };
  std::vector<CaseResult> results;
  for (int case_id : cases) {
    log_line(ctx, "sensitivity: case " + std::to_string(case_id));
    const auto rows = data.case_snapshots(case_id);
    CaseResult cr{case_id, &data.case_of(data.snapshots[rows.front()]), {}, {}};
    std::vector<sens::ImportanceRow> out_rows;
    for (auto idx : rows) {
      const auto x = clean_input(data, idx);
      Rng rng = Rng::substream(ctx.seed ^ kGramianStream, idx);
      const auto g = snapshot_gramian(det, x, s.sigma_x2, s.gramian_samples, rng);
      for (std::size_t mode = 0; mode < s.sensitivity_modes; ++mode) {
        sens::ImportanceRow r;
        r.time_index = data.snapshots[idx].time_index;
        r.mode = mode;
        r.share = sens::energy_share(g.eigenvalues, mode);
        r.weights = sens::sensor_importance(g.eigenvectors, mode, layout);
        if (mode == 0) {
          cr.bars.push_back(r.weights);
          cr.share.push_back(r.share);
        }
        out_rows.push_back(r);
      }
    }
    {
      auto out = open_out(s.sensitivity_dir / ("importance_case" + std::to_string(case_id) + ".csv"));
      sens::write_importance_csv(out, out_rows);
    }
    if (!cr.fc->disturbed) base_bars[cr.fc->alpha_deg] = cr.bars;

    std::vector<double> times;
    for (auto idx : rows) times.push_back(data.snapshots[idx].t);
    write_bars_svg(s.sensitivity_dir / ("bars_case" + std::to_string(case_id) + ".svg"), case_id,
                   cr.bars, times);
    results.push_back(std::move(cr));
  }

  auto out = open_out(s.sensitivity_dir / "summary.csv");
  out << "case_id,alpha_deg,disturbed,min_leading_share,mean_leading_share,"
         "min_cosine_to_undisturbed\n";
  json summary = json::array();
  for (const auto& cr : results) {
    const double min_share = *std::min_element(cr.share.begin(), cr.share.end());
    double mean_share = 0.0;
    for (double v : cr.share) mean_share += v;
    mean_share /= static_cast<double>(cr.share.size());
    double min_cos = 1.0;
    auto base = base_bars.find(cr.fc->alpha_deg);
    const bool comparable = cr.fc->disturbed && base != base_bars.end() &&
                            base->second.size() == cr.bars.size();
    if (comparable) {
      for (std::size_t i = 0; i < cr.bars.size(); ++i)
        min_cos = std::min(min_cos, sens::cosine_similarity(cr.bars[i], base->second[i]));
    }
    csv::Row r(out);
    r << cr.id << cr.fc->alpha_deg << (cr.fc->disturbed ? 1 : 0) << min_share << mean_share;
    if (comparable) {
      r << min_cos;
    } else {
      r << "";
    }
    summary.push_back({{"case_id", cr.id},
                       {"min_leading_share", min_share},
                       {"mean_leading_share", mean_share}});
  }
  json m = manifest_base(ctx, s, "sensitivity");
  m["cases"] = summary;
  write_json(s.sensitivity_dir / "manifest.json", m);
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const IoError*>(&e) ||
      dynamic_cast<const ContractError*>(&e)) {
    return 2;
  }
  if (dynamic_cast<const DataMismatchError*>(&e) || dynamic_cast<const ShapeError*>(&e)) return 3;
  if (dynamic_cast<const NumericError*>(&e)) return 4;
  return 1;
}

int run_subcommand(const std::string& name, const std::string& config_path, std::uint64_t seed,
                   std::ostream& log) {
  try {
    const RunConfig config = config_path.empty() ? RunConfig{} : RunConfig::load(config_path);
    const Context ctx = make_context(config, seed, log);
    const auto start = std::chrono::steady_clock::now();
    if (name == "generate") {
      cmd_generate(ctx);
    } else if (name == "train-ae") {
      cmd_train_ae(ctx);
    } else if (name == "train-estimator") {
      cmd_train_estimator(ctx);
    } else if (name == "evaluate") {
      cmd_evaluate(ctx);
    } else if (name == "sensitivity") {
      cmd_sensitivity(ctx);
    } else {
      throw ConfigError("unknown subcommand '" + name + "'");
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    log << name << ": done in " << csv::num(std::round(secs * 10.0) / 10.0) << " s\n";
    return 0;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
}

}  // namespace guq::cli

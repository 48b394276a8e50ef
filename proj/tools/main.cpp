// posendf command-line front end. Every subcommand prints one JSON summary
// line on stdout; randomized subcommands require --seed.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cli_common.hpp"
#include "posendf/dataset_io.hpp"
#include "posendf/field_model.hpp"
#include "posendf/manifold.hpp"
#include "posendf/projector.hpp"
#include "posendf/tasks.hpp"
#include "posendf/trainer.hpp"

using namespace posendf;
using namespace posendf::cli;

namespace {

struct Common {
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
  std::optional<std::string> config;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool needs_out = true) {
  cmd->add_option("--seed", c.seed, "Seed for every random draw");
  cmd->add_option("--threads", c.threads, "Worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--config", c.config, "JSON config; flags override its fields")->check(CLI::ExistingFile);
  if (needs_out) cmd->add_option("--out", c.out, "Output path")->required();
}

std::uint64_t require_seed(const Common& c, const char* command) {
  if (!c.seed) throw ConfigError(std::string(command) + " requires --seed");
  return *c.seed;
}

// Projection settings shared by project, interp and sample.
struct ProjectionFlags {
  std::optional<double> alpha;
  std::optional<std::size_t> max_iters;
  std::optional<double> tol;
  std::optional<std::size_t> renorm_period;

  void add(CLI::App* cmd) {
    cmd->add_option("--alpha", alpha, "Projection step scale");
    cmd->add_option("--max-iters", max_iters, "Projection iteration budget");
    cmd->add_option("--tol", tol, "Projection stops once f < tol");
    cmd->add_option("--renorm-period", renorm_period, "Renormalize joints every N steps");
  }

  ProjectionConfig resolve(const json& config) const {
    const json s = section(config, "projection");
    ProjectionConfig p;
    p.alpha = pick(alpha, s, "alpha", p.alpha);
    p.max_iters = pick(max_iters, s, "max_iters", p.max_iters);
    p.tol = pick(tol, s, "tol", p.tol);
    p.renorm_period = pick(renorm_period, s, "renorm_period", p.renorm_period);
    p.validate();
    return p;
  }
};

json metrics_json(const ValidationMetrics& m) {
  return {
      {"manifold_mean_f", m.manifold_mean_f},
      {"negative_mae", m.negative_mae},
      {"eikonal_mean_dev", m.eikonal_mean_dev},
      {"flip_asymmetry", m.flip_asymmetry}};
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("write failed for " + path);
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  return 0.5 * (*mid + *std::max_element(v.begin(), mid));
}

// ---- gen-data ---------------------------------------------------------------

struct GenDataArgs {
  Common common;
  std::string spec;
  std::optional<std::string> skeleton;
  std::optional<std::string> report;
  std::optional<std::size_t> manifold;
  std::optional<std::size_t> per_sigma;
  std::optional<std::vector<double>> sigmas;
  std::optional<std::size_t> kprime;
  std::optional<std::size_t> k;
  std::optional<std::size_t> bins;
};

json tier_report(const PoseDataset& ds, std::size_t bins) {
  json tiers = json::object();
  for (Tier t : kAllTiers) {
    std::vector<double> labels;
    for (const auto& s : ds.samples) {
      if (s.tier == t) labels.push_back(s.distance);
    }
    json r{{"count", labels.size()}};
    if (!labels.empty()) {
      const auto [lo, hi] = std::minmax_element(labels.begin(), labels.end());
      double mean = 0.0;
      for (double d : labels) mean += d;
      mean /= static_cast<double>(labels.size());
      const double width = *hi > 0.0 ? *hi / static_cast<double>(bins) : 1.0;
      std::vector<std::size_t> hist(bins, 0);
      for (double d : labels) {
        hist[std::min(bins - 1, static_cast<std::size_t>(d / width))] += 1;
      }
      r["min"] = *lo;
      r["max"] = *hi;
      r["mean"] = mean;
      r["median"] = median(labels);
      r["histogram"] = {{"bin_width", width}, {"counts", hist}};
    }
    tiers[std::string(tier_name(t))] = r;
  }
  return tiers;
}

int cmd_gen_data(const GenDataArgs& a) {
  const std::uint64_t seed = require_seed(a.common, "gen-data");
  const json s = section(load_config(a.common.config), "data");
  const std::size_t n_manifold = pick(a.manifold, s, "manifold", std::size_t{20000});
  const std::size_t per_sigma = pick(a.per_sigma, s, "per_sigma", std::size_t{10000});
  const TierSigmas defaults;
  const std::vector<double> sigmas =
      pick(a.sigmas, s, "sigmas", std::vector<double>{defaults.far, defaults.mid, defaults.near});
  const std::size_t kprime = pick(a.kprime, s, "kprime", std::size_t{500});
  const std::size_t k = pick(a.k, s, "k", std::size_t{5});
  const std::size_t bins = pick(a.bins, s, "histogram_bins", std::size_t{20});
  if (bins == 0) throw ConfigError("histogram_bins must be positive");
  if (n_manifold == 0) throw ConfigError("gen-data needs at least one manifold pose");

  const SyntheticManifoldSpec spec = load_manifold_spec(a.spec);
  const SkeletonTopology skel =
      a.skeleton ? load_skeleton(*a.skeleton) : SkeletonTopology::binary_tree(spec.num_joints);
  if (skel.size() != spec.num_joints) throw DimensionMismatch("skeleton and manifold spec disagree on K");

  Rng manifold_rng(derive_seed(seed, 0));
  const std::vector<Pose> manifold = sample_manifold(spec, n_manifold, manifold_rng);
  Rng negative_rng(derive_seed(seed, 1));
  const std::vector<TieredPose> negatives = build_negatives(manifold, sigmas, per_sigma, negative_rng);

  std::vector<double> labels;
  if (!negatives.empty()) {
    std::vector<Pose> queries;
    queries.reserve(negatives.size());
    for (const auto& n : negatives) queries.push_back(n.pose);
    labels = KnnLabeler(manifold, skel).label_all(queries, kprime, k, a.common.threads);
  }

  PoseDataset ds;
  ds.skeleton = skel;
  ds.metadata.seed = seed;
  ds.metadata.spec_hash = manifold_spec_hash(spec);
  for (const auto& p : manifold) ds.samples.push_back({p, 0.0, Tier::manifold});
  for (std::size_t i = 0; i < negatives.size(); ++i) {
    ds.samples.push_back({negatives[i].pose, labels[i], negatives[i].tier});
  }
  ds.refresh_counts();
  ds.validate();
  save_dataset(ds, a.common.out);

  json report{
      {"dataset", a.common.out},
      {"seed", seed},
      {"num_joints", skel.size()},
      {"count", ds.samples.size()},
      {"kprime", kprime},
      {"k", k},
      {"sigmas", sigmas},
      {"tiers", tier_report(ds, bins)}};
  write_text(a.report.value_or(a.common.out + ".report.json"), report.dump(2) + "\n");
  report["command"] = "gen-data";
  print_summary(report);
  return kOk;
}

// ---- train ------------------------------------------------------------------

struct TrainArgs {
  Common common;
  std::string data;
  std::optional<std::string> history;
  std::optional<double> lr;
  std::optional<std::size_t> batch_size;
  std::optional<double> lambda_eik;
  std::optional<double> flip_prob;
  std::optional<double> validation_fraction;
  std::optional<std::size_t> batches_per_epoch;
  std::optional<double> epoch_scale;
  std::optional<std::size_t> feature_width;
  std::optional<std::size_t> encoder_hidden;
  std::optional<std::size_t> head_width;
  std::optional<std::size_t> head_layers;
  bool quiet = false;
};

void log_epoch(const EpochRecord& r, void*) {
  std::cerr << "epoch " << r.epoch << " stage " << r.stage << " l_udf " << r.udf << " l_eik " << r.eikonal
            << " val_f0 " << r.val.manifold_mean_f << " val_mae " << r.val.negative_mae << "\n";
}

int cmd_train(const TrainArgs& a) {
  const std::uint64_t seed = require_seed(a.common, "train");
  const json config = load_config(a.common.config);
  TrainingConfig cfg = training_config_from_json(section(config, "training").dump());
  if (a.lr) cfg.learning_rate = *a.lr;
  if (a.batch_size) cfg.batch_size = *a.batch_size;
  if (a.lambda_eik) cfg.lambda_eik = *a.lambda_eik;
  if (a.flip_prob) cfg.flip_prob = *a.flip_prob;
  if (a.validation_fraction) cfg.validation_fraction = *a.validation_fraction;
  if (a.batches_per_epoch) cfg.batches_per_epoch = *a.batches_per_epoch;
  if (a.epoch_scale) {
    if (!(*a.epoch_scale > 0.0)) throw ConfigError("--epoch-scale must be positive");
    for (auto& st : cfg.stages) {
      st.epochs = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(st.epochs * *a.epoch_scale)));
    }
  }
  cfg.seed = seed;
  cfg.validate();

  const PoseDataset ds = load_dataset(a.data);
  const json m = section(config, "model");
  ModelShape shape;
  shape.num_joints = ds.skeleton.size();
  shape.feature_width = pick(a.feature_width, m, "feature_width", shape.feature_width);
  shape.encoder_hidden = pick(a.encoder_hidden, m, "encoder_hidden", shape.encoder_hidden);
  shape.head_width = pick(a.head_width, m, "head_width", shape.head_width);
  shape.head_layers = pick(a.head_layers, m, "head_layers", shape.head_layers);
  FieldModel model = FieldModel::init(ds.skeleton, shape, derive_seed(seed, 0));

  const std::string history_path = a.history.value_or(a.common.out + ".history.csv");
  try {
    TrainResult r = a.quiet ? train(std::move(model), ds, cfg) : train(std::move(model), ds, cfg, log_epoch, nullptr);
    save_model(r.model, a.common.out);
    write_text(history_path, r.history.to_csv());
    json summary{
        {"command", "train"},
        {"model", a.common.out},
        {"history", history_path},
        {"parameters", r.model.num_parameters()},
        {"epochs", r.history.epochs.size()},
        {"config", json::parse(training_config_to_json(cfg))}};
    if (!r.history.epochs.empty()) summary["final"] = metrics_json(r.history.epochs.back().val);
    print_summary(summary);
  } catch (const TrainingDiverged& e) {
    save_model(e.last_good(), a.common.out);
    write_text(history_path, e.history().to_csv());
    throw;
  }
  return kOk;
}

// ---- eval -------------------------------------------------------------------

struct EvalArgs {
  Common common;
  std::string model;
  std::string data;
};

int cmd_eval(const EvalArgs& a) {
  const PoseDataset ds = load_dataset(a.data);
  const FieldModel model = load_model(a.model, ds.skeleton);
  const ValidationMetrics m = validate(model, ds);
  print_summary({{"command", "eval"}, {"count", ds.samples.size()}, {"metrics", metrics_json(m)}});
  return kOk;
}

// ---- project ----------------------------------------------------------------

struct ProjectArgs {
  Common common;
  std::string model;
  std::string poses;
  ProjectionFlags projection;
};

int cmd_project(const ProjectArgs& a) {
  const ProjectionConfig cfg = a.projection.resolve(load_config(a.common.config));
  const PoseDataset in = read_poses(a.poses);
  const FieldModel model = load_model(a.model, in.skeleton);
  const ModelField field(model);
  std::vector<Pose> poses;
  for (const auto& s : in.samples) poses.push_back(s.pose);
  const auto results = project_batch(field, poses, cfg, a.common.threads);

  std::vector<Pose> out = poses;
  std::vector<double> before, after;
  std::size_t converged = 0, failed = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    before.push_back(field.value(poses[i]));
    if (!results[i].result) {
      ++failed;
      after.push_back(before.back());
      continue;
    }
    out[i] = results[i].result->pose;
    after.push_back(results[i].result->value);
    converged += results[i].result->converged ? 1 : 0;
  }
  write_poses(a.common.out, in.skeleton, out, in.metadata.seed, &in);
  print_summary(
      {{"command", "project"},
       {"count", out.size()},
       {"converged", converged},
       {"failed", failed},
       {"median_f_before", median(before)},
       {"median_f_after", median(after)}});
  return kOk;
}

// ---- denoise ----------------------------------------------------------------

struct DenoiseArgs {
  Common common;
  std::string model;
  std::string sequence;
  std::string observations;
  std::optional<double> lambda_v;
  std::optional<double> w_prior;
  std::optional<double> lambda_t;
  std::optional<double> lr;
  std::optional<std::size_t> steps;
};

DenoiseConfig resolve_denoise(const json& config, const DenoiseArgs& a) {
  const json s = section(config, "denoise");
  DenoiseConfig d;
  d.lambda_v = pick(a.lambda_v, s, "lambda_v", d.lambda_v);
  d.w_prior = pick(a.w_prior, s, "w_prior", d.w_prior);
  d.lambda_t = pick(a.lambda_t, s, "lambda_t", d.lambda_t);
  d.lr = pick(a.lr, s, "lr", d.lr);
  d.steps = pick(a.steps, s, "steps", d.steps);
  d.validate();
  return d;
}

double mean_error(const std::vector<Pose>& frames, const std::vector<JointPositions>& obs, const SkeletonTopology& skel) {
  double sum = 0.0;
  for (std::size_t t = 0; t < frames.size(); ++t) sum += mean_joint_distance(forward_kinematics(frames[t], skel), obs[t]);
  return sum / static_cast<double>(frames.size());
}

int cmd_denoise(const DenoiseArgs& a) {
  const DenoiseConfig cfg = resolve_denoise(load_config(a.common.config), a);
  const PoseDataset in = read_poses(a.sequence);
  const FieldModel model = load_model(a.model, in.skeleton);
  const std::vector<JointPositions> obs = read_observations(a.observations);
  MotionSequence seq;
  for (std::size_t i = 0; i < in.samples.size(); ++i) {
    seq.frames.push_back(in.samples[i].pose);
    seq.indices.push_back(i);
  }
  const MotionSequence out = denoise(seq, obs, model, cfg);
  write_poses(a.common.out, in.skeleton, out.frames, in.metadata.seed, &in);
  json summary{
      {"command", "denoise"},
      {"frames", out.size()},
      {"observation_error_before", mean_error(seq.frames, obs, in.skeleton)},
      {"observation_error_after", mean_error(out.frames, obs, in.skeleton)}};
  if (out.size() >= 2) {
    const SmoothnessStats sm = smoothness(out, in.skeleton);
    summary["smoothness"] = {{"mean", sm.mean}, {"stddev", sm.stddev}};
  }
  print_summary(summary);
  return kOk;
}

// ---- fit-partial ------------------------------------------------------------

struct FitPartialArgs {
  Common common;
  std::string model;
  std::string init;
  std::size_t index = 0;
  std::string frame;
  std::vector<std::size_t> occluded;
  DenoiseArgs weights;
};

int cmd_fit_partial(const FitPartialArgs& a) {
  const std::uint64_t seed = require_seed(a.common, "fit-partial");
  const DenoiseConfig cfg = resolve_denoise(load_config(a.common.config), a.weights);
  const PoseDataset in = read_poses(a.init);
  if (a.index >= in.samples.size()) throw ConfigError("--index out of range");
  const FieldModel model = load_model(a.model, in.skeleton);
  const JointPositions obs = read_frame(a.frame);

  OcclusionMask mask{std::vector<bool>(in.skeleton.size(), true)};
  for (std::size_t j : a.occluded) {
    if (j >= mask.size()) throw ConfigError("--occluded joint " + std::to_string(j) + " out of range");
    mask.observed[j] = false;
  }
  Rng rng(derive_seed(seed, 0));
  const Pose init = occluded_initialization(in.samples[a.index].pose, mask, rng);
  const Pose fitted = fit_partial(obs, mask, init, model, cfg);
  write_poses(a.common.out, in.skeleton, {fitted}, seed);

  const JointPositions fk = forward_kinematics(fitted, in.skeleton);
  double obs_err = 0.0;
  for (std::size_t j = 0; j < mask.size(); ++j) {
    if (mask.observed[j]) obs_err += (fk[j] - obs[j]).norm();
  }
  print_summary(
      {{"command", "fit-partial"},
       {"occluded", a.occluded},
       {"observed_position_error", obs_err / static_cast<double>(mask.num_observed())},
       {"f", field_value(model, fitted.ambient())},
       {"positions", positions_to_json(fk)}});
  return kOk;
}

// ---- interp -----------------------------------------------------------------

struct InterpArgs {
  Common common;
  std::string model;
  std::string poses;
  std::size_t start = 0;
  std::size_t end = 1;
  std::optional<double> tau;
  std::optional<double> reach_tol;
  std::optional<std::size_t> max_frames;
  ProjectionFlags projection;
};

int cmd_interp(const InterpArgs& a) {
  const json config = load_config(a.common.config);
  const json s = section(config, "interpolation");
  InterpolationConfig cfg;
  cfg.tau = pick(a.tau, s, "tau", cfg.tau);
  cfg.tol = pick(a.reach_tol, s, "tol", cfg.tol);
  cfg.max_frames = pick(a.max_frames, s, "max_frames", cfg.max_frames);
  cfg.projection = a.projection.resolve(config);
  cfg.validate();

  const PoseDataset in = read_poses(a.poses);
  if (a.start >= in.samples.size() || a.end >= in.samples.size()) throw ConfigError("--start/--end out of range");
  const FieldModel model = load_model(a.model, in.skeleton);
  const ModelField field(model);
  const InterpolationResult r = interpolate(in.samples[a.start].pose, in.samples[a.end].pose, field, in.skeleton, cfg);
  write_poses(a.common.out, in.skeleton, r.sequence.frames, in.metadata.seed);

  double max_f = 0.0;
  for (const auto& f : r.sequence.frames) max_f = std::max(max_f, field.value(f));
  const SmoothnessStats sm = smoothness(r.sequence, in.skeleton);
  print_summary(
      {{"command", "interp"},
       {"frames", r.sequence.size()},
       {"converged", r.converged},
       {"max_f", max_f},
       {"smoothness", {{"mean", sm.mean}, {"stddev", sm.stddev}}}});
  return kOk;
}

// ---- sample -----------------------------------------------------------------

struct SampleArgs {
  Common common;
  std::string model;
  std::size_t n = 0;
  std::optional<std::size_t> max_attempts;
  ProjectionFlags projection;
};

int cmd_sample(const SampleArgs& a) {
  const std::uint64_t seed = require_seed(a.common, "sample");
  const json config = load_config(a.common.config);
  const ProjectionConfig cfg = a.projection.resolve(config);
  const std::size_t attempts = pick(a.max_attempts, section(config, "sampling"), "max_attempts", std::size_t{10});
  const FieldModel model = load_model(a.model);
  const ModelField field(model);
  std::vector<Pose> samples;
  try {
    samples = sample_poses(field, a.n, cfg, seed, attempts, a.common.threads);
  } catch (const SamplingError& e) {
    write_poses(a.common.out, model.skeleton(), e.partial(), seed);
    throw;
  }
  write_poses(a.common.out, model.skeleton(), samples, seed);
  double max_f = 0.0;
  for (const auto& p : samples) max_f = std::max(max_f, field.value(p));
  json summary{{"command", "sample"}, {"count", samples.size()}, {"max_f", max_f}, {"tol", cfg.tol}};
  if (samples.size() >= 2) summary["apd"] = apd(samples, model.skeleton());
  print_summary(summary);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural unsigned distance field over SO(3)^K"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Sample a synthetic manifold and label negatives");
  add_common(gen_cmd, gen.common);
  gen_cmd->add_option("--spec", gen.spec, "Manifold spec JSON")->required()->check(CLI::ExistingFile);
  gen_cmd->add_option("--skeleton", gen.skeleton, "Skeleton JSON (default: binary tree)")->check(CLI::ExistingFile);
  gen_cmd->add_option("--report", gen.report, "Report path (default: <out>.report.json)");
  gen_cmd->add_option("--manifold", gen.manifold, "Manifold pose count");
  gen_cmd->add_option("--per-sigma", gen.per_sigma, "Negatives per noise scale");
  gen_cmd->add_option("--sigmas", gen.sigmas, "Noise scales")->delimiter(',');
  gen_cmd->add_option("--kprime", gen.kprime, "Euclidean prefilter size");
  gen_cmd->add_option("--k", gen.k, "Neighbours averaged per label");
  gen_cmd->add_option("--bins", gen.bins, "Histogram bins per tier");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a field on a dataset");
  add_common(train_cmd, tr.common);
  train_cmd->add_option("--data", tr.data, "Dataset file")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--history", tr.history, "History CSV (default: <out>.history.csv)");
  train_cmd->add_option("--lr", tr.lr, "Learning rate");
  train_cmd->add_option("--batch-size", tr.batch_size, "Batch size");
  train_cmd->add_option("--lambda-eik", tr.lambda_eik, "Eikonal weight");
  train_cmd->add_option("--flip-prob", tr.flip_prob, "Per-joint sign flip probability");
  train_cmd->add_option("--validation-fraction", tr.validation_fraction, "Held-out fraction");
  train_cmd->add_option("--batches-per-epoch", tr.batches_per_epoch, "Batches per epoch (0: one pass)");
  train_cmd->add_option("--epoch-scale", tr.epoch_scale, "Multiply every stage's epoch count");
  train_cmd->add_option("--feature-width", tr.feature_width, "Per-joint feature width");
  train_cmd->add_option("--encoder-hidden", tr.encoder_hidden, "Encoder hidden width");
  train_cmd->add_option("--head-width", tr.head_width, "Distance head width");
  train_cmd->add_option("--head-layers", tr.head_layers, "Distance head layer count");
  train_cmd->add_flag("--quiet", tr.quiet, "No per-epoch progress on stderr");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Validation metrics of a model on a dataset");
  add_common(eval_cmd, ev.common, false);
  eval_cmd->add_option("--model", ev.model, "Checkpoint")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", ev.data, "Dataset file")->required()->check(CLI::ExistingFile);

  ProjectArgs pr;
  auto* project_cmd = app.add_subcommand("project", "Project poses onto the zero level set");
  add_common(project_cmd, pr.common);
  project_cmd->add_option("--model", pr.model, "Checkpoint")->required()->check(CLI::ExistingFile);
  project_cmd->add_option("--poses", pr.poses, "Pose file")->required()->check(CLI::ExistingFile);
  pr.projection.add(project_cmd);

  DenoiseArgs dn;
  auto* denoise_cmd = app.add_subcommand("denoise", "Denoise a motion sequence");
  add_common(denoise_cmd, dn.common);
  denoise_cmd->add_option("--model", dn.model, "Checkpoint")->required()->check(CLI::ExistingFile);
  denoise_cmd->add_option("--sequence", dn.sequence, "Pose file with the frames")->required()->check(CLI::ExistingFile);
  denoise_cmd->add_option("--observations", dn.observations, "JSON joint positions per frame")
      ->required()
      ->check(CLI::ExistingFile);
  auto add_weights = [](CLI::App* cmd, DenoiseArgs& w) {
    cmd->add_option("--lambda-v", w.lambda_v, "Data term weight");
    cmd->add_option("--w-prior", w.w_prior, "Prior weight");
    cmd->add_option("--lambda-t", w.lambda_t, "Temporal term weight");
    cmd->add_option("--lr", w.lr, "Optimizer step size");
    cmd->add_option("--steps", w.steps, "Optimizer steps per frame");
  };
  add_weights(denoise_cmd, dn);

  FitPartialArgs fp;
  auto* fit_cmd = app.add_subcommand("fit-partial", "Complete occluded joints of one frame");
  add_common(fit_cmd, fp.common);
  fit_cmd->add_option("--model", fp.model, "Checkpoint")->required()->check(CLI::ExistingFile);
  fit_cmd->add_option("--init", fp.init, "Pose file holding the initial pose")->required()->check(CLI::ExistingFile);
  fit_cmd->add_option("--index", fp.index, "Record index in --init");
  fit_cmd->add_option("--frame", fp.frame, "JSON joint positions")->required()->check(CLI::ExistingFile);
  fit_cmd->add_option("--occluded", fp.occluded, "Occluded joint indices")->delimiter(',')->required();
  add_weights(fit_cmd, fp.weights);

  InterpArgs ip;
  auto* interp_cmd = app.add_subcommand("interp", "Interpolate between two poses on the manifold");
  add_common(interp_cmd, ip.common);
  interp_cmd->add_option("--model", ip.model, "Checkpoint")->required()->check(CLI::ExistingFile);
  interp_cmd->add_option("--poses", ip.poses, "Pose file with the endpoints")->required()->check(CLI::ExistingFile);
  interp_cmd->add_option("--start", ip.start, "Start record index");
  interp_cmd->add_option("--end", ip.end, "End record index");
  interp_cmd->add_option("--tau", ip.tau, "Blend step toward the end pose");
  interp_cmd->add_option("--reach-tol", ip.reach_tol, "Pose distance at which the end counts as reached");
  interp_cmd->add_option("--max-frames", ip.max_frames, "Frame budget");
  ip.projection.add(interp_cmd);

  SampleArgs sm;
  auto* sample_cmd = app.add_subcommand("sample", "Project uniform random poses onto the manifold");
  add_common(sample_cmd, sm.common);
  sample_cmd->add_option("--model", sm.model, "Checkpoint")->required()->check(CLI::ExistingFile);
  sample_cmd->add_option("--n", sm.n, "Sample count")->required();
  sample_cmd->add_option("--max-attempts", sm.max_attempts, "Draws per sample before giving up");
  sm.projection.add(sample_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  try {
    if (sub == gen_cmd) return cmd_gen_data(gen);
    if (sub == train_cmd) return cmd_train(tr);
    if (sub == eval_cmd) return cmd_eval(ev);
    if (sub == project_cmd) return cmd_project(pr);
    if (sub == denoise_cmd) return cmd_denoise(dn);
    if (sub == fit_cmd) return cmd_fit_partial(fp);
    if (sub == interp_cmd) return cmd_interp(ip);
    if (sub == sample_cmd) return cmd_sample(sm);
  } catch (...) {
    return report_current_exception(name);
  }
  return kUnexpected;
}

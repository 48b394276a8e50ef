#include "posendf/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace posendf {

using nlohmann::json;

void CurriculumStage::validate() const {
  double sum = 0.0;
  for (double f : mix) {
    if (!(f >= 0.0)) throw ConfigError("curriculum stage: mix fractions must be non-negative");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("curriculum stage: mix fractions must sum to 1");
}

std::vector<CurriculumStage> TrainingConfig::default_curriculum() {
  return {
      {20, {0.5, 0.5, 0.0, 0.0}},
      {20, {0.4, 0.3, 0.3, 0.0}},
      {40, {0.3, 0.3, 0.2, 0.2}},
  };
}

void TrainingConfig::validate() const {
  for (const auto& s : stages) s.validate();
  if (batch_size == 0) throw ConfigError("training: batch_size must be positive");
  if (!(learning_rate > 0.0) || !(epsilon > 0.0)) {
    throw ConfigError("training: learning rate and epsilon must be positive");
  }
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
    throw ConfigError("training: Adam betas must lie in (0, 1)");
  }
  if (!(lambda_eik >= 0.0)) throw ConfigError("training: lambda_eik must be non-negative");
  if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) throw ConfigError("training: flip_prob must lie in [0, 1]");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("training: validation_fraction must lie in [0, 1)");
  }
}

std::string training_config_to_json(const TrainingConfig& cfg) {
  json j;
  json stages = json::array();
  for (const auto& s : cfg.stages) {
    json mix;
    for (Tier t : kAllTiers) mix[std::string(tier_name(t))] = s.mix[static_cast<std::size_t>(t)];
    stages.push_back({{"epochs", s.epochs}, {"mix", mix}});
  }
  j["stages"] = stages;
  j["batch_size"] = cfg.batch_size;
  j["learning_rate"] = cfg.learning_rate;
  j["beta1"] = cfg.beta1;
  j["beta2"] = cfg.beta2;
  j["epsilon"] = cfg.epsilon;
  j["lambda_eik"] = cfg.lambda_eik;
  j["flip_prob"] = cfg.flip_prob;
  j["seed"] = cfg.seed;
  j["validation_fraction"] = cfg.validation_fraction;
  j["batches_per_epoch"] = cfg.batches_per_epoch;
  return j.dump(2);
}

TrainingConfig training_config_from_json(const std::string& text) {
  TrainingConfig cfg;
  try {
    const json j = json::parse(text);
    if (j.contains("stages")) {
      cfg.stages.clear();
      for (const auto& js : j["stages"]) {
        CurriculumStage s;
        s.epochs = js.at("epochs").get<std::size_t>();
        for (Tier t : kAllTiers) {
          s.mix[static_cast<std::size_t>(t)] = js.at("mix").value(std::string(tier_name(t)), 0.0);
        }
        cfg.stages.push_back(s);
      }
    }
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
    cfg.beta1 = j.value("beta1", cfg.beta1);
    cfg.beta2 = j.value("beta2", cfg.beta2);
    cfg.epsilon = j.value("epsilon", cfg.epsilon);
    cfg.lambda_eik = j.value("lambda_eik", cfg.lambda_eik);
    cfg.flip_prob = j.value("flip_prob", cfg.flip_prob);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.validation_fraction = j.value("validation_fraction", cfg.validation_fraction);
    cfg.batches_per_epoch = j.value("batches_per_epoch", cfg.batches_per_epoch);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("training config json: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

void adam_step(
    std::span<double> params,
    std::span<const double> grads,
    AdamState& state,
    double lr,
    double beta1,
    double beta2,
    double eps,
    std::uint64_t t) {
  if (params.size() != grads.size()) throw DimensionMismatch("adam_step: params/grads size mismatch");
  if (t == 0) throw ConfigError("adam_step: t starts at 1");
  if (state.m.empty() && state.v.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw DimensionMismatch("adam_step: state size mismatch");
  }
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grads[i];
    state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grads[i] * grads[i];
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
  state.t = t;
}

std::vector<LabeledPose> augment_flip(std::span<const LabeledPose> batch, double flip_prob, Rng& rng) {
  if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) throw ConfigError("augment_flip: flip_prob must lie in [0, 1]");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<LabeledPose> out(batch.begin(), batch.end());
  for (auto& s : out) {
    for (std::size_t j = 0; j < s.pose.size(); ++j) {
      if (unit(rng) < flip_prob) s.pose[j] = -s.pose[j];
    }
  }
  return out;
}

ValidationMetrics validate(const FieldModel& model, std::span<const LabeledPose> heldout) {
  if (heldout.empty()) throw ConfigError("validate: held-out set is empty");
  constexpr std::size_t kBlock = 512;
  std::vector<double> f(heldout.size()), f_flip(heldout.size()), gnorm(heldout.size());
  for (std::size_t start = 0; start < heldout.size(); start += kBlock) {
    const std::size_t n = std::min(kBlock, heldout.size() - start);
    Eigen::MatrixXd x(static_cast<Eigen::Index>(4 * model.num_joints()), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) x.col(static_cast<Eigen::Index>(i)) = heldout[start + i].pose.ambient();
    const EvalTrace trace = forward_batch(model, x);
    const Eigen::MatrixXd g = input_gradient_batch(model, trace);
    const EvalTrace flipped = forward_batch(model, -x);
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = static_cast<Eigen::Index>(i);
      f[start + i] = trace.values[c];
      f_flip[start + i] = flipped.values[c];
      gnorm[start + i] = g.col(c).norm();
    }
  }
  ValidationMetrics m;
  std::size_t n_manifold = 0, n_negative = 0;
  for (std::size_t i = 0; i < heldout.size(); ++i) {
    const double d = heldout[i].distance;
    if (d == 0.0) {
      m.manifold_mean_f += f[i];
      ++n_manifold;
    } else {
      m.negative_mae += std::abs(f[i] - d);
      m.eikonal_mean_dev += std::abs(gnorm[i] - 1.0);
      ++n_negative;
    }
    m.flip_asymmetry += std::abs(f[i] - f_flip[i]);
  }
  if (n_manifold) m.manifold_mean_f /= static_cast<double>(n_manifold);
  if (n_negative) {
    m.negative_mae /= static_cast<double>(n_negative);
    m.eikonal_mean_dev /= static_cast<double>(n_negative);
  }
  m.flip_asymmetry /= static_cast<double>(heldout.size());
  return m;
}

ValidationMetrics validate(const FieldModel& model, const PoseDataset& heldout) {
  return validate(model, std::span<const LabeledPose>(heldout.samples));
}

std::string TrainingHistory::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,stage,l_udf,l_eik,val_manifold_mean_f,val_negative_mae,val_eikonal_mean_dev,"
         "val_flip_asymmetry\n";
  for (const auto& e : epochs) {
    out << e.epoch << ',' << e.stage << ',' << e.udf << ',' << e.eikonal << ','
        << e.val.manifold_mean_f << ',' << e.val.negative_mae << ',' << e.val.eikonal_mean_dev
        << ',' << e.val.flip_asymmetry << '\n';
  }
  return out.str();
}

std::vector<std::size_t> sample_batch(
    const std::array<std::vector<std::size_t>, 4>& pools,
    const std::array<double, 4>& mix,
    std::size_t batch_size,
    Rng& rng) {
  std::array<std::size_t, 4> counts{};
  std::array<double, 4> remainder{};
  std::size_t assigned = 0;
  for (std::size_t t = 0; t < 4; ++t) {
    const double exact = mix[t] * static_cast<double>(batch_size);
    counts[t] = static_cast<std::size_t>(std::floor(exact));
    remainder[t] = exact - static_cast<double>(counts[t]);
    assigned += counts[t];
  }
  while (assigned < batch_size) {
    std::size_t best = 0;
    for (std::size_t t = 1; t < 4; ++t) {
      if (remainder[t] > remainder[best]) best = t;
    }
    ++counts[best];
    remainder[best] = -1.0;
    ++assigned;
  }
  std::vector<std::size_t> out;
  out.reserve(batch_size);
  for (std::size_t t = 0; t < 4; ++t) {
    if (counts[t] == 0) continue;
    if (pools[t].empty()) {
      throw ConfigError(
          "training: curriculum needs tier '" + std::string(tier_name(static_cast<Tier>(t))) +
          "' but the dataset has none");
    }
    std::uniform_int_distribution<std::size_t> pick(0, pools[t].size() - 1);
    for (std::size_t i = 0; i < counts[t]; ++i) out.push_back(pools[t][pick(rng)]);
  }
  return out;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_holdout(
    std::size_t count, double fraction, std::uint64_t seed) {
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_val = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(count)));
  std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> tr(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(val.begin(), val.end());
  std::sort(tr.begin(), tr.end());
  return {tr, val};
}

TrainResult train(FieldModel model, const PoseDataset& dataset, const TrainingConfig& cfg) {
  return train(std::move(model), dataset, cfg, nullptr, nullptr);
}

TrainResult train(
    FieldModel model,
    const PoseDataset& dataset,
    const TrainingConfig& cfg,
    EpochCallback callback,
    void* user) {
  cfg.validate();
  if (dataset.skeleton.size() != model.num_joints()) {
    throw ShapeMismatch("train: dataset K differs from model K");
  }
  TrainResult result{std::move(model), {}};
  std::size_t total_epochs = 0;
  for (const auto& s : cfg.stages) total_epochs += s.epochs;
  if (total_epochs == 0) return result;

  const auto [train_idx, val_idx] = split_holdout(dataset.samples.size(), cfg.validation_fraction, derive_seed(cfg.seed, 1));
  std::array<std::vector<std::size_t>, 4> pools;
  for (std::size_t i : train_idx) pools[static_cast<std::size_t>(dataset.samples[i].tier)].push_back(i);
  for (const auto& s : cfg.stages) {
    if (s.epochs == 0) continue;
    for (std::size_t t = 0; t < 4; ++t) {
      if (s.mix[t] > 0.0 && pools[t].empty()) {
        throw ConfigError(
            "training: curriculum needs tier '" + std::string(tier_name(static_cast<Tier>(t))) +
            "' but the training split has none");
      }
    }
  }
  std::vector<LabeledPose> val_set;
  val_set.reserve(val_idx.size());
  for (std::size_t i : val_idx) val_set.push_back(dataset.samples[i]);

  const std::size_t batches = cfg.batches_per_epoch
      ? cfg.batches_per_epoch
      : std::max<std::size_t>(1, (train_idx.size() + cfg.batch_size - 1) / cfg.batch_size);

  Rng rng(derive_seed(cfg.seed, 2));
  AdamState adam;
  std::uint64_t step = 0;
  std::size_t epoch = 0;
  FieldModel& m = result.model;
  std::vector<LabeledPose> batch;
  ParamVector last_good;  // parameters of the last finite loss
  for (std::size_t si = 0; si < cfg.stages.size(); ++si) {
    const auto& stage = cfg.stages[si];
    for (std::size_t e = 0; e < stage.epochs; ++e) {
      EpochRecord rec;
      rec.epoch = ++epoch;
      rec.stage = si;
      double udf_sum = 0.0, eik_sum = 0.0;
      std::size_t n_samples = 0, n_eik = 0;
      for (std::size_t bi = 0; bi < batches; ++bi) {
        const auto idx = sample_batch(pools, stage.mix, cfg.batch_size, rng);
        batch.clear();
        for (std::size_t i : idx) {
          batch.push_back(dataset.samples[i]);
          ++rec.tier_counts[static_cast<std::size_t>(dataset.samples[i].tier)];
          if (dataset.samples[i].distance != 0.0) ++n_eik;
        }
        const auto augmented = augment_flip(batch, cfg.flip_prob, rng);
        LossResult loss;
        try {
          loss = loss_and_param_grads(m, augmented, cfg.lambda_eik);
        } catch (const NumericalError& err) {
          if (step > 0) m.parameters() = last_good;
          throw TrainingDiverged(
              std::string("training diverged at epoch ") + std::to_string(rec.epoch) + ": " + err.what(),
              m, result.history);
        }
        last_good = m.parameters();
        adam_step(
            m.parameters(), loss.grads, adam, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon, ++step);
        if (!std::all_of(m.parameters().begin(), m.parameters().end(), [](double p) { return std::isfinite(p); })) {
          m.parameters() = last_good;
          throw TrainingDiverged("training produced non-finite parameters", m, result.history);
        }
        udf_sum += loss.udf;
        eik_sum += loss.eikonal;
        n_samples += idx.size();
      }
      rec.udf = udf_sum / static_cast<double>(n_samples);
      rec.eikonal = n_eik ? eik_sum / static_cast<double>(n_eik) : 0.0;
      if (!val_set.empty()) rec.val = validate(m, val_set);
      result.history.epochs.push_back(rec);
      if (callback) callback(rec, user);
    }
  }
  return result;
}

}  // namespace posendf

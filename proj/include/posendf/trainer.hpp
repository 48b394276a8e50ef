#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "posendf/error.hpp"
#include "posendf/field_model.hpp"
#include "posendf/manifold.hpp"

namespace posendf {

/// Fractions of each batch drawn from the manifold / far / mid / near pools.
struct CurriculumStage {
  std::size_t epochs = 0;
  std::array<double, 4> mix{};  // indexed by Tier

  void validate() const;
};

struct TrainingConfig {
  std::vector<CurriculumStage> stages = default_curriculum();
  std::size_t batch_size = 256;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double lambda_eik = 0.1;
  double flip_prob = 0.5;
  std::uint64_t seed = 0;
  /// Fraction of the dataset held out for per-epoch validation.
  double validation_fraction = 0.05;
  /// Batches per epoch; 0 means ceil(training samples / batch_size).
  std::size_t batches_per_epoch = 0;

  void validate() const;

  /// A: 50/50 manifold/far; B: 40/30/30 manifold/far/mid;
  /// C: 30/30/20/20 manifold/far/mid/near; 20/20/40 epochs.
  static std::vector<CurriculumStage> default_curriculum();
};

std::string training_config_to_json(const TrainingConfig& cfg);
/// Missing fields keep their defaults.
TrainingConfig training_config_from_json(const std::string& text);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t t = 0;
};

/// Bias-corrected Adam update at step t (t >= 1); resizes a fresh state.
void adam_step(
    std::span<double> params,
    std::span<const double> grads,
    AdamState& state,
    double lr,
    double beta1,
    double beta2,
    double eps,
    std::uint64_t t);

/// Negates each quaternion independently with probability flip_prob.
std::vector<LabeledPose> augment_flip(std::span<const LabeledPose> batch, double flip_prob, Rng& rng);

struct ValidationMetrics {
  double manifold_mean_f = 0.0;   // mean f over d = 0
  double negative_mae = 0.0;      // mean |f - d| over d != 0
  double eikonal_mean_dev = 0.0;  // mean | |grad f| - 1 | over d != 0
  double flip_asymmetry = 0.0;    // mean |f(x) - f(-x)| over all samples
};

/// Evaluates in blocks; per-sample results are reduced in index order.
ValidationMetrics validate(const FieldModel& model, std::span<const LabeledPose> heldout);
ValidationMetrics validate(const FieldModel& model, const PoseDataset& heldout);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based over the whole run
  std::size_t stage = 0;  // 0-based stage index
  double udf = 0.0;       // mean per-sample L_udf over the epoch
  double eikonal = 0.0;   // mean per-sample L_eik over the epoch's d != 0 samples
  ValidationMetrics val;
  std::array<std::size_t, 4> tier_counts{};  // samples drawn per tier
};

struct TrainingHistory {
  std::vector<EpochRecord> epochs;

  /// Header: epoch,stage,l_udf,l_eik,val_manifold_mean_f,val_negative_mae,
  /// val_eikonal_mean_dev,val_flip_asymmetry
  std::string to_csv() const;
};

struct TrainResult {
  FieldModel model;
  TrainingHistory history;
};

/// Thrown when a loss or update turns non-finite; carries the parameters of
/// the last step with a finite loss and the history so far.
class TrainingDiverged : public NumericalError {
 public:
  TrainingDiverged(const std::string& what, FieldModel last_good, TrainingHistory history)
      : NumericalError(what), last_good_(std::move(last_good)), history_(std::move(history)) {}
  const FieldModel& last_good() const { return last_good_; }
  const TrainingHistory& history() const { return history_; }

 private:
  FieldModel last_good_;
  TrainingHistory history_;
};

/// Draws per-tier sample counts for one batch (largest-remainder rounding
/// of mix * batch_size) and then pool indices uniformly with replacement.
std::vector<std::size_t> sample_batch(
    const std::array<std::vector<std::size_t>, 4>& pools,
    const std::array<double, 4>& mix,
    std::size_t batch_size,
    Rng& rng);

/// Splits `samples` into (train, validation) index lists by a seeded
/// permutation.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_holdout(
    std::size_t count, double fraction, std::uint64_t seed);

/// Curriculum training. Stages run in order; each batch is drawn according
/// to the active stage's mix, sign-flip augmented, and used for one Adam
/// step on L_udf + lambda_eik * L_eik. Validation runs at the end of every
/// epoch on the held-out split. Throws ConfigError when a stage needs a tier
/// the training split lacks.
TrainResult train(FieldModel model, const PoseDataset& dataset, const TrainingConfig& cfg);

/// Optional per-epoch callback for progress reporting.
using EpochCallback = void (*)(const EpochRecord&, void*);
TrainResult train(
    FieldModel model,
    const PoseDataset& dataset,
    const TrainingConfig& cfg,
    EpochCallback callback,
    void* user);

}  // namespace posendf

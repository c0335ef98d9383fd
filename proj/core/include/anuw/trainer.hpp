#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "anuw/dataset.hpp"
#include "anuw/network.hpp"
#include "anuw/objective.hpp"
#include "anuw/optimizer.hpp"
#include "anuw/soft_label.hpp"

namespace anuw {

/// Whether the polynomial learning-rate decay advances per epoch or per
/// optimizer step.
enum class LrGranularity { epoch, step };

struct TrainConfig {
  ModelConfig model;  // attention toggles are overridden by `ablation`
  LossWeights loss;
  SsimOptions ssim;
  AbsRelDenominator absrel_denominator = AbsRelDenominator::prediction;
  double learning_rate = 1e-4;
  AdamConfig adam;
  std::size_t batch_size = 1;
  std::size_t max_epochs = 100;
  double poly_decay_power = 1.5;
  LrGranularity lr_granularity = LrGranularity::epoch;
  std::uint64_t seed = 0;
  Ablation ablation = Ablation::D;
  SoftLabelGranularity softlabel_granularity = SoftLabelGranularity::epoch;
  /// Evaluate on the training set after every epoch (fills the metric
  /// columns of the report; NaN otherwise).
  bool epoch_metrics = true;
  /// Write a checkpoint every N epochs into checkpoint_dir (0 = only when
  /// stopping early).
  std::size_t checkpoint_every = 0;
  std::filesystem::path checkpoint_dir;
  /// Stop (and checkpoint) once this many epochs are complete; 0 = run to
  /// max_epochs.
  std::size_t stop_after = 0;

  bool softlabels_enabled() const { return ablation == Ablation::E; }
  ModelConfig effective_model() const { return ablation_variant(model, ablation); }
  /// Throws ConfigError on unusable values.
  void validate() const;
};

/// Learning rate for epoch `epoch` (0-based) under the configured schedule;
/// with step granularity `step` is the global step index.
double lr_schedule(const TrainConfig& cfg, std::size_t epoch, std::size_t step = 0,
                   std::size_t steps_per_epoch = 1);

struct ReportRow {
  std::size_t epoch = 0;  // 1-based: number of completed epochs
  double mean_loss = 0.0;
  double abs_rel = 0.0;
  double ssim = 0.0;
  double si_rmse = 0.0;
  double lr = 0.0;
  bool softlabel_accepted = false;

  friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

struct RunReport {
  std::vector<ReportRow> rows;
  /// Loss of every optimizer step, in order.
  std::vector<double> step_losses;

  friend bool operator==(const RunReport&, const RunReport&) = default;
};

void write_report_csv(std::ostream& out, const RunReport& report);

/// One training item; `valid` selects the label pixels used by the loss.
struct TrainItem {
  const Tensor* rgb;
  const Tensor* label;
  const PixelMask* valid;
};

/// Forward, mask-aware loss averaged over the batch, backward and one Adam
/// step. Returns the batch loss; throws NumericError (before touching the
/// parameters) if it is not finite.
double train_batch(AnuModel& model, AdamState& adam, std::span<const TrainItem> batch, double lr,
                   const TrainConfig& cfg);

/// Seeded permutation of [0, n) keyed by (seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch);

struct TrainResult {
  AnuModel model;
  RunReport report;
  AdamState adam;
  std::size_t epochs_done = 0;
  std::optional<SoftLabelState> softlabels;
};

using EpochCallback = std::function<void(const ReportRow&)>;

/// Full training run. If `resume` is set, continues from the checkpoint
/// written by an earlier run with the same config (checkpoint.anuw and,
/// for ablation E, softlabels.anuw in that directory).
TrainResult train(const TrainConfig& cfg, const std::vector<SamplePair>& data,
                  const std::optional<std::filesystem::path>& resume = std::nullopt,
                  const EpochCallback& on_epoch = {});

/// Checkpoint file names inside a checkpoint directory.
inline constexpr const char* kCheckpointFile = "checkpoint.anuw";
inline constexpr const char* kSoftLabelFile = "softlabels.anuw";

struct EvalReport {
  /// Against the labels, on valid (nonzero) pixels.
  MetricReport labels;
  /// Synthetic data only: against the true depth on every pixel.
  std::optional<MetricReport> true_depth;
  /// Synthetic data only: against the true depth on the zeroed label pixels.
  /// SSIM is NaN when no full window fits inside the region.
  std::optional<MetricReport> masked_region;
};

/// Per-image metrics averaged over the dataset.
EvalReport evaluate(AnuModel& model, const std::vector<SamplePair>& data,
                    const SsimOptions& ssim = {},
                    AbsRelDenominator denom = AbsRelDenominator::prediction);

struct AblationResult {
  std::array<RunReport, 5> reports;
  std::array<EvalReport, 5> evals;
};

/// Trains A..E with the same seed and data.
AblationResult ablation_run(const TrainConfig& cfg, const std::vector<SamplePair>& data,
                            const EpochCallback& on_epoch = {});

/// Table layout: one column per configuration A..E; rows AWCA, PSNL and
/// SoftLabels (yes/no), then Si-RMSE, AbsRel and SSIM.
void write_ablation_csv(std::ostream& out, const AblationResult& result);

}  // namespace anuw

#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "anuw/tensor.hpp"
#include "anuw/tensor_archive.hpp"

// Weakly-supervised label correction: pixels whose original label is the
// invalid sentinel 0 are masked; whenever the training loss improves, the
// masked pixels of every label are overwritten with the model's current
// prediction and take part in the loss from then on.

namespace anuw {

enum class LabelDecision { accept, reject };

/// How often the accept/reject decision is taken.
enum class SoftLabelGranularity { epoch, step };

/// Bit set exactly where `original_label` == 0.
PixelMask build_mask(const Tensor& original_label);

/// prediction where mask is set, current_label elsewhere. `prediction` may
/// be H x W or 1 x H x W.
Tensor apply_soft_labels(const Tensor& current_label, const Tensor& prediction,
                         const PixelMask& mask);

struct SoftLabelState {
  std::vector<std::string> ids;
  std::vector<Tensor> labels;      // current labels (H x W)
  std::vector<PixelMask> masks;    // from the original labels, never recomputed
  std::size_t epoch = 0;           // decisions taken so far
  /// Reference loss for the next decision: the lowest mean loss seen so far.
  std::optional<double> previous_loss;
  std::optional<double> last_loss;
  std::vector<double> accepted_losses;

  static SoftLabelState init(std::vector<std::string> ids, std::vector<Tensor> original_labels);

  std::size_t accepted() const noexcept { return accepted_losses.size(); }
  bool soft_labels_active() const noexcept { return !accepted_losses.empty(); }

  /// Pixels that enter the loss for `sample`: only trusted ones until the
  /// first accept, all of them afterwards.
  PixelMask loss_mask(std::size_t sample) const;

  /// Labels, masks and decision history ("softlabel/<id>", "mask/<id>",
  /// "softlabel_state/*").
  TensorArchive snapshot() const;
  static SoftLabelState restore(const TensorArchive& archive);
};

/// Accepts iff `mean_loss` is strictly below state.previous_loss. The first
/// decision (no reference yet) always rejects. The loss is recorded either
/// way. Throws NumericError on a non-finite loss.
LabelDecision update_policy(SoftLabelState& state, double mean_loss);

/// Trains on the given samples and returns the batch loss.
using TrainStepFn = std::function<double(std::span<const std::size_t> batch)>;
/// Prediction for one sample, computed without gradient.
using PredictFn = std::function<Tensor(std::size_t sample)>;

struct SoftLabelEpoch {
  double mean_loss = 0.0;
  /// Epoch granularity: the single decision. Step granularity: accept if any
  /// step accepted.
  LabelDecision decision = LabelDecision::reject;
};

/// One pass over `batches`, then (epoch granularity) a prediction pass over
/// every sample, update_policy, and a label refresh on accept. With step
/// granularity the decision is taken after every batch and only the batch's
/// samples are refreshed.
SoftLabelEpoch softlabel_epoch(SoftLabelState& state,
                               std::span<const std::vector<std::size_t>> batches,
                               const TrainStepFn& train_step, const PredictFn& predict,
                               SoftLabelGranularity granularity = SoftLabelGranularity::epoch);

}  // namespace anuw

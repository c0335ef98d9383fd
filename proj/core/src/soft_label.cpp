#include "anuw/soft_label.hpp"

#include <cmath>

namespace anuw {

PixelMask build_mask(const Tensor& original_label) {
  if (original_label.rank() != 2) {
    throw ShapeError("build_mask: expected H x W label, got " + to_string(original_label.shape()));
  }
  PixelMask m(original_label.dim(0), original_label.dim(1));
  for (std::size_t i = 0; i < original_label.size(); ++i) m.set(i, original_label[i] == 0.0);
  return m;
}

Tensor apply_soft_labels(const Tensor& current_label, const Tensor& prediction,
                         const PixelMask& mask) {
  if (current_label.rank() != 2 || prediction.size() != current_label.size() ||
      mask.height() != current_label.dim(0) || mask.width() != current_label.dim(1)) {
    throw ShapeError("apply_soft_labels: label " + to_string(current_label.shape()) +
                     ", prediction " + to_string(prediction.shape()) + " and mask " +
                     std::to_string(mask.height()) + " x " + std::to_string(mask.width()) +
                     " disagree");
  }
  Tensor out = current_label;
  for (std::size_t i = 0; i < out.size(); ++i)
    if (mask[i]) out[i] = prediction[i];
  return out;
}

SoftLabelState SoftLabelState::init(std::vector<std::string> ids,
                                    std::vector<Tensor> original_labels) {
  if (ids.size() != original_labels.size()) {
    throw ShapeError("soft labels: " + std::to_string(ids.size()) + " ids for " +
                     std::to_string(original_labels.size()) + " labels");
  }
  SoftLabelState s;
  s.ids = std::move(ids);
  s.masks.reserve(original_labels.size());
  for (const auto& l : original_labels) s.masks.push_back(build_mask(l));
  s.labels = std::move(original_labels);
  return s;
}

PixelMask SoftLabelState::loss_mask(std::size_t sample) const {
  const PixelMask& m = masks.at(sample);
  if (soft_labels_active()) return PixelMask(m.height(), m.width(), true);
  return m.complement();
}

LabelDecision update_policy(SoftLabelState& state, double mean_loss) {
  if (!std::isfinite(mean_loss)) {
    throw NumericError("soft-label update: non-finite mean loss after " +
                       std::to_string(state.epoch) + " decisions");
  }
  LabelDecision d = LabelDecision::reject;
  if (state.previous_loss && mean_loss < *state.previous_loss) d = LabelDecision::accept;
  state.epoch += 1;
  state.last_loss = mean_loss;
  if (!state.previous_loss || mean_loss < *state.previous_loss) state.previous_loss = mean_loss;
  if (d == LabelDecision::accept) state.accepted_losses.push_back(mean_loss);
  return d;
}

SoftLabelEpoch softlabel_epoch(SoftLabelState& state,
                               std::span<const std::vector<std::size_t>> batches,
                               const TrainStepFn& train_step, const PredictFn& predict,
                               SoftLabelGranularity granularity) {
  SoftLabelEpoch out;
  double total = 0.0;
  for (const auto& batch : batches) {
    const double loss = train_step(batch);
    if (!std::isfinite(loss)) throw NumericError("soft-label epoch: non-finite training loss");
    total += loss;
    if (granularity == SoftLabelGranularity::step &&
        update_policy(state, loss) == LabelDecision::accept) {
      out.decision = LabelDecision::accept;
      for (auto s : batch) {
        state.labels[s] = apply_soft_labels(state.labels[s], predict(s), state.masks[s]);
      }
    }
  }
  out.mean_loss = batches.empty() ? 0.0 : total / static_cast<double>(batches.size());
  if (granularity == SoftLabelGranularity::epoch) {
    out.decision = update_policy(state, out.mean_loss);
    if (out.decision == LabelDecision::accept) {
      for (std::size_t s = 0; s < state.labels.size(); ++s) {
        state.labels[s] = apply_soft_labels(state.labels[s], predict(s), state.masks[s]);
      }
    }
  }
  return out;
}

TensorArchive SoftLabelState::snapshot() const {
  TensorArchive a;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    a.add("softlabel/" + ids[i], labels[i]);
    a.add("mask/" + ids[i], masks[i].to_tensor());
  }
  a.add("softlabel_state/epoch", Tensor::scalar(static_cast<double>(epoch)));
  if (previous_loss) a.add("softlabel_state/previous_loss", Tensor::scalar(*previous_loss));
  if (last_loss) a.add("softlabel_state/last_loss", Tensor::scalar(*last_loss));
  a.add("softlabel_state/accepted_losses",
        Tensor({accepted_losses.size()}, accepted_losses));
  return a;
}

SoftLabelState SoftLabelState::restore(const TensorArchive& archive) {
  SoftLabelState s;
  const std::string label_prefix = "softlabel/";
  for (const auto& [name, t] : archive.entries()) {
    if (name.rfind(label_prefix, 0) != 0) continue;
    std::string id = name.substr(label_prefix.size());
    s.masks.push_back(PixelMask::from_tensor(archive.at("mask/" + id)));
    s.labels.push_back(t);
    s.ids.push_back(std::move(id));
  }
  s.epoch = static_cast<std::size_t>(archive.scalar("softlabel_state/epoch"));
  if (archive.contains("softlabel_state/previous_loss"))
    s.previous_loss = archive.scalar("softlabel_state/previous_loss");
  if (archive.contains("softlabel_state/last_loss"))
    s.last_loss = archive.scalar("softlabel_state/last_loss");
  const Tensor& acc = archive.at("softlabel_state/accepted_losses");
  s.accepted_losses.assign(acc.values().begin(), acc.values().end());
  return s;
}

}  // namespace anuw

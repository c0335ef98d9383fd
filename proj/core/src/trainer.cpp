#include "anuw/trainer.hpp"

#include <cmath>
#include <limits>
#include <ostream>
#include <random>

namespace anuw {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
  effective_model().validate();
  if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be non-negative");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (max_epochs == 0) throw ConfigError("max_epochs must be positive");
  if (!(poly_decay_power >= 0.0)) throw ConfigError("poly_decay_power must be non-negative");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(adam.eps > 0.0)) throw ConfigError("adam_eps must be positive");
  if (ssim.window == 0) throw ConfigError("ssim window must be positive");
  if (!(ssim.dynamic_range > 0.0)) throw ConfigError("ssim dynamic range must be positive");
}

double lr_schedule(const TrainConfig& cfg, std::size_t epoch, std::size_t step,
                   std::size_t steps_per_epoch) {
  if (cfg.lr_granularity == LrGranularity::epoch) {
    return poly_lr(cfg.learning_rate, static_cast<double>(epoch),
                   static_cast<double>(cfg.max_epochs), cfg.poly_decay_power);
  }
  return poly_lr(cfg.learning_rate, static_cast<double>(step),
                 static_cast<double>(cfg.max_epochs * steps_per_epoch), cfg.poly_decay_power);
}

void write_report_csv(std::ostream& out, const RunReport& report) {
  out << "epoch,mean_loss,abs_rel,ssim,si_rmse,lr,softlabel_accepted\n";
  const auto old_precision = out.precision(std::numeric_limits<double>::max_digits10);
  for (const auto& r : report.rows) {
    out << r.epoch << ',' << r.mean_loss << ',' << r.abs_rel << ',' << r.ssim << ','
        << r.si_rmse << ',' << r.lr << ',' << (r.softlabel_accepted ? 1 : 0) << '\n';
  }
  out.precision(old_precision);
}

double train_batch(AnuModel& model, AdamState& adam, std::span<const TrainItem> batch, double lr,
                   const TrainConfig& cfg) {
  if (batch.empty()) throw ConfigError("train_batch: empty batch");
  model.zero_grad();
  Tape tape;
  Var total;
  for (const auto& item : batch) {
    Var pred = model.forward(tape, *item.rgb);
    Var loss = total_loss(pred, *item.label, cfg.loss, cfg.ssim, *item.valid);
    total = total.valid() ? add(total, loss) : loss;
  }
  if (batch.size() > 1) total = affine(total, 1.0 / static_cast<double>(batch.size()));
  const double value = total.value()[0];
  if (!std::isfinite(value)) throw NumericError("training loss is not finite");
  tape.backward(total);
  const auto params = model.parameters();
  adam_step(params, adam, lr, cfg.adam);
  return value;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 engine(seed ^ (0xD1B54A32D192ED03ULL * (epoch + 1)));
  // Fisher-Yates on raw engine output, independent of library distributions.
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(engine() % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

namespace {

constexpr std::size_t kRowFields = 7;

void save_checkpoint(const fs::path& dir, const AnuModel& model, const AdamState& adam,
                     const RunReport& report, std::size_t epochs_done,
                     const std::optional<SoftLabelState>& softlabels) {
  fs::create_directories(dir);
  TensorArchive a = model.save();
  adam.write(a);
  a.set("train/epochs_done", Tensor::scalar(static_cast<double>(epochs_done)));
  Tensor rows({report.rows.size(), kRowFields});
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    const auto& r = report.rows[i];
    const double vals[kRowFields] = {static_cast<double>(r.epoch), r.mean_loss, r.abs_rel,
                                     r.ssim, r.si_rmse, r.lr, r.softlabel_accepted ? 1.0 : 0.0};
    for (std::size_t k = 0; k < kRowFields; ++k) rows.at(i, k) = vals[k];
  }
  a.set("train/report", std::move(rows));
  a.set("train/step_losses", Tensor({report.step_losses.size()}, report.step_losses));
  // Soft labels first: a checkpoint never points at a newer snapshot.
  if (softlabels) softlabels->snapshot().save(dir / kSoftLabelFile);
  a.save(dir / kCheckpointFile);
}

RunReport read_report(const TensorArchive& a) {
  RunReport report;
  const Tensor& rows = a.at("train/report");
  if (rows.rank() != 2 || rows.dim(1) != kRowFields) {
    throw DataError("checkpoint: malformed train/report entry " + to_string(rows.shape()));
  }
  for (std::size_t i = 0; i < rows.dim(0); ++i) {
    ReportRow r;
    r.epoch = static_cast<std::size_t>(rows.at(i, 0));
    r.mean_loss = rows.at(i, 1);
    r.abs_rel = rows.at(i, 2);
    r.ssim = rows.at(i, 3);
    r.si_rmse = rows.at(i, 4);
    r.lr = rows.at(i, 5);
    r.softlabel_accepted = rows.at(i, 6) != 0.0;
    report.rows.push_back(r);
  }
  const Tensor& steps = a.at("train/step_losses");
  report.step_losses.assign(steps.values().begin(), steps.values().end());
  return report;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const std::vector<SamplePair>& data,
                  const std::optional<fs::path>& resume, const EpochCallback& on_epoch) {
  cfg.validate();
  if (data.empty()) throw DataError("train: no training samples");
  const ModelConfig mcfg = cfg.effective_model();
  for (const auto& s : data) {
    if (s.height() % mcfg.size_multiple() != 0 || s.width() % mcfg.size_multiple() != 0) {
      throw ShapeError("train: sample '" + s.id + "' is " + std::to_string(s.height()) + " x " +
                       std::to_string(s.width()) + ", not a multiple of " +
                       std::to_string(mcfg.size_multiple()));
    }
  }

  TrainResult res{AnuModel(mcfg, cfg.seed), {}, {}, 0, std::nullopt};
  std::vector<PixelMask> valid_masks;
  for (const auto& s : data) valid_masks.push_back(build_mask(s.label).complement());
  if (cfg.softlabels_enabled()) {
    std::vector<std::string> ids;
    std::vector<Tensor> labels;
    for (const auto& s : data) {
      ids.push_back(s.id);
      labels.push_back(s.label);
    }
    res.softlabels = SoftLabelState::init(std::move(ids), std::move(labels));
  }

  if (resume) {
    const TensorArchive a = TensorArchive::load(*resume / kCheckpointFile);
    if (read_config(a) != mcfg) {
      throw ConfigError("resume: checkpoint topology does not match the configuration");
    }
    res.model = AnuModel::load(a);
    res.adam = AdamState::read(a);
    res.report = read_report(a);
    res.epochs_done = static_cast<std::size_t>(a.scalar("train/epochs_done"));
    if (res.softlabels) {
      SoftLabelState s = SoftLabelState::restore(TensorArchive::load(*resume / kSoftLabelFile));
      if (s.ids != res.softlabels->ids) {
        throw DataError("resume: soft-label snapshot does not match the training data");
      }
      res.softlabels = std::move(s);
    }
  }

  const std::size_t steps_per_epoch = (data.size() + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t last_epoch =
      cfg.stop_after > 0 ? std::min(cfg.stop_after, cfg.max_epochs) : cfg.max_epochs;
  std::size_t global_step = res.epochs_done * steps_per_epoch;

  while (res.epochs_done < last_epoch) {
    const std::size_t epoch = res.epochs_done;
    const std::vector<std::size_t> order = epoch_order(data.size(), cfg.seed, epoch);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      batches.emplace_back(order.begin() + b,
                           order.begin() + std::min(order.size(), b + cfg.batch_size));
    }
    const double epoch_lr = lr_schedule(cfg, epoch, global_step, steps_per_epoch);

    // Loss masks for soft-label runs are refreshed per batch since the
    // first accept switches them from trusted pixels to all pixels.
    std::vector<PixelMask> batch_masks;
    auto step = [&](std::span<const std::size_t> batch) {
      std::vector<TrainItem> items;
      batch_masks.clear();
      batch_masks.reserve(batch.size());
      for (std::size_t s : batch) {
        if (res.softlabels) {
          batch_masks.push_back(res.softlabels->loss_mask(s));
          items.push_back({&data[s].rgb, &res.softlabels->labels[s], &batch_masks.back()});
        } else {
          items.push_back({&data[s].rgb, &data[s].label, &valid_masks[s]});
        }
      }
      const double lr = lr_schedule(cfg, epoch, global_step, steps_per_epoch);
      const double loss = train_batch(res.model, res.adam, items, lr, cfg);
      ++global_step;
      res.report.step_losses.push_back(loss);
      return loss;
    };

    ReportRow row;
    row.epoch = epoch + 1;
    row.lr = epoch_lr;
    if (res.softlabels) {
      auto predict = [&](std::size_t s) { return res.model.predict(data[s].rgb); };
      const SoftLabelEpoch out =
          softlabel_epoch(*res.softlabels, batches, step, predict, cfg.softlabel_granularity);
      row.mean_loss = out.mean_loss;
      row.softlabel_accepted = out.decision == LabelDecision::accept;
    } else {
      double total = 0.0;
      for (const auto& b : batches) total += step(b);
      row.mean_loss = total / static_cast<double>(batches.size());
    }
    if (cfg.epoch_metrics) {
      const MetricReport m = evaluate(res.model, data, cfg.ssim, cfg.absrel_denominator).labels;
      row.abs_rel = m.abs_rel;
      row.ssim = m.ssim;
      row.si_rmse = m.si_rmse;
    } else {
      row.abs_rel = row.ssim = row.si_rmse = std::numeric_limits<double>::quiet_NaN();
    }
    res.report.rows.push_back(row);
    res.epochs_done = epoch + 1;
    if (on_epoch) on_epoch(row);

    const bool stopping_early = res.epochs_done == last_epoch && last_epoch < cfg.max_epochs;
    const bool cadence = cfg.checkpoint_every > 0 && res.epochs_done % cfg.checkpoint_every == 0;
    if (!cfg.checkpoint_dir.empty() && (cadence || stopping_early)) {
      save_checkpoint(cfg.checkpoint_dir, res.model, res.adam, res.report, res.epochs_done,
                      res.softlabels);
    }
  }
  return res;
}

namespace {

struct MetricSums {
  double abs_rel = 0.0, ssim = 0.0, si_rmse = 0.0;
  std::size_t pixels = 0, images = 0, ssim_images = 0;

  void add(const MetricReport& m) {
    abs_rel += m.abs_rel;
    // images without an SSIM window are left out of the SSIM mean
    if (!std::isnan(m.ssim)) {
      ssim += m.ssim;
      ++ssim_images;
    }
    si_rmse += m.si_rmse;
    pixels += m.pixel_count;
    images += 1;
  }
  MetricReport mean() const {
    const double n = static_cast<double>(images);
    const double s = ssim_images ? ssim / static_cast<double>(ssim_images)
                                 : std::numeric_limits<double>::quiet_NaN();
    return {abs_rel / n, s, si_rmse / n, pixels};
  }
};

}  // namespace

EvalReport evaluate(AnuModel& model, const std::vector<SamplePair>& data, const SsimOptions& ssim,
                    AbsRelDenominator denom) {
  if (data.empty()) throw DataError("evaluate: no samples");
  MetricSums labels, truth, masked;
  bool all_synthetic = true;
  for (const auto& s : data) all_synthetic = all_synthetic && s.true_depth.has_value();

  for (const auto& s : data) {
    const Tensor pred = model.predict(s.rgb);
    if (!pred.all_finite()) throw NumericError("evaluate: non-finite prediction for '" + s.id + "'");
    const PixelMask invalid = build_mask(s.label);
    labels.add(evaluate_metrics(s.label, pred, invalid.complement(), ssim, denom));
    if (!all_synthetic) continue;
    const PixelMask everything(s.height(), s.width(), true);
    truth.add(evaluate_metrics(*s.true_depth, pred, everything, ssim, denom));
    if (invalid.count() == 0) continue;
    MetricReport m;
    m.abs_rel = abs_rel(*s.true_depth, pred, invalid, denom);
    m.si_rmse = si_rmse(*s.true_depth, pred, invalid);
    m.ssim = has_ssim_window(invalid, ssim) ? anuw::ssim(*s.true_depth, pred, ssim, invalid)
                                            : std::numeric_limits<double>::quiet_NaN();
    m.pixel_count = invalid.count();
    masked.add(m);
  }
  EvalReport r;
  r.labels = labels.mean();
  if (all_synthetic) {
    r.true_depth = truth.mean();
    if (masked.images > 0) r.masked_region = masked.mean();
  }
  return r;
}

AblationResult ablation_run(const TrainConfig& cfg, const std::vector<SamplePair>& data,
                            const EpochCallback& on_epoch) {
  AblationResult out;
  for (int k = 0; k < 5; ++k) {
    TrainConfig run = cfg;
    run.ablation = static_cast<Ablation>(k);
    run.checkpoint_dir.clear();
    run.stop_after = 0;
    TrainResult r = train(run, data, std::nullopt, on_epoch);
    out.evals[k] = evaluate(r.model, data, cfg.ssim, cfg.absrel_denominator);
    out.reports[k] = std::move(r.report);
  }
  return out;
}

void write_ablation_csv(std::ostream& out, const AblationResult& result) {
  out << "row,A,B,C,D,E\n";
  auto flags = [&](const char* name, auto pred) {
    out << name;
    for (int k = 0; k < 5; ++k) out << ',' << (pred(static_cast<Ablation>(k)) ? "yes" : "no");
    out << '\n';
  };
  flags("AWCA", [](Ablation a) { return ablation_variant({}, a).enable_awca; });
  flags("PSNL", [](Ablation a) { return ablation_variant({}, a).enable_psnl; });
  flags("SoftLabels", [](Ablation a) { return a == Ablation::E; });
  const auto old_precision = out.precision(6);
  auto metric = [&](const char* name, double MetricReport::*field) {
    out << name;
    for (const auto& e : result.evals) out << ',' << e.labels.*field;
    out << '\n';
  };
  metric("Si-RMSE", &MetricReport::si_rmse);
  metric("AbsRel", &MetricReport::abs_rel);
  metric("SSIM", &MetricReport::ssim);
  out.precision(old_precision);
}

}  // namespace anuw

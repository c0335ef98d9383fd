// anuw: train, evaluate and run the depth model from the command line.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "anuw/config_file.hpp"
#include "anuw/dataset.hpp"
#include "anuw/png_io.hpp"
#include "anuw/trainer.hpp"

namespace fs = std::filesystem;
using namespace anuw;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

struct CommonOptions {
  std::string data;
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::string ablation;
  bool ssim_global = false;
  bool absrel_gt = false;
  std::string softlabel_granularity;
};

void add_overrides(CLI::App* cmd, CommonOptions& o, bool training) {
  cmd->add_option("--config", o.config, "key = value config file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "random seed");
  cmd->add_flag("--ssim-global", o.ssim_global, "one SSIM window over all valid pixels");
  cmd->add_flag("--absrel-gt-denominator", o.absrel_gt, "divide Abs Rel by the label");
  if (!training) return;
  cmd->add_option("--epochs", o.epochs, "maximum epochs");
  cmd->add_option("--softlabel-granularity", o.softlabel_granularity, "epoch or step")
      ->check(CLI::IsMember({"epoch", "step"}));
}

TrainConfig build_config(const CommonOptions& o) {
  TrainConfig cfg;
  if (!o.config.empty()) cfg = load_train_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (o.epochs) cfg.max_epochs = *o.epochs;
  if (!o.ablation.empty()) cfg.ablation = parse_ablation(o.ablation);
  if (o.ssim_global) cfg.ssim.global = true;
  if (o.absrel_gt) cfg.absrel_denominator = AbsRelDenominator::ground_truth;
  if (o.softlabel_granularity == "step") cfg.softlabel_granularity = SoftLabelGranularity::step;
  if (o.softlabel_granularity == "epoch") cfg.softlabel_granularity = SoftLabelGranularity::epoch;
  cfg.validate();
  cfg.effective_model().validate();
  return cfg;
}

// "synthetic:n,H,W,frac" or a directory with rgb/ and depth/.
std::vector<SamplePair> load_data(const std::string& source, std::size_t multiple,
                                  std::uint64_t seed) {
  const std::string prefix = "synthetic:";
  if (source.rfind(prefix, 0) == 0) {
    std::size_t n = 0, h = 0, w = 0;
    double frac = 0.0;
    char tail = 0;
    if (std::sscanf(source.c_str() + prefix.size(), "%zu,%zu,%zu,%lf%c", &n, &h, &w, &frac, &tail) !=
            4 ||
        n == 0) {
      throw ConfigError("--data: expected synthetic:n,H,W,frac, got '" + source + "'");
    }
    if (h % multiple != 0 || w % multiple != 0) {
      throw ConfigError("--data: synthetic size must be a multiple of " + std::to_string(multiple));
    }
    return generate_synthetic(n, h, w, frac, seed);
  }
  LoadResult r = load_dataset(source, multiple);
  for (const auto& issue : r.skipped) {
    std::cerr << "skipped " << issue.path.string() << ": " << issue.message << '\n';
  }
  return std::move(r.samples);
}

void print_row(const ReportRow& r) {
  std::printf("epoch %zu  loss %.6f  abs_rel %.5f  ssim %.5f  si_rmse %.5f  lr %.3g%s\n", r.epoch,
              r.mean_loss, r.abs_rel, r.ssim, r.si_rmse, r.lr,
              r.softlabel_accepted ? "  [soft labels updated]" : "");
  std::fflush(stdout);
}

void print_metrics(const char* what, const MetricReport& m) {
  std::printf("%-13s abs_rel %.6f  ssim %.6f  si_rmse %.6f  pixels %zu\n", what, m.abs_rel, m.ssim,
              m.si_rmse, m.pixel_count);
}

void write_text(const fs::path& path, const auto& writer) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  writer(out);
}

int cmd_train(const CommonOptions& o, const std::string& out_dir, bool resume) {
  TrainConfig cfg = build_config(o);
  const auto data = load_data(o.data, cfg.effective_model().size_multiple(), cfg.seed);
  fs::create_directories(out_dir);
  cfg.checkpoint_dir = out_dir;
  if (cfg.checkpoint_every == 0) cfg.checkpoint_every = 1;
  std::optional<fs::path> from;
  if (resume && fs::exists(fs::path(out_dir) / kCheckpointFile)) from = out_dir;
  std::printf("training %c on %zu samples, %zu epochs\n", to_char(cfg.ablation), data.size(),
              cfg.max_epochs);
  TrainResult r = train(cfg, data, from, print_row);
  r.model.save().save(fs::path(out_dir) / "model.anuw");
  write_text(fs::path(out_dir) / "report.csv",
             [&](std::ostream& os) { write_report_csv(os, r.report); });
  std::printf("wrote %s\n", (fs::path(out_dir) / "model.anuw").c_str());
  return kOk;
}

int cmd_eval(const CommonOptions& o, const std::string& model_path) {
  const TrainConfig cfg = build_config(o);
  AnuModel model = AnuModel::load(TensorArchive::load(model_path));
  const auto data = load_data(o.data, model.config().size_multiple(), cfg.seed);
  const EvalReport r = evaluate(model, data, cfg.ssim, cfg.absrel_denominator);
  print_metrics("labels", r.labels);
  if (r.true_depth) print_metrics("true depth", *r.true_depth);
  if (r.masked_region) print_metrics("masked region", *r.masked_region);
  return kOk;
}

int cmd_infer(const std::string& model_path, const std::string& rgb_path,
              const std::string& out_path) {
  AnuModel model = AnuModel::load(TensorArchive::load(model_path));
  SamplePair s;
  s.id = fs::path(rgb_path).stem().string();
  s.rgb = read_rgb_png(rgb_path);
  const std::size_t h = s.rgb.dim(1), w = s.rgb.dim(2);
  s.label = Tensor({h, w});
  s = pad_to_multiple(std::move(s), model.config().size_multiple());
  const Tensor pred = model.predict(s.rgb);

  double lo = pred.at(0, 0, 0), hi = lo;
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      lo = std::min(lo, pred.at(0, i, j));
      hi = std::max(hi, pred.at(0, i, j));
    }
  Image img{w, h, 1, 8, std::vector<std::uint16_t>(w * h)};
  const double span = hi > lo ? hi - lo : 1.0;
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      img.samples[i * w + j] =
          static_cast<std::uint16_t>(std::lround(255.0 * (pred.at(0, i, j) - lo) / span));
    }
  write_png(out_path, img);
  write_text(out_path + ".txt", [&](std::ostream& os) {
    os.precision(17);
    os << "min = " << lo << "\nmax = " << hi << '\n';
  });
  std::printf("wrote %s (depth range %.6g .. %.6g)\n", out_path.c_str(), lo, hi);
  return kOk;
}

int cmd_ablate(const CommonOptions& o, const std::string& out_dir) {
  const TrainConfig cfg = build_config(o);
  const auto data = load_data(o.data, cfg.model.size_multiple(), cfg.seed);
  fs::create_directories(out_dir);
  int run = 0;
  const AblationResult r = ablation_run(cfg, data, [&](const ReportRow& row) {
    if (row.epoch == 1) std::printf("config %c\n", "ABCDE"[run++]);
    print_row(row);
  });
  for (int k = 0; k < 5; ++k) {
    write_text(fs::path(out_dir) / (std::string("report_") + "ABCDE"[k] + ".csv"),
               [&](std::ostream& os) { write_report_csv(os, r.reports[k]); });
  }
  write_text(fs::path(out_dir) / "ablation.csv",
             [&](std::ostream& os) { write_ablation_csv(os, r); });
  write_ablation_csv(std::cout, r);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monocular depth estimation with attention nested U-nets"};
  app.require_subcommand(1);

  CommonOptions train_o, eval_o, ablate_o;
  std::string train_out, ablate_out, model, rgb, infer_out;
  bool resume = false;

  auto* train_cmd = app.add_subcommand("train", "train one configuration");
  train_cmd->add_option("--data", train_o.data, "directory or synthetic:n,H,W,frac")->required();
  train_cmd->add_option("--out", train_out, "output directory")->required();
  train_cmd->add_option("--ablation", train_o.ablation, "configuration A-E")
      ->check(CLI::IsMember({"A", "B", "C", "D", "E"}));
  train_cmd->add_flag("--resume", resume, "continue from the checkpoint in --out");
  add_overrides(train_cmd, train_o, true);

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a saved model");
  eval_cmd->add_option("--model", model, "model or checkpoint file")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", eval_o.data, "directory or synthetic:n,H,W,frac")->required();
  add_overrides(eval_cmd, eval_o, false);

  auto* infer_cmd = app.add_subcommand("infer", "predict depth for one image");
  infer_cmd->add_option("--model", model, "model or checkpoint file")->required()->check(CLI::ExistingFile);
  infer_cmd->add_option("--rgb", rgb, "8-bit RGB png")->required()->check(CLI::ExistingFile);
  infer_cmd->add_option("--out", infer_out, "output png")->required();

  auto* ablate_cmd = app.add_subcommand("ablate", "train configurations A-E");
  ablate_cmd->add_option("--data", ablate_o.data, "directory or synthetic:n,H,W,frac")->required();
  ablate_cmd->add_option("--out", ablate_out, "output directory")->required();
  add_overrides(ablate_cmd, ablate_o, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*train_cmd) return cmd_train(train_o, train_out, resume);
    if (*eval_cmd) return cmd_eval(eval_o, model);
    if (*infer_cmd) return cmd_infer(model, rgb, infer_out);
    if (*ablate_cmd) return cmd_ablate(ablate_o, ablate_out);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kNumeric;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const ShapeError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}

#include "anuw/config_file.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace anuw {

namespace {

std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

[[noreturn]] void bad_value(const ConfigEntry& e, const char* expected) {
  throw ConfigError("config line " + std::to_string(e.line) + ": '" + e.key + "' expects " +
                    expected + ", got '" + e.value + "'");
}

double as_double(const ConfigEntry& e) {
  // std::from_chars for double is missing from older standard libraries.
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(e.value, &used);
  } catch (const std::exception&) {
    bad_value(e, "a number");
  }
  if (used != e.value.size()) bad_value(e, "a number");
  return v;
}

std::uint64_t as_uint(const ConfigEntry& e) {
  std::uint64_t v = 0;
  const char* end = e.value.data() + e.value.size();
  auto [ptr, ec] = std::from_chars(e.value.data(), end, v);
  if (ec != std::errc() || ptr != end) bad_value(e, "a non-negative integer");
  return v;
}

bool as_bool(const ConfigEntry& e) {
  if (e.value == "true" || e.value == "1" || e.value == "yes") return true;
  if (e.value == "false" || e.value == "0" || e.value == "no") return false;
  bad_value(e, "true/false");
}

using Setter = std::function<void(TrainConfig&, const ConfigEntry&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"learning_rate", [](TrainConfig& c, const ConfigEntry& e) { c.learning_rate = as_double(e); }},
      {"adam_beta1", [](TrainConfig& c, const ConfigEntry& e) { c.adam.beta1 = as_double(e); }},
      {"adam_beta2", [](TrainConfig& c, const ConfigEntry& e) { c.adam.beta2 = as_double(e); }},
      {"adam_eps", [](TrainConfig& c, const ConfigEntry& e) { c.adam.eps = as_double(e); }},
      {"batch_size", [](TrainConfig& c, const ConfigEntry& e) { c.batch_size = as_uint(e); }},
      {"max_epochs", [](TrainConfig& c, const ConfigEntry& e) { c.max_epochs = as_uint(e); }},
      {"poly_decay_power",
       [](TrainConfig& c, const ConfigEntry& e) { c.poly_decay_power = as_double(e); }},
      {"lr_granularity",
       [](TrainConfig& c, const ConfigEntry& e) {
         if (e.value == "epoch") c.lr_granularity = LrGranularity::epoch;
         else if (e.value == "step") c.lr_granularity = LrGranularity::step;
         else bad_value(e, "epoch or step");
       }},
      {"seed", [](TrainConfig& c, const ConfigEntry& e) { c.seed = as_uint(e); }},
      {"ablation",
       [](TrainConfig& c, const ConfigEntry& e) {
         try {
           c.ablation = parse_ablation(e.value);
         } catch (const ConfigError&) {
           bad_value(e, "one of A-E");
         }
       }},
      {"softlabel_granularity",
       [](TrainConfig& c, const ConfigEntry& e) {
         if (e.value == "epoch") c.softlabel_granularity = SoftLabelGranularity::epoch;
         else if (e.value == "step") c.softlabel_granularity = SoftLabelGranularity::step;
         else bad_value(e, "epoch or step");
       }},
      {"lambda1", [](TrainConfig& c, const ConfigEntry& e) { c.loss.lambda1 = as_double(e); }},
      {"lambda2", [](TrainConfig& c, const ConfigEntry& e) { c.loss.lambda2 = as_double(e); }},
      {"lambda3", [](TrainConfig& c, const ConfigEntry& e) { c.loss.lambda3 = as_double(e); }},
      {"ssim_window", [](TrainConfig& c, const ConfigEntry& e) { c.ssim.window = as_uint(e); }},
      {"ssim_global", [](TrainConfig& c, const ConfigEntry& e) { c.ssim.global = as_bool(e); }},
      {"ssim_dynamic_range",
       [](TrainConfig& c, const ConfigEntry& e) { c.ssim.dynamic_range = as_double(e); }},
      {"absrel_denominator",
       [](TrainConfig& c, const ConfigEntry& e) {
         if (e.value == "prediction") c.absrel_denominator = AbsRelDenominator::prediction;
         else if (e.value == "ground_truth") c.absrel_denominator = AbsRelDenominator::ground_truth;
         else bad_value(e, "prediction or ground_truth");
       }},
      {"epoch_metrics", [](TrainConfig& c, const ConfigEntry& e) { c.epoch_metrics = as_bool(e); }},
      {"checkpoint_every",
       [](TrainConfig& c, const ConfigEntry& e) { c.checkpoint_every = as_uint(e); }},
      {"stop_after", [](TrainConfig& c, const ConfigEntry& e) { c.stop_after = as_uint(e); }},
      {"levels", [](TrainConfig& c, const ConfigEntry& e) { c.model.levels = as_uint(e); }},
      {"base_channels",
       [](TrainConfig& c, const ConfigEntry& e) { c.model.base_channels = as_uint(e); }},
      {"awca_ratio", [](TrainConfig& c, const ConfigEntry& e) { c.model.awca_ratio = as_uint(e); }},
      {"psnl_ratio", [](TrainConfig& c, const ConfigEntry& e) { c.model.psnl_ratio = as_uint(e); }},
      {"psnl_center",
       [](TrainConfig& c, const ConfigEntry& e) {
         if (e.value == "channel") c.model.psnl_center = CenterDim::channel;
         else if (e.value == "spatial") c.model.psnl_center = CenterDim::spatial;
         else bad_value(e, "channel or spatial");
       }},
  };
  return table;
}

}  // namespace

std::vector<ConfigEntry> parse_config_text(std::string_view text) {
  std::vector<ConfigEntry> out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    ConfigEntry e{std::string(trim(line.substr(0, eq))), std::string(trim(line.substr(eq + 1))),
                  line_no};
    if (e.key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    out.push_back(std::move(e));
  }
  return out;
}

void apply_config(TrainConfig& cfg, const std::vector<ConfigEntry>& entries) {
  for (const auto& e : entries) {
    auto it = setters().find(e.key);
    if (it == setters().end()) {
      throw ConfigError("config line " + std::to_string(e.line) + ": unknown key '" + e.key + "'");
    }
    it->second(cfg, e);
  }
}

TrainConfig load_train_config(const std::filesystem::path& path, TrainConfig base) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  apply_config(base, parse_config_text(ss.str()));
  return base;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, _] : setters()) keys.push_back(k);
  return keys;
}

}  // namespace anuw

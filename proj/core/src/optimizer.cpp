#include "anuw/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace anuw {

void adam_step(std::span<Parameter* const> params, AdamState& state, double lr,
               const AdamConfig& cfg) {
  std::vector<Parameter*> order(params.begin(), params.end());
  std::sort(order.begin(), order.end(),
            [](const Parameter* a, const Parameter* b) { return a->name() < b->name(); });
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (Parameter* p : order) {
    Tensor& value = p->value();
    const Tensor& g = p->grad();
    auto [mit, m_new] = state.m.try_emplace(p->name(), value.shape());
    auto [vit, v_new] = state.v.try_emplace(p->name(), value.shape());
    Tensor& m = mit->second;
    Tensor& v = vit->second;
    if (m.shape() != value.shape() || v.shape() != value.shape()) {
      throw ShapeError("adam: moment shape for '" + p->name() + "' is " + to_string(m.shape()) +
                       ", parameter is " + to_string(value.shape()));
    }
    for (std::size_t i = 0; i < value.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      value[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

double poly_lr(double lr0, double progress, double total, double power) {
  if (total <= 0.0) throw ConfigError("learning-rate schedule needs a positive horizon");
  const double frac = 1.0 - progress / total;
  return frac <= 0.0 ? 0.0 : lr0 * std::pow(frac, power);
}

void AdamState::write(TensorArchive& archive) const {
  archive.set("adam/step", Tensor::scalar(static_cast<double>(step)));
  for (const auto& [name, t] : m) archive.set("adam/m/" + name, t);
  for (const auto& [name, t] : v) archive.set("adam/v/" + name, t);
}

AdamState AdamState::read(const TensorArchive& archive) {
  AdamState s;
  s.step = static_cast<std::uint64_t>(archive.scalar("adam/step"));
  for (const auto& [name, t] : archive.entries()) {
    if (name.rfind("adam/m/", 0) == 0) s.m.emplace(name.substr(7), t);
    if (name.rfind("adam/v/", 0) == 0) s.v.emplace(name.substr(7), t);
  }
  return s;
}

}  // namespace anuw

#include "vld/tensor/optim.hpp"

#include <cmath>
#include <sstream>

namespace vld {

void LrSchedule::validate() const {
  if (!(peak_lr > 0.0) || !std::isfinite(peak_lr)) throw ConfigError("schedule peak_lr must be positive");
  if (!(decay_factor > 0.0 && decay_factor <= 1.0)) throw ConfigError("schedule decay_factor must lie in (0, 1]");
  if (decay_every_epochs == 0) throw ConfigError("schedule decay_every_epochs must be positive");
}

LrSchedule captioner_reference_schedule() { return LrSchedule{20, 3.2e-5, 0.95, 25}; }

LrSchedule vqa_reference_schedule(double peak_lr) { return LrSchedule{10, peak_lr, 0.5, 20}; }

double lr_at(const LrSchedule& s, double epoch) {
  if (epoch < 0.0) epoch = 0.0;
  const double warmup = static_cast<double>(s.warmup_epochs);
  if (epoch < warmup) return s.peak_lr * (epoch / warmup);
  const double decays = std::floor((epoch - warmup) / static_cast<double>(s.decay_every_epochs));
  return s.peak_lr * std::pow(s.decay_factor, decays);
}

template <typename T>
AdamState<T>::AdamState(const ParameterSet<T>& params, AdamOptions opts) : options(opts) {
  for (const auto& p : params) {
    first_moment.emplace_back(p.value.size(), 0.0);
    second_moment.emplace_back(p.value.size(), 0.0);
  }
}

template <typename T>
void adam_step(ParameterSet<T>& params, const GradientBuffer<T>& grads, AdamState<T>& state, double lr) {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be finite and non-negative");
  if (grads.size() != params.size() || state.first_moment.size() != params.size()) {
    throw DimensionError("adam_step: gradient/state count does not match parameter count");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto g = grads[i];
    if (g.size() != params[i].value.size() || state.first_moment[i].size() != g.size()) {
      throw DimensionError("adam_step: buffer shape mismatch for parameter '" + params[i].name + "'");
    }
    for (std::size_t k = 0; k < g.size(); ++k) {
      if (!std::isfinite(g[k])) {
        std::ostringstream msg;
        msg << "gradient of parameter '" << params[i].name << "' " << shape_string(params[i].value.shape())
            << " at flat index " << k << " is " << g[k] << " (step " << state.step + 1 << ")";
        throw NonFiniteError(msg.str());
      }
    }
  }
  state.step += 1;
  const auto& o = state.options;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(o.beta1, t);
  const double c2 = 1.0 - std::pow(o.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto g = grads[i];
    auto w = params[i].value.data();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t k = 0; k < g.size(); ++k) {
      const double gk = static_cast<double>(g[k]);
      m[k] = o.beta1 * m[k] + (1.0 - o.beta1) * gk;
      v[k] = o.beta2 * v[k] + (1.0 - o.beta2) * gk * gk;
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      w[k] = static_cast<T>(static_cast<double>(w[k]) - lr * mhat / (std::sqrt(vhat) + o.eps));
    }
  }
}

template <typename T>
double clip_global_norm(GradientBuffer<T>& grads, double max_norm) {
  const double norm = grads.l2_norm();
  if (norm > max_norm && norm > 0.0) grads.scale(max_norm / norm);
  return norm;
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step<float>(ParameterSet<float>&, const GradientBuffer<float>&, AdamState<float>&, double);
template void adam_step<double>(ParameterSet<double>&, const GradientBuffer<double>&, AdamState<double>&, double);
template double clip_global_norm<float>(GradientBuffer<float>&, double);
template double clip_global_norm<double>(GradientBuffer<double>&, double);

}  // namespace vld

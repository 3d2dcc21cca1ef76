#include "repdiff/schedules.hpp"

#include <cmath>
#include <stdexcept>

namespace repdiff {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

NoiseSchedule make_noise_schedule(NoiseKind kind, int T, double beta_min, double beta_max) {
  if (T < 1) throw std::invalid_argument("make_noise_schedule: T must be >= 1");
  if (!(beta_min > 0.0) || !(beta_min <= beta_max) || !(beta_max < 1.0))
    throw std::invalid_argument("make_noise_schedule: need 0 < beta_min <= beta_max < 1");

  NoiseSchedule ns;
  ns.T = T;
  ns.beta.resize(T);

  if (kind == NoiseKind::linear) {
    for (int t = 1; t <= T; ++t) {
      const double frac = T == 1 ? 0.0 : static_cast<double>(t - 1) / (T - 1);
      ns.beta[t - 1] = beta_min + frac * (beta_max - beta_min);
    }
  } else {
    // squared-cosine cumulative curve; betas derived from consecutive ratios
    // and clamped into [beta_min, beta_max], then alpha_bar is rebuilt from
    // the clamped betas so the product invariant is exact.
    const double s = 0.008;
    auto f = [s](double u) {
      const double c = std::cos((u + s) / (1.0 + s) * kPi / 2.0);
      return c * c;
    };
    double prev = 1.0;
    for (int t = 1; t <= T; ++t) {
      const double cur = f(static_cast<double>(t) / T) / f(0.0);
      double beta = 1.0 - cur / prev;
      beta = std::min(std::max(beta, beta_min), beta_max);
      ns.beta[t - 1] = beta;
      prev = cur;
    }
  }

  ns.alpha_bar.resize(T);
  double prod = 1.0;
  for (int t = 1; t <= T; ++t) {
    prod *= 1.0 - ns.beta[t - 1];
    ns.alpha_bar[t - 1] = prod;
  }

  ns.sigma.resize(T);
  for (int t = 1; t <= T; ++t) {
    const double abar_prev = ns.abar(t - 1);
    const double var = ns.beta[t - 1] * (1.0 - abar_prev) / (1.0 - ns.alpha_bar[t - 1]);
    ns.sigma[t - 1] = std::sqrt(std::max(var, 0.0));
  }
  return ns;
}

NoiseKind noise_kind_from_string(const std::string& s) {
  if (s == "linear") return NoiseKind::linear;
  if (s == "cosine") return NoiseKind::cosine;
  throw std::invalid_argument("unknown noise schedule kind: " + s);
}

WeightSchedule cumulative_weights(std::vector<double> alpha_w) {
  if (alpha_w.empty()) throw std::invalid_argument("cumulative_weights: empty weights");
  double sum = 0.0, comp = 0.0;
  for (double a : alpha_w) {
    if (a < 0.0) throw std::invalid_argument("cumulative_weights: negative weight");
    // Kahan accumulation for the sum-to-one check
    const double y = a - comp;
    const double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("cumulative_weights: weights sum to " + std::to_string(sum) +
                                ", expected 1");
  WeightSchedule w;
  w.alpha = std::move(alpha_w);
  const int T = w.T();
  w.A.resize(T);
  double tail = 0.0;
  for (int t = T; t >= 1; --t) {
    tail += w.alpha[t - 1];
    w.A[t - 1] = tail;
  }
  return w;
}

WeightSchedule rcg_weights(int T) {
  if (T < 1) throw std::invalid_argument("rcg_weights: T must be >= 1");
  std::vector<double> a(T, 0.0);
  a[T - 1] = 1.0;
  return cumulative_weights(std::move(a));
}

WeightSchedule uniform_weights(int T) {
  if (T < 1) throw std::invalid_argument("uniform_weights: T must be >= 1");
  std::vector<double> a(T, 1.0 / T);
  // nudge the largest entry so the Kahan check is happy even when 1/T is inexact
  double sum = 0.0;
  for (double v : a) sum += v;
  a[0] += 1.0 - sum;
  return cumulative_weights(std::move(a));
}

double curriculum_weight(const Curriculum& c, int n) {
  if (n < 0) throw std::invalid_argument("curriculum_weight: negative epoch");
  switch (c.kind) {
    case CurriculumKind::constant:
      return c.peak;
    case CurriculumKind::linear_phase_in: {
      if (c.warmup <= 0) return c.peak;
      const double frac = std::min(1.0, static_cast<double>(n) / c.warmup);
      return c.peak * frac;
    }
    case CurriculumKind::cosine_decay: {
      if (c.horizon <= 0) return c.peak;
      const double frac = std::min(1.0, static_cast<double>(n) / c.horizon);
      return c.floor + (c.peak - c.floor) * (1.0 + std::cos(kPi * frac)) / 2.0;
    }
  }
  throw std::logic_error("curriculum_weight: unhandled kind");
}

CurriculumKind curriculum_kind_from_string(const std::string& s) {
  if (s == "constant") return CurriculumKind::constant;
  if (s == "linear-phase-in") return CurriculumKind::linear_phase_in;
  if (s == "cosine-decay") return CurriculumKind::cosine_decay;
  throw std::invalid_argument("unknown curriculum kind: " + s);
}

std::string to_string(CurriculumKind k) {
  switch (k) {
    case CurriculumKind::constant: return "constant";
    case CurriculumKind::linear_phase_in: return "linear-phase-in";
    case CurriculumKind::cosine_decay: return "cosine-decay";
  }
  return "?";
}

}  // namespace repdiff

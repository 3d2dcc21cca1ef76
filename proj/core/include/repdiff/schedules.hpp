#pragma once

#include <string>
#include <vector>

namespace repdiff {

enum class NoiseKind { linear, cosine };

/// Forward-process variance schedule and derived cumulative quantities.
/// Indexing: beta[t-1], alpha_bar[t-1], sigma[t-1] hold the step-t values,
/// t = 1..T. alpha_bar[t-1] = prod_{i<=t} (1 - beta_i). sigma holds the
/// forward-posterior standard deviations with the convention alpha_bar_0 = 1,
/// so sigma[0] = 0.
struct NoiseSchedule {
  int T = 0;
  std::vector<double> beta;
  std::vector<double> alpha_bar;
  std::vector<double> sigma;

  double abar(int t) const { return t == 0 ? 1.0 : alpha_bar[t - 1]; }
};

NoiseSchedule make_noise_schedule(NoiseKind kind, int T, double beta_min, double beta_max);
NoiseKind noise_kind_from_string(const std::string& s);

/// Timestep weights {alpha_t} summing to one and their cumulative tail sums
/// A_t = sum_{i=t}^T alpha_i, stored as A[t-1]. A is computed tail-first so
/// A[t-1] - A[t] == alpha[t-1] holds exactly in 64-bit arithmetic.
struct WeightSchedule {
  std::vector<double> alpha;
  std::vector<double> A;

  int T() const { return static_cast<int>(alpha.size()); }
  double At(int t) const { return A[t - 1]; }  // t = 1..T
};

WeightSchedule cumulative_weights(std::vector<double> alpha_w);

/// All mass on the final decomposition: representation available from the
/// start of generation, A_t = 1 for every t (the two-stage conditioning
/// special case).
WeightSchedule rcg_weights(int T);

/// alpha_t = 1/T, giving A_t = (T - t + 1) / T. Note: this is the tail-sum
/// value; a commonly quoted "1 - t/T" differs by one index (see README).
WeightSchedule uniform_weights(int T);

enum class CurriculumKind { constant, linear_phase_in, cosine_decay };

/// Epoch-indexed loss-weight schedule. `horizon` is the total number of
/// epochs, used only by cosine_decay.
struct Curriculum {
  CurriculumKind kind = CurriculumKind::constant;
  int warmup = 0;
  double peak = 1.0;
  double floor = 0.0;
  int horizon = 0;
};

double curriculum_weight(const Curriculum& c, int n);
CurriculumKind curriculum_kind_from_string(const std::string& s);
std::string to_string(CurriculumKind k);

}  // namespace repdiff

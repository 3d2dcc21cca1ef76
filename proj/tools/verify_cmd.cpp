// `verify` runs the exact finite-state and closed-form suites against
// independent numerical routes (full summation, quadrature) and writes a JSON
// report with one row per suite.

#include <cmath>
#include <functional>

#include "commands.hpp"
#include "repdiff/discrete.hpp"
#include "repdiff/gaussian.hpp"
#include "repdiff/rng.hpp"

namespace repdiff::cli {

namespace {

using nlohmann::json;

struct SuiteRow {
  std::string name;
  int instances = 0;
  double max_discrepancy = 0.0;
  double threshold = 0.0;
  bool expected_fail = false;
  bool pass = false;
  json extra;
};

// quadrature used to cross-check closed forms; deliberately written here,
// apart from the implementations in the core library
double simpson_rec(const std::function<double(double)>& f, double a, double b, double whole,
                   double tol, int depth) {
  const double m = 0.5 * (a + b);
  auto s = [&f](double x0, double x1) {
    return (x1 - x0) / 6.0 * (f(x0) + 4.0 * f(0.5 * (x0 + x1)) + f(x1));
  };
  const double left = s(a, m), right = s(m, b);
  if (depth <= 0 || std::abs(left + right - whole) < 15.0 * tol)
    return left + right + (left + right - whole) / 15.0;
  return simpson_rec(f, a, m, left, tol / 2, depth - 1) +
         simpson_rec(f, m, b, right, tol / 2, depth - 1);
}

double integrate(const std::function<double(double)>& f, double a, double b, int panels = 64) {
  double acc = 0.0;
  for (int k = 0; k < panels; ++k) {
    const double x0 = a + (b - a) * k / panels;
    const double x1 = a + (b - a) * (k + 1) / panels;
    auto s = [&f](double u0, double u1) {
      return (u1 - u0) / 6.0 * (f(u0) + 4.0 * f(0.5 * (u0 + u1)) + f(u1));
    };
    acc += simpson_rec(f, x0, x1, s(x0, x1), 1e-14, 32);
  }
  return acc;
}

double vmf_resultant_quadrature(int p, double kappa) {
  auto w = [&](double th) {
    return std::exp(kappa * (std::cos(th) - 1.0)) * std::pow(std::sin(th), p - 2);
  };
  const double num = integrate([&](double th) { return std::cos(th) * w(th); }, 0.0, M_PI);
  return num / integrate(w, 0.0, M_PI);
}

// random problem shapes for the sweeps
DiscreteChainSpec random_spec(Rng& rng, std::uint64_t seed, int max_T, int L) {
  const int T = 1 + static_cast<int>(rng.uniform_index(max_T));
  const int nx = 3 + static_cast<int>(rng.uniform_index(3));
  std::vector<int> nz;
  for (int l = 0; l < L; ++l) nz.push_back(2 + static_cast<int>(rng.uniform_index(2)));
  return DiscreteChainSpec::random(T, nx, nz, seed);
}

DiscreteModel matching_model(const DiscreteChainSpec& spec, std::uint64_t seed) {
  return DiscreteModel::random(spec.T, spec.nx, spec.nz, seed);
}

WeightSchedule pick_weights(Rng& rng, int T, std::uint64_t seed) {
  switch (rng.uniform_index(3)) {
    case 0: return uniform_weights(T);
    case 1: return rcg_weights(T);
    default: {
      Rng r2(seed);
      std::vector<double> a(T);
      double s = 0;
      for (int t = 0; t < T; ++t) s += (a[t] = r2.gamma(1.0));
      for (int t = 0; t < T; ++t) a[t] /= s;
      return cumulative_weights(a);
    }
  }
}

}  // namespace

int cmd_verify(const CommonArgs& args) {
  const auto cfg = load_config(args.config_path);
  require_seeds(cfg, {"verify"});
  ensure_directory(args.out_dir);
  const std::uint64_t seed0 = cfg.verify.seed + args.seed_offset;

  std::vector<SuiteRow> rows;

  {  // joint-decomposition identity across all injection points
    SuiteRow r{"decomposition-identity", cfg.verify.decomp_instances, 0.0, 1e-10, false, false,
               {}};
    for (int i = 0; i < r.instances; ++i) {
      Rng rng(derive_seed(seed0, 0x01, i));
      const auto model =
          matching_model(random_spec(rng, derive_seed(seed0, 0x02, i), 4, 1),
                         derive_seed(seed0, 0x03, i));
      r.max_discrepancy = std::max(r.max_discrepancy, verify_decompositions(model));
    }
    r.pass = r.max_discrepancy < r.threshold;
    rows.push_back(r);
  }

  {  // negative control: a perturbed latent posterior must break the identity
    SuiteRow r{"decomposition-negative-control", 25, 0.0, 1e-3, true, false, {}};
    double min_disc = 1e300;
    for (int i = 0; i < r.instances; ++i) {
      Rng rng(derive_seed(seed0, 0x04, i));
      const auto model =
          matching_model(random_spec(rng, derive_seed(seed0, 0x05, i), 3, 1),
                         derive_seed(seed0, 0x06, i));
      min_disc = std::min(min_disc, verify_decompositions(model, 0.1));
    }
    r.max_discrepancy = min_disc;
    r.pass = min_disc > r.threshold;  // "fails" the identity, as intended
    rows.push_back(r);
  }

  {  // marginal invariance + latent resampling
    SuiteRow r{"marginal-invariance", cfg.verify.marginal_instances, 0.0, 1e-10, false, false,
               {}};
    for (int i = 0; i < r.instances; ++i) {
      Rng rng(derive_seed(seed0, 0x07, i));
      const auto model =
          matching_model(random_spec(rng, derive_seed(seed0, 0x08, i), 3, 1),
                         derive_seed(seed0, 0x09, i));
      r.max_discrepancy = std::max(r.max_discrepancy, verify_marginal_invariance(model));
      r.max_discrepancy = std::max(r.max_discrepancy, verify_resampling_invariance(model));
    }
    r.pass = r.max_discrepancy < r.threshold;
    rows.push_back(r);
  }

  {  // variational bound: sum rule against the direct bound, plus sanity
    SuiteRow r{"weighted-bound-decomposition", cfg.verify.prop1_instances, 0.0, 1e-9, false,
               false, {}};
    double max_neg_repkl = 0.0, max_neg_lognorm = 0.0;
    for (int i = 0; i < r.instances; ++i) {
      Rng rng(derive_seed(seed0, 0x0a, i));
      const auto spec = random_spec(rng, derive_seed(seed0, 0x0b, i), 3, 1);
      const auto model = matching_model(spec, derive_seed(seed0, 0x0c, i));
      const auto w = pick_weights(rng, spec.T, derive_seed(seed0, 0x0d, i));
      const auto terms = vb_prop1(spec, model, w);
      const double direct = vb_direct(spec, model);
      r.max_discrepancy = std::max(r.max_discrepancy, std::abs(terms.sum() - direct));
      max_neg_repkl = std::max(max_neg_repkl, -terms.repkl);
      max_neg_lognorm = std::max(max_neg_lognorm, -terms.lognorm);
    }
    r.extra["max_negative_repkl"] = max_neg_repkl;
    r.extra["max_negative_lognorm"] = max_neg_lognorm;
    r.pass = r.max_discrepancy < r.threshold && max_neg_repkl < 1e-12 &&
             max_neg_lognorm < 1e-12;
    rows.push_back(r);
  }

  {  // bound dominates the exact NLL
    SuiteRow r{"bound-dominates-nll", cfg.verify.vb_pairs, 0.0, 1e-12, false, false, {}};
    double worst_violation = 0.0;
    for (int i = 0; i < r.instances; ++i) {
      Rng rng(derive_seed(seed0, 0x0e, i));
      const auto spec = random_spec(rng, derive_seed(seed0, 0x0f, i), 3, 1);
      const auto model = matching_model(spec, derive_seed(seed0, 0x10, i));
      worst_violation =
          std::max(worst_violation, model_nll(spec, model) - vb_direct(spec, model));
    }
    r.max_discrepancy = worst_violation;
    r.pass = worst_violation < r.threshold;
    rows.push_back(r);
  }

  {  // log-normalizer bounds
    SuiteRow r{"lognorm-bounds", cfg.verify.lognorm_instances, 0.0, 1e-12, false, false, {}};
    double min_slack = 1e300;
    bool holds = true;
    for (int i = 0; i < r.instances; ++i) {
      Rng rng(derive_seed(seed0, 0x11, i));
      const auto spec = random_spec(rng, derive_seed(seed0, 0x12, i), 3, 1);
      const auto model = matching_model(spec, derive_seed(seed0, 0x13, i));
      const auto w = pick_weights(rng, spec.T, derive_seed(seed0, 0x14, i));
      const auto b = verify_lognorm_bounds(spec, model, w);
      holds = holds && b.holds(1e-12);
      min_slack = std::min(min_slack, std::min(b.upper_uc, b.upper_cu) - b.neg_log_z);
      r.max_discrepancy = std::max(r.max_discrepancy, std::max(0.0, -b.neg_log_z));
    }
    r.extra["min_upper_bound_slack"] = min_slack;
    r.pass = holds;
    rows.push_back(r);
  }

  {  // multi-latent KL chain rule
    SuiteRow r{"multilatent-kl-chain", cfg.verify.multilatent_instances, 0.0, 1e-10, false,
               false, {}};
    for (int i = 0; i < r.instances; ++i) {
      Rng rng(derive_seed(seed0, 0x15, i));
      const int L = 2 + static_cast<int>(rng.uniform_index(2));
      const auto spec = random_spec(rng, derive_seed(seed0, 0x16, i), 3, L);
      const auto model = matching_model(spec, derive_seed(seed0, 0x17, i));
      r.max_discrepancy = std::max(r.max_discrepancy, verify_multilatent_kl(spec, model));
    }
    r.pass = r.max_discrepancy < r.threshold;
    rows.push_back(r);
  }

  {  // hybrid score interpolation in the linear-Gaussian model
    SuiteRow r{"hybrid-score-identity", cfg.verify.hybrid_instances, 0.0, 1e-8, false, false,
               {}};
    double max_fd = 0.0;
    for (int i = 0; i < r.instances; ++i) {
      Rng rng(derive_seed(seed0, 0x18, i));
      const auto inst = LinearGaussianInstance::random(derive_seed(seed0, 0x19, i));
      const double A = rng.uniform();
      const auto rep = verify_hybrid_score(inst, A, cfg.verify.hybrid_points,
                                           derive_seed(seed0, 0x1a, i));
      r.max_discrepancy = std::max(r.max_discrepancy, rep.max_closed_form_err);
      max_fd = std::max(max_fd, rep.max_fd_err);
    }
    r.extra["max_fd_err"] = max_fd;
    r.pass = r.max_discrepancy < r.threshold && max_fd < 1e-5;
    rows.push_back(r);
  }

  {  // Gaussian log-normalizer closed form against quadrature
    SuiteRow r{"lognorm-gaussian-quadrature", cfg.verify.quad_draws, 0.0, 1e-7, false, false,
               {}};
    for (int i = 0; i < r.instances; ++i) {
      Rng rng(derive_seed(seed0, 0x1b, i));
      const double A = rng.uniform();
      const double sigma2 = 0.2 + 2.0 * rng.uniform();
      std::vector<double> mu_c{2.0 * rng.normal(), 2.0 * rng.normal()};
      std::vector<double> mu_u{2.0 * rng.normal(), 2.0 * rng.normal()};
      const double closed = neg_log_z_gaussian(A, sigma2, mu_c, mu_u);
      double quad_logz = 0.0;
      for (int dim = 0; dim < 2; ++dim) {
        const double lo = std::min(mu_c[dim], mu_u[dim]) - 14.0 * std::sqrt(sigma2);
        const double hi = std::max(mu_c[dim], mu_u[dim]) + 14.0 * std::sqrt(sigma2);
        quad_logz += std::log(integrate(
            [&](double x) {
              const double lc = -(x - mu_c[dim]) * (x - mu_c[dim]) / (2.0 * sigma2);
              const double lu = -(x - mu_u[dim]) * (x - mu_u[dim]) / (2.0 * sigma2);
              return std::exp(A * lc + (1.0 - A) * lu) / std::sqrt(2.0 * M_PI * sigma2);
            },
            lo, hi));
      }
      r.max_discrepancy = std::max(r.max_discrepancy, std::abs(closed + quad_logz));
    }
    r.pass = r.max_discrepancy < r.threshold;
    rows.push_back(r);
  }

  {  // vMF KL: continued fraction against spherical quadrature and coth form
    SuiteRow r{"vmf-kl", 0, 0.0, 1e-6, false, false, {}};
    double max_coth = 0.0;
    for (int p : {2, 3, 8}) {
      for (double kappa : {0.1, 1.0, 10.0, 100.0}) {
        ++r.instances;
        const double cf = vmf_mean_resultant(p, kappa);
        const double quad = vmf_resultant_quadrature(p, kappa);
        r.max_discrepancy = std::max(r.max_discrepancy, std::abs(cf - quad));
        if (p == 3)
          max_coth = std::max(
              max_coth, std::abs(cf - (1.0 / std::tanh(kappa) - 1.0 / kappa)));
      }
    }
    r.extra["max_p3_closed_form_err"] = max_coth;
    r.pass = r.max_discrepancy < r.threshold && max_coth < 1e-12;
    rows.push_back(r);
  }

  json report;
  report["config_hash"] = cfg.hash;
  report["command"] = "verify";
  bool all_pass = true;
  json suites = json::array();
  for (const auto& r : rows) {
    json row;
    row["suite"] = r.name;
    row["instances"] = r.instances;
    row["seed"] = seed0;
    row["max_discrepancy"] = r.max_discrepancy;
    row["threshold"] = r.threshold;
    row["expected_fail"] = r.expected_fail;
    row["pass"] = r.pass;
    if (!r.extra.is_null()) row["detail"] = r.extra;
    suites.push_back(row);
    all_pass = all_pass && r.pass;
  }
  report["suites"] = suites;
  report["all_pass"] = all_pass;
  write_json_report(args.out_dir + "/verify_report.json", report);

  for (const auto& r : rows)
    std::printf("%-34s %6d instances  max %.3e  %s\n", r.name.c_str(), r.instances,
                r.max_discrepancy,
                r.pass ? (r.expected_fail ? "EXPECTED-FAIL (ok)" : "PASS") : "FAIL");
  return all_pass ? 0 : 1;
}

}  // namespace repdiff::cli

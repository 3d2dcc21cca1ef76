#include "repdiff/discrete.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "repdiff/rng.hpp"

namespace repdiff {

namespace {

constexpr double kFloor = 1e-12;
constexpr std::size_t kSizeCap = 10'000'000;

void check_distribution(const std::vector<double>& p, const char* what) {
  double s = 0.0;
  for (double v : p) {
    if (v < 0.0) throw std::invalid_argument(std::string(what) + ": negative entry");
    s += v;
  }
  if (std::abs(s - 1.0) > 1e-12)
    throw std::invalid_argument(std::string(what) + ": row sums to " + std::to_string(s));
}

std::vector<double> dirichlet_row(Rng& rng, int n) {
  std::vector<double> row(n);
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    row[i] = rng.gamma(1.0);
    s += row[i];
  }
  for (int i = 0; i < n; ++i) row[i] /= s;
  return row;
}

void floor_row(std::vector<double>& row, std::size_t begin, std::size_t len) {
  double s = 0.0;
  for (std::size_t i = begin; i < begin + len; ++i) {
    if (row[i] < kFloor) row[i] = kFloor;
    s += row[i];
  }
  for (std::size_t i = begin; i < begin + len; ++i) row[i] /= s;
}

// q-side chain marginals: G[t][a*nx + j] = q(x_t = j | x_0 = a), G[0] = I.
std::vector<std::vector<double>> chain_marginals(const DiscreteChainSpec& spec) {
  const int nx = spec.nx;
  std::vector<std::vector<double>> G(spec.T + 1, std::vector<double>(nx * nx, 0.0));
  for (int a = 0; a < nx; ++a) G[0][a * nx + a] = 1.0;
  for (int t = 1; t <= spec.T; ++t) {
    for (int a = 0; a < nx; ++a)
      for (int i = 0; i < nx; ++i) {
        const double gi = G[t - 1][a * nx + i];
        if (gi == 0.0) continue;
        for (int j = 0; j < nx; ++j) G[t][a * nx + j] += gi * spec.forward[t - 1][i * nx + j];
      }
  }
  return G;
}

// q(z = k | x_0 = a) over the joint latent space.
std::vector<double> latent_table(const DiscreteChainSpec& spec) {
  const std::size_t NZ = spec.num_latent_states();
  std::vector<double> qz(spec.nx * NZ, 1.0);
  const int L = static_cast<int>(spec.nz.size());
  for (int a = 0; a < spec.nx; ++a) {
    for (std::size_t z = 0; z < NZ; ++z) {
      std::size_t rem = z;
      double p = 1.0;
      for (int l = L - 1; l >= 0; --l) {
        const int zl = static_cast<int>(rem % spec.nz[l]);
        rem /= spec.nz[l];
        p *= spec.encoders[l][a * spec.nz[l] + zl];
      }
      qz[a * NZ + z] = p;
    }
  }
  return qz;
}

double kl_rows(const double* q, const double* p, std::size_t n) {
  double kl = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (q[i] > 0.0) kl += q[i] * std::log(q[i] / p[i]);
  return kl;
}

}  // namespace

std::size_t DiscreteChainSpec::num_latent_states() const {
  std::size_t n = 1;
  for (int m : nz) n *= static_cast<std::size_t>(m);
  return n;
}

void DiscreteChainSpec::validate() const {
  if (T < 1 || T > 5) throw std::invalid_argument("spec: T must be in [1,5]");
  if (nx < 2 || nx > 6) throw std::invalid_argument("spec: nx must be in [2,6]");
  if (nz.empty() || nz.size() > 3) throw std::invalid_argument("spec: need 1..3 latents");
  for (int m : nz)
    if (m < 2 || m > 5) throw std::invalid_argument("spec: latent sizes must be in [2,5]");
  if (static_cast<int>(forward.size()) != T || encoders.size() != nz.size())
    throw std::invalid_argument("spec: kernel count mismatch");
  check_distribution(q0, "spec.q0");
  for (const auto& F : forward)
    for (int i = 0; i < nx; ++i)
      check_distribution({F.begin() + i * nx, F.begin() + (i + 1) * nx}, "spec.forward");
  for (std::size_t l = 0; l < nz.size(); ++l)
    for (int i = 0; i < nx; ++i)
      check_distribution(
          {encoders[l].begin() + i * nz[l], encoders[l].begin() + (i + 1) * nz[l]},
          "spec.encoder");
}

DiscreteChainSpec DiscreteChainSpec::random(int T, int nx, std::vector<int> nz,
                                            std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0xd15c));
  DiscreteChainSpec s;
  s.T = T;
  s.nx = nx;
  s.nz = std::move(nz);
  s.q0 = dirichlet_row(rng, nx);
  s.forward.resize(T);
  for (int t = 0; t < T; ++t) {
    s.forward[t].resize(nx * nx);
    for (int i = 0; i < nx; ++i) {
      auto row = dirichlet_row(rng, nx);
      std::copy(row.begin(), row.end(), s.forward[t].begin() + i * nx);
    }
  }
  s.encoders.resize(s.nz.size());
  for (std::size_t l = 0; l < s.nz.size(); ++l) {
    s.encoders[l].resize(nx * s.nz[l]);
    for (int i = 0; i < nx; ++i) {
      auto row = dirichlet_row(rng, s.nz[l]);
      std::copy(row.begin(), row.end(), s.encoders[l].begin() + i * s.nz[l]);
    }
  }
  s.validate();
  return s;
}

std::size_t DiscreteModel::num_latent_states() const {
  std::size_t n = 1;
  for (int m : nz) n *= static_cast<std::size_t>(m);
  return n;
}

void DiscreteModel::apply_floor() {
  const std::size_t NZ = num_latent_states();
  floor_row(prior, 0, prior.size());
  for (auto& R : reverse)
    for (int j = 0; j < nx; ++j) floor_row(R, static_cast<std::size_t>(j) * nx, nx);
  for (int i = 0; i < nx; ++i) floor_row(latent, static_cast<std::size_t>(i) * NZ, NZ);
}

void DiscreteModel::validate() const {
  if (T < 1) throw std::invalid_argument("model: T must be >= 1");
  if (static_cast<int>(reverse.size()) != T)
    throw std::invalid_argument("model: reverse kernel count mismatch");
  const std::size_t NZ = num_latent_states();
  check_distribution(prior, "model.prior");
  for (const auto& R : reverse)
    for (int j = 0; j < nx; ++j)
      check_distribution({R.begin() + j * nx, R.begin() + (j + 1) * nx}, "model.reverse");
  for (int i = 0; i < nx; ++i)
    check_distribution({latent.begin() + i * NZ, latent.begin() + (i + 1) * NZ},
                       "model.latent");
  for (double v : latent)
    if (v <= 0.0) throw std::invalid_argument("model.latent: entries must be positive");
}

DiscreteModel DiscreteModel::random(int T, int nx, std::vector<int> nz, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x30de1));
  DiscreteModel m;
  m.T = T;
  m.nx = nx;
  m.nz = std::move(nz);
  m.prior = dirichlet_row(rng, nx);
  m.reverse.resize(T);
  for (int t = 0; t < T; ++t) {
    m.reverse[t].resize(nx * nx);
    for (int j = 0; j < nx; ++j) {
      auto row = dirichlet_row(rng, nx);
      std::copy(row.begin(), row.end(), m.reverse[t].begin() + j * nx);
    }
  }
  const std::size_t NZ = m.num_latent_states();
  m.latent.resize(nx * NZ);
  for (int i = 0; i < nx; ++i) {
    auto row = dirichlet_row(rng, static_cast<int>(NZ));
    std::copy(row.begin(), row.end(), m.latent.begin() + i * NZ);
  }
  m.apply_floor();
  m.validate();
  return m;
}

DiscreteModel DiscreteModel::bayes_inverse(const DiscreteChainSpec& spec) {
  const int nx = spec.nx;
  auto G = chain_marginals(spec);
  // marginals q(x_t = j) = sum_a q0(a) G[t][a,j]
  std::vector<std::vector<double>> mx(spec.T + 1, std::vector<double>(nx, 0.0));
  for (int t = 0; t <= spec.T; ++t)
    for (int a = 0; a < nx; ++a)
      for (int j = 0; j < nx; ++j) mx[t][j] += spec.q0[a] * G[t][a * nx + j];

  DiscreteModel m;
  m.T = spec.T;
  m.nx = nx;
  m.nz = spec.nz;
  m.prior = mx[spec.T];
  m.reverse.resize(spec.T);
  for (int t = 1; t <= spec.T; ++t) {
    m.reverse[t - 1].assign(nx * nx, 0.0);
    for (int j = 0; j < nx; ++j) {
      double denom = mx[t][j];
      double s = 0.0;
      for (int i = 0; i < nx; ++i) {
        const double v = denom > 0.0 ? mx[t - 1][i] * spec.forward[t - 1][i * nx + j] / denom
                                     : 1.0 / nx;
        m.reverse[t - 1][j * nx + i] = v;
        s += v;
      }
      for (int i = 0; i < nx; ++i) m.reverse[t - 1][j * nx + i] /= s;
    }
  }
  m.latent = latent_table(spec);
  m.apply_floor();
  m.validate();
  return m;
}

double DiscreteJoint::total_mass() const {
  double s = 0.0;
  for (double v : table) s += v;
  return s;
}

std::size_t DiscreteJoint::index(const std::vector<int>& xs, std::size_t z) const {
  std::size_t idx = 0;
  for (int t = 0; t <= T; ++t) idx = idx * nx + xs[t];
  return idx * NZ + z;
}

std::vector<double> DiscreteJoint::marginal_x(int t) const {
  std::vector<double> out(nx, 0.0);
  const std::size_t below = [&] {
    std::size_t b = NZ;
    for (int s = t + 1; s <= T; ++s) b *= nx;
    return b;
  }();
  const std::size_t above = table.size() / (below * nx);
  for (std::size_t hi = 0; hi < above; ++hi)
    for (int j = 0; j < nx; ++j) {
      const double* base = table.data() + (hi * nx + j) * below;
      double s = 0.0;
      for (std::size_t lo = 0; lo < below; ++lo) s += base[lo];
      out[j] += s;
    }
  return out;
}

std::vector<double> DiscreteJoint::marginal_xz(int t) const {
  std::vector<double> out(nx * NZ, 0.0);
  std::size_t mid = 1;  // x_{t+1..T} block between x_t and z
  for (int s = t + 1; s <= T; ++s) mid *= nx;
  const std::size_t above = table.size() / (NZ * mid * nx);
  for (std::size_t hi = 0; hi < above; ++hi)
    for (int j = 0; j < nx; ++j)
      for (std::size_t m = 0; m < mid; ++m) {
        const double* base = table.data() + (((hi * nx + j) * mid) + m) * NZ;
        for (std::size_t z = 0; z < NZ; ++z) out[j * NZ + z] += base[z];
      }
  return out;
}

std::vector<double> DiscreteJoint::marginal_xx(int t) const {
  if (t < 1) throw std::invalid_argument("marginal_xx: t must be >= 1");
  std::vector<double> out(nx * nx, 0.0);
  std::size_t below = NZ;
  for (int s = t + 1; s <= T; ++s) below *= nx;
  const std::size_t above = table.size() / (below * nx * nx);
  for (std::size_t hi = 0; hi < above; ++hi)
    for (int i = 0; i < nx; ++i)
      for (int j = 0; j < nx; ++j) {
        const double* base = table.data() + ((hi * nx + i) * nx + j) * below;
        double s = 0.0;
        for (std::size_t lo = 0; lo < below; ++lo) s += base[lo];
        out[i * nx + j] += s;
      }
  return out;
}

std::vector<double> DiscreteJoint::marginal_xxz(int t) const {
  if (t < 1) throw std::invalid_argument("marginal_xxz: t must be >= 1");
  std::vector<double> out(nx * nx * NZ, 0.0);
  std::size_t mid = 1;
  for (int s = t + 1; s <= T; ++s) mid *= nx;
  const std::size_t above = table.size() / (mid * NZ * nx * nx);
  for (std::size_t hi = 0; hi < above; ++hi)
    for (int i = 0; i < nx; ++i)
      for (int j = 0; j < nx; ++j)
        for (std::size_t m = 0; m < mid; ++m) {
          const double* base = table.data() + ((((hi * nx + i) * nx + j) * mid) + m) * NZ;
          for (std::size_t z = 0; z < NZ; ++z) out[(i * nx + j) * NZ + z] += base[z];
        }
  return out;
}

std::vector<double> DiscreteJoint::marginal_x0x(int t) const {
  std::vector<double> out(nx * nx, 0.0);
  std::vector<int> xs(T + 1, 0);
  // generic walk; tables are small enough that decode cost does not matter here
  const std::size_t n = table.size();
  for (std::size_t idx = 0; idx < n; ++idx) {
    std::size_t rem = idx / NZ;
    for (int s = T; s >= 0; --s) {
      xs[s] = static_cast<int>(rem % nx);
      rem /= nx;
    }
    out[xs[0] * nx + xs[t]] += table[idx];
  }
  return out;
}

DiscreteJoint build_joint(const DiscreteChainSpec& spec) {
  spec.validate();
  const std::size_t NZ = spec.num_latent_states();
  std::size_t size = NZ;
  for (int t = 0; t <= spec.T; ++t) {
    size *= spec.nx;
    if (size > kSizeCap) throw std::invalid_argument("build_joint: state space exceeds cap");
  }
  DiscreteJoint J;
  J.T = spec.T;
  J.nx = spec.nx;
  J.nz = spec.nz;
  J.NZ = NZ;
  J.table.assign(size, 0.0);
  const auto qz = latent_table(spec);
  std::vector<int> xs(spec.T + 1, 0);
  for (std::size_t idx = 0; idx < size; ++idx) {
    const std::size_t z = idx % NZ;
    std::size_t rem = idx / NZ;
    for (int s = spec.T; s >= 0; --s) {
      xs[s] = static_cast<int>(rem % spec.nx);
      rem /= spec.nx;
    }
    double p = spec.q0[xs[0]] * qz[xs[0] * NZ + z];
    for (int t = 1; t <= spec.T; ++t) p *= spec.forward[t - 1][xs[t - 1] * spec.nx + xs[t]];
    J.table[idx] = p;
  }
  return J;
}

DiscreteJoint build_joint(const DiscreteModel& model) {
  model.validate();
  const std::size_t NZ = model.num_latent_states();
  std::size_t size = NZ;
  for (int t = 0; t <= model.T; ++t) {
    size *= model.nx;
    if (size > kSizeCap) throw std::invalid_argument("build_joint: state space exceeds cap");
  }
  DiscreteJoint J;
  J.T = model.T;
  J.nx = model.nx;
  J.nz = model.nz;
  J.NZ = NZ;
  J.table.assign(size, 0.0);
  std::vector<int> xs(model.T + 1, 0);
  for (std::size_t idx = 0; idx < size; ++idx) {
    const std::size_t z = idx % NZ;
    std::size_t rem = idx / NZ;
    for (int s = model.T; s >= 0; --s) {
      xs[s] = static_cast<int>(rem % model.nx);
      rem /= model.nx;
    }
    double p = model.prior[xs[model.T]] * model.latent[xs[0] * NZ + z];
    for (int t = 1; t <= model.T; ++t) p *= model.reverse[t - 1][xs[t] * model.nx + xs[t - 1]];
    J.table[idx] = p;
  }
  return J;
}

ModelConditionals derive_conditionals(const DiscreteModel& model) {
  const DiscreteJoint J = build_joint(model);
  const int nx = model.nx;
  const std::size_t NZ = J.NZ;
  ModelConditionals C;
  C.cond_c.resize(model.T);
  C.cond_u.resize(model.T);
  C.pz_x.resize(model.T + 1);
  C.marg_x.resize(model.T + 1);
  for (int t = 0; t <= model.T; ++t) {
    C.marg_x[t] = J.marginal_x(t);
    const auto mxz = J.marginal_xz(t);
    C.pz_x[t].assign(nx * NZ, 0.0);
    for (int j = 0; j < nx; ++j)
      for (std::size_t z = 0; z < NZ; ++z)
        C.pz_x[t][j * NZ + z] = mxz[j * NZ + z] / C.marg_x[t][j];
  }
  for (int t = 1; t <= model.T; ++t) {
    const auto m3 = J.marginal_xxz(t);
    const auto m2 = J.marginal_xx(t);
    C.cond_c[t - 1].assign(static_cast<std::size_t>(nx) * NZ * nx, 0.0);
    C.cond_u[t - 1].assign(nx * nx, 0.0);
    for (int j = 0; j < nx; ++j) {
      for (std::size_t z = 0; z < NZ; ++z) {
        double denom = 0.0;
        for (int i = 0; i < nx; ++i) denom += m3[(i * nx + j) * NZ + z];
        for (int i = 0; i < nx; ++i)
          C.cond_c[t - 1][(j * NZ + z) * nx + i] = m3[(i * nx + j) * NZ + z] / denom;
      }
      double denom = 0.0;
      for (int i = 0; i < nx; ++i) denom += m2[i * nx + j];
      for (int i = 0; i < nx; ++i) C.cond_u[t - 1][j * nx + i] = m2[i * nx + j] / denom;
    }
  }
  return C;
}

double verify_decompositions(const DiscreteModel& model, double pz_shift) {
  const DiscreteJoint J = build_joint(model);
  ModelConditionals C = derive_conditionals(model);
  if (pz_shift > 0.0) {
    for (int t = 1; t <= model.T; ++t) {
      auto& tab = C.pz_x[t];
      for (int j = 0; j < model.nx; ++j) {
        double s = 0.0;
        for (std::size_t z = 0; z < J.NZ; ++z) s += (tab[j * J.NZ + z] += pz_shift);
        for (std::size_t z = 0; z < J.NZ; ++z) tab[j * J.NZ + z] /= s;
      }
    }
  }
  const int nx = model.nx;
  const std::size_t NZ = J.NZ;
  double worst = 0.0;
  std::vector<int> xs(model.T + 1, 0);
  for (std::size_t idx = 0; idx < J.size(); ++idx) {
    const std::size_t z = idx % NZ;
    std::size_t rem = idx / NZ;
    for (int s = model.T; s >= 0; --s) {
      xs[s] = static_cast<int>(rem % nx);
      rem /= nx;
    }
    for (int t = 0; t <= model.T; ++t) {
      double p = model.prior[xs[model.T]] * C.pz_x[t][xs[t] * NZ + z];
      for (int i = 1; i <= t; ++i) p *= C.cond_c[i - 1][(xs[i] * NZ + z) * nx + xs[i - 1]];
      for (int i = t + 1; i <= model.T; ++i) p *= C.cond_u[i - 1][xs[i] * nx + xs[i - 1]];
      worst = std::max(worst, std::abs(p - J.table[idx]));
    }
  }
  return worst;
}

double verify_marginal_invariance(const DiscreteModel& model) {
  const ModelConditionals C = derive_conditionals(model);
  const int nx = model.nx;
  const std::size_t NZ = model.num_latent_states();
  // assemble each decomposition p^s as its own table, then compare x_t marginals
  std::vector<std::vector<double>> marg(model.T + 1);  // [s] -> concatenated marginals
  for (int s = 0; s <= model.T; ++s) {
    DiscreteJoint Js;
    Js.T = model.T;
    Js.nx = nx;
    Js.nz = model.nz;
    Js.NZ = NZ;
    std::size_t size = NZ;
    for (int t = 0; t <= model.T; ++t) size *= nx;
    Js.table.assign(size, 0.0);
    std::vector<int> xs(model.T + 1, 0);
    for (std::size_t idx = 0; idx < size; ++idx) {
      const std::size_t z = idx % NZ;
      std::size_t rem = idx / NZ;
      for (int q = model.T; q >= 0; --q) {
        xs[q] = static_cast<int>(rem % nx);
        rem /= nx;
      }
      double p = model.prior[xs[model.T]] * C.pz_x[s][xs[s] * NZ + z];
      for (int i = 1; i <= s; ++i) p *= C.cond_c[i - 1][(xs[i] * NZ + z) * nx + xs[i - 1]];
      for (int i = s + 1; i <= model.T; ++i) p *= C.cond_u[i - 1][xs[i] * nx + xs[i - 1]];
      Js.table[idx] = p;
    }
    marg[s].reserve((model.T + 1) * nx);
    for (int t = 0; t <= model.T; ++t) {
      const auto m = Js.marginal_x(t);
      marg[s].insert(marg[s].end(), m.begin(), m.end());
    }
  }
  double worst = 0.0;
  for (int s = 1; s <= model.T; ++s)
    for (std::size_t i = 0; i < marg[0].size(); ++i)
      worst = std::max(worst, std::abs(marg[s][i] - marg[0][i]));
  return worst;
}

double verify_resampling_invariance(const DiscreteModel& model) {
  const ModelConditionals C = derive_conditionals(model);
  const int nx = model.nx;
  const std::size_t NZ = model.num_latent_states();
  const auto& mx0 = C.marg_x[0];
  double worst = 0.0;
  for (int t = 1; t <= model.T; ++t) {
    // draw z ~ p(z|x_t) at step t, then run conditional kernels down to x_0
    std::vector<double> w(nx * NZ, 0.0);
    for (int j = 0; j < nx; ++j)
      for (std::size_t z = 0; z < NZ; ++z)
        w[j * NZ + z] = C.marg_x[t][j] * C.pz_x[t][j * NZ + z];
    for (int i = t; i >= 1; --i) {
      std::vector<double> w2(nx * NZ, 0.0);
      for (int j = 0; j < nx; ++j)
        for (std::size_t z = 0; z < NZ; ++z) {
          const double wv = w[j * NZ + z];
          if (wv == 0.0) continue;
          for (int i2 = 0; i2 < nx; ++i2)
            w2[i2 * NZ + z] += wv * C.cond_c[i - 1][(j * NZ + z) * nx + i2];
        }
      w.swap(w2);
    }
    for (int i = 0; i < nx; ++i) {
      double m = 0.0;
      for (std::size_t z = 0; z < NZ; ++z) m += w[i * NZ + z];
      worst = std::max(worst, std::abs(m - mx0[i]));
    }
  }
  return worst;
}

double vb_direct(const DiscreteChainSpec& spec, const DiscreteModel& model) {
  spec.validate();
  if (spec.T != model.T || spec.nx != model.nx || spec.nz != model.nz)
    throw std::invalid_argument("vb_direct: spec/model dimension mismatch");
  const DiscreteJoint Jq = build_joint(spec);
  const DiscreteJoint Jp = build_joint(model);
  const auto G = chain_marginals(spec);
  const int nx = spec.nx;
  const std::size_t NZ = Jq.NZ;
  const auto qz = latent_table(spec);

  double vb = 0.0;
  std::vector<int> xs(spec.T + 1, 0);
  for (std::size_t idx = 0; idx < Jq.size(); ++idx) {
    const double qw = Jq.table[idx];
    if (qw == 0.0) continue;
    const std::size_t z = idx % NZ;
    std::size_t rem = idx / NZ;
    for (int s = spec.T; s >= 0; --s) {
      xs[s] = static_cast<int>(rem % nx);
      rem /= nx;
    }
    if (Jp.table[idx] <= 0.0)
      throw std::domain_error("vb_direct: model assigns zero mass on data support");
    double num = std::log(qz[xs[0] * NZ + z]);
    for (int t = 2; t <= spec.T; ++t) {
      // q(x_{t-1}|x_t, x_0) by Bayes inside the forward chain
      const double post = G[t - 1][xs[0] * nx + xs[t - 1]] *
                          spec.forward[t - 1][xs[t - 1] * nx + xs[t]] /
                          G[t][xs[0] * nx + xs[t]];
      num += std::log(post);
    }
    num += std::log(G[spec.T][xs[0] * nx + xs[spec.T]]);
    vb += qw * (num - std::log(Jp.table[idx]));
  }
  return vb;
}

double model_nll(const DiscreteChainSpec& spec, const DiscreteModel& model) {
  const DiscreteJoint Jp = build_joint(model);
  const auto px0 = Jp.marginal_x(0);
  double nll = 0.0;
  for (int a = 0; a < spec.nx; ++a)
    if (spec.q0[a] > 0.0) nll -= spec.q0[a] * std::log(px0[a]);
  return nll;
}

VbTerms vb_prop1(const DiscreteChainSpec& spec, const DiscreteModel& model,
                 const WeightSchedule& w) {
  spec.validate();
  if (spec.T != model.T || spec.nx != model.nx || spec.nz != model.nz)
    throw std::invalid_argument("vb_prop1: spec/model dimension mismatch");
  if (w.T() != spec.T) throw std::invalid_argument("vb_prop1: weight schedule length mismatch");

  const ModelConditionals C = derive_conditionals(model);
  const auto G = chain_marginals(spec);
  const auto qz = latent_table(spec);
  const int nx = spec.nx;
  const std::size_t NZ = spec.num_latent_states();

  VbTerms out;
  for (int t = 1; t <= spec.T; ++t) {
    const double At = w.At(t);
    const auto& pc = C.cond_c[t - 1];
    const auto& pu = C.cond_u[t - 1];

    // log Z_t(x_t, z) by exact summation over x_{t-1}, powers in log space.
    // Degenerate weights leave the hybrid equal to one factor, so Z_t is 1
    // exactly; skipping the exp/log round trip keeps the term at literal zero.
    const bool degenerate = At == 0.0 || At == 1.0;
    std::vector<double> logZ(nx * NZ, 0.0);
    if (!degenerate) {
      for (int j = 0; j < nx; ++j)
        for (std::size_t z = 0; z < NZ; ++z) {
          double Z = 0.0;
          for (int i = 0; i < nx; ++i)
            Z += std::exp(At * std::log(pc[(j * NZ + z) * nx + i]) +
                          (1.0 - At) * std::log(pu[j * nx + i]));
          logZ[j * NZ + z] = std::log(Z);
        }
    }

    // denoising KL term under q(x_0, x_{t-1}, x_t, z)
    for (int a = 0; a < nx; ++a) {
      if (spec.q0[a] == 0.0) continue;
      for (int i = 0; i < nx; ++i) {
        const double gi = G[t - 1][a * nx + i];
        if (gi == 0.0) continue;
        for (int j = 0; j < nx; ++j) {
          const double f = spec.forward[t - 1][i * nx + j];
          if (f == 0.0) continue;
          const double wq = spec.q0[a] * gi * f;
          const double lq =
              t == 1 ? 0.0 : std::log(gi * f / G[t][a * nx + j]);
          for (std::size_t z = 0; z < NZ; ++z) {
            const double qzv = qz[a * NZ + z];
            if (qzv == 0.0) continue;
            const double lhyb = At * std::log(pc[(j * NZ + z) * nx + i]) +
                                (1.0 - At) * std::log(pu[j * nx + i]) - logZ[j * NZ + z];
            out.denoise += wq * qzv * (lq - lhyb);
          }
        }
      }
    }

    // -E[log Z_t] under q(x_t, z)
    for (int a = 0; a < nx; ++a)
      for (int j = 0; j < nx; ++j) {
        const double wj = spec.q0[a] * G[t][a * nx + j];
        if (wj == 0.0) continue;
        for (std::size_t z = 0; z < NZ; ++z)
          out.lognorm -= wj * qz[a * NZ + z] * logZ[j * NZ + z];
      }

    // alpha_t E[KL(q(z|x_0) || p(z|x_t))]
    const double at = w.alpha[t - 1];
    if (at > 0.0) {
      for (int a = 0; a < nx; ++a)
        for (int j = 0; j < nx; ++j) {
          const double wj = spec.q0[a] * G[t][a * nx + j];
          if (wj == 0.0) continue;
          out.repkl += at * wj * kl_rows(&qz[a * NZ], &C.pz_x[t][j * NZ], NZ);
        }
    }
  }

  // E[log q(x_T|x_0) / p(x_T)]
  for (int a = 0; a < nx; ++a)
    for (int j = 0; j < nx; ++j) {
      const double wj = spec.q0[a] * G[spec.T][a * nx + j];
      if (wj == 0.0) continue;
      out.prior += wj * std::log(G[spec.T][a * nx + j] / model.prior[j]);
    }
  return out;
}

LognormBounds verify_lognorm_bounds(const DiscreteChainSpec& spec, const DiscreteModel& model,
                                    const WeightSchedule& w) {
  const ModelConditionals C = derive_conditionals(model);
  const auto G = chain_marginals(spec);
  const auto qz = latent_table(spec);
  const int nx = spec.nx;
  const std::size_t NZ = spec.num_latent_states();

  LognormBounds out;
  for (int t = 1; t <= spec.T; ++t) {
    const double At = w.At(t);
    const auto& pc = C.cond_c[t - 1];
    const auto& pu = C.cond_u[t - 1];
    for (int a = 0; a < nx; ++a) {
      if (spec.q0[a] == 0.0) continue;
      for (int j = 0; j < nx; ++j) {
        const double wj = spec.q0[a] * G[t][a * nx + j];
        if (wj == 0.0) continue;
        for (std::size_t z = 0; z < NZ; ++z) {
          const double ww = wj * qz[a * NZ + z];
          if (ww == 0.0) continue;
          double Z = 0.0, kl_uc = 0.0, kl_cu = 0.0;
          for (int i = 0; i < nx; ++i) {
            const double c = pc[(j * NZ + z) * nx + i];
            const double u = pu[j * nx + i];
            if (At != 0.0 && At != 1.0)
              Z += std::exp(At * std::log(c) + (1.0 - At) * std::log(u));
            kl_uc += u * std::log(u / c);
            kl_cu += c * std::log(c / u);
          }
          if (At != 0.0 && At != 1.0) out.neg_log_z -= ww * std::log(Z);
          out.upper_uc += ww * At * kl_uc;
          out.upper_cu += ww * (1.0 - At) * kl_cu;
        }
      }
    }
  }
  return out;
}

double verify_multilatent_kl(const DiscreteChainSpec& spec, const DiscreteModel& model) {
  spec.validate();
  const ModelConditionals C = derive_conditionals(model);
  const auto qz = latent_table(spec);
  const int nx = spec.nx;
  const std::size_t NZ = spec.num_latent_states();
  const int L = static_cast<int>(spec.nz.size());

  // suffix sizes: block[l] = product of nz[l..L-1]
  std::vector<std::size_t> block(L + 1, 1);
  for (int l = L - 1; l >= 0; --l) block[l] = block[l + 1] * spec.nz[l];

  double worst = 0.0;
  for (int t = 1; t <= spec.T; ++t) {
    for (int a = 0; a < nx; ++a)
      for (int j = 0; j < nx; ++j) {
        const double kl_joint = kl_rows(&qz[a * NZ], &C.pz_x[t][j * NZ], NZ);

        double chain = 0.0;
        for (int l = 0; l < L; ++l) {
          // enumerate prefixes z_{<l}
          const std::size_t nprefix = NZ / block[l];
          for (std::size_t pre = 0; pre < nprefix; ++pre) {
            // q-weight of the prefix z_{<l} under conditional independence;
            // prefix digits are row-major z_0 .. z_{l-1}
            double wpre = 1.0;
            std::size_t r = pre;
            for (int m = 0; m < l; ++m) {
              std::size_t div = 1;
              for (int k = m + 1; k < l; ++k) div *= spec.nz[k];
              const int zm = static_cast<int>(r / div);
              r %= div;
              wpre *= spec.encoders[m][a * spec.nz[m] + zm];
            }
            if (wpre == 0.0) continue;

            // p(z_l | x_t=j, z_{<l}) and the matching q(z_l|x_0=a)
            double denom = 0.0;
            std::vector<double> pnum(spec.nz[l], 0.0);
            for (int zl = 0; zl < spec.nz[l]; ++zl) {
              const std::size_t base = (pre * spec.nz[l] + zl) * block[l + 1];
              double s = 0.0;
              for (std::size_t suf = 0; suf < block[l + 1]; ++suf)
                s += C.pz_x[t][j * NZ + base + suf];
              pnum[zl] = s;
              denom += s;
            }
            double kl_l = 0.0;
            for (int zl = 0; zl < spec.nz[l]; ++zl) {
              const double qv = spec.encoders[l][a * spec.nz[l] + zl];
              if (qv > 0.0) kl_l += qv * std::log(qv / (pnum[zl] / denom));
            }
            chain += wpre * kl_l;
          }
        }
        worst = std::max(worst, std::abs(kl_joint - chain));
      }
  }
  return worst;
}

}  // namespace repdiff

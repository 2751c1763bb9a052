#include "collapse_lab/collapse.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <thread>

#include "collapse_lab/errors.hpp"
#include "collapse_lab/trainer.hpp"

namespace collapse_lab {

namespace {

HessianTest hessian_at(double zeta_max, double eta_enc, double level) {
  // level = beta * eta_dec^2 = eta_enc^2 * c. The rationalized form keeps the
  // sign identical to the collapse comparison zeta_max^2 <= level.
  const double s2 = eta_enc * eta_enc;
  const double c = level / s2;
  const double root = std::sqrt((s2 - c) * (s2 - c) + 4.0 * zeta_max * zeta_max);
  const double gap = level - zeta_max * zeta_max;
  HessianTest h;
  h.min_quadratic = 4.0 * gap / (s2 + c + root);
  h.psd = gap >= 0.0;
  return h;
}

CollapseRegime regime_of(const DataSpectrum& sp, const std::vector<bool>& collapsed) {
  const bool all = std::all_of(collapsed.begin(), collapsed.end(), [](bool b) { return b; });
  if (all) return CollapseRegime::Complete;
  const int signal = std::min(static_cast<int>(collapsed.size()), sp.nonzero);
  for (int i = 0; i < signal; ++i)
    if (collapsed[i]) return CollapseRegime::Partial;
  return CollapseRegime::None;
}

}  // namespace

std::string to_string(CollapseRegime r) {
  switch (r) {
    case CollapseRegime::None: return "none";
    case CollapseRegime::Partial: return "partial";
    case CollapseRegime::Complete: return "complete";
  }
  return "unknown";
}

HessianTest hessian_origin_test(const DataSpectrum& sp, const Hyperparams& hp) {
  hp.validate();
  const double zmax = sp.min_dim() > 0 ? sp.zeta(0) : 0.0;
  return hessian_at(zmax, hp.eta_enc, hp.collapse_level());
}

CollapseReport predict(const DataSpectrum& sp, const Hyperparams& hp) {
  hp.validate();
  const int d1 = hp.latent_dim;
  const double zmax = sp.min_dim() > 0 ? sp.zeta(0) : 0.0;
  CollapseReport rep;
  rep.collapsed.assign(d1, true);

  if (hp.decvar_mode == Mode::Fixed) {
    const double s = hp.eta_dec * hp.eta_dec;
    rep.decoder_variance = s;
    rep.mode_thresholds = sp.zeta.cwiseAbs2() / s;
    for (int i = 0; i < d1; ++i) {
      const double z = zeta_or_zero(sp, i);
      rep.collapsed[i] = !(z * z > hp.collapse_level());
    }
    const HessianTest h = hessian_at(zmax, hp.eta_enc, hp.collapse_level());
    rep.hessian_psd = h.psd;
    rep.min_hessian_quadratic = h.min_quadratic;
  } else {
    const DecVarSolution sol = solve_decoder_variance(sp, hp);
    rep.mode_thresholds = Vector::Zero(sp.min_dim());
    const Vector b = decvar_thresholds(sp, hp);
    rep.mode_thresholds.head(b.size()) = b;
    const bool unique = !sol.tends_to_zero && sol.regime != DecVarRegime::BoundaryInterval;
    rep.decoder_variance = sol.s_star;
    if (unique) {
      for (int i = 0; i < d1; ++i) {
        const double z = zeta_or_zero(sp, i);
        rep.collapsed[i] = !(z * z > hp.beta * sol.s_star);
      }
      const HessianTest h = hessian_at(zmax, hp.eta_enc, hp.beta * sol.s_star);
      rep.hessian_psd = h.psd;
      rep.min_hessian_quadratic = h.min_quadratic;
    } else {
      // Every nonzero mode survives for s inside the minimizing set.
      for (int i = 0; i < d1; ++i) rep.collapsed[i] = !(zeta_or_zero(sp, i) > 0.0);
      const HessianTest h = hessian_at(zmax, hp.eta_enc, hp.beta * 0.5 * sol.s_star);
      rep.hessian_psd = h.psd;
      rep.min_hessian_quadratic = h.min_quadratic;
    }
    rep.decvar = sol;
  }
  rep.surviving = static_cast<int>(std::count(rep.collapsed.begin(), rep.collapsed.end(), false));
  rep.regime = regime_of(sp, rep.collapsed);
  return rep;
}

double numeric_hessian_check(const DataSpectrum& sp, const Hyperparams& hp, int n_directions, std::uint64_t seed,
                             bool directed) {
  hp.validate();
  if (n_directions < 1) throw DomainError("need at least one direction");
  Hyperparams fixed = hp;
  fixed.sigma_mode = Mode::Fixed;
  fixed.decvar_mode = Mode::Fixed;
  const Objective obj(sp, fixed);
  ParamLayout layout;
  layout.learn_sigma = false;
  const ModelParams origin = ModelParams::zeros(sp.ambient_dim, sp.target_dim, fixed, layout);
  const ReducedProblem rp = reduce_to_factorization(sp, fixed, origin.sigma());
  const double f0 = obj.loss(origin);
  const double t = 1e-3;
  const double scale = 2.0 * hp.eta_dec * hp.eta_dec;

  // Unit direction in (U, V); W follows from V.
  auto curvature = [&](const Matrix& dU, const Matrix& dV) {
    const double norm = std::sqrt(dU.squaredNorm() + dV.squaredNorm());
    ModelParams plus = origin;
    ModelParams minus = origin;
    const Matrix u = dU / norm;
    const Matrix w = rp.W_from_V(dV / norm);
    plus.U = t * u;
    plus.W = t * w;
    minus.U = -t * u;
    minus.W = -t * w;
    return scale * (obj.loss(plus) - 2.0 * f0 + obj.loss(minus)) / (t * t);
  };

  const int d1 = hp.latent_dim;
  const int d2 = sp.target_dim;
  const int d0 = sp.rank;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  double best = std::numeric_limits<double>::infinity();
  for (int k = 0; k < n_directions; ++k) {
    Matrix dU(d2, d1);
    Matrix dV(d0, d1);
    for (Eigen::Index i = 0; i < dU.size(); ++i) dU.data()[i] = normal(rng);
    for (Eigen::Index i = 0; i < dV.size(); ++i) dV.data()[i] = normal(rng);
    best = std::min(best, curvature(dU, dV));
  }

  if (directed && sp.min_dim() > 0) {
    Matrix u1 = Matrix::Zero(d2, d1);
    Matrix v1 = Matrix::Zero(d0, d1);
    u1.col(0) = sp.F.col(0);
    v1.col(0) = sp.G.col(0);
    auto along = [&](double a) { return curvature(std::cos(a) * u1, std::sin(a) * v1); };
    const double pi = std::acos(-1.0);
    const int steps = 64;
    int arg = 0;
    double val = std::numeric_limits<double>::infinity();
    for (int k = 0; k < steps; ++k) {
      const double v = along(pi * k / steps);
      if (v < val) {
        val = v;
        arg = k;
      }
    }
    double lo = pi * (arg - 1) / steps;
    double hi = pi * (arg + 1) / steps;
    const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = hi - invphi * (hi - lo);
    double x2 = lo + invphi * (hi - lo);
    double f1 = along(x1);
    double f2 = along(x2);
    for (int it = 0; it < 80; ++it) {
      if (f1 <= f2) {
        hi = x2;
        x2 = x1;
        f2 = f1;
        x1 = hi - invphi * (hi - lo);
        f1 = along(x1);
      } else {
        lo = x1;
        x1 = x2;
        f1 = f2;
        x2 = lo + invphi * (hi - lo);
        f2 = along(x2);
      }
    }
    best = std::min({best, val, f1, f2});
  }
  return best;
}

std::vector<double> beta_grid(double lo, double hi, double step) {
  if (!(lo > 0.0) || !(step > 0.0) || !(hi >= lo)) throw DomainError("beta grid needs 0 < lo <= hi and step > 0");
  std::vector<double> out;
  const long count = static_cast<long>(std::floor((hi - lo) / step * (1.0 + 1e-12) + 1e-9)) + 1;
  for (long k = 0; k < count; ++k) out.push_back(lo + step * static_cast<double>(k));
  return out;
}

std::vector<SweepRow> beta_sweep(const DataSpectrum& sp, const Hyperparams& hp, const std::vector<double>& betas,
                                 unsigned threads) {
  hp.validate();
  for (std::size_t i = 0; i < betas.size(); ++i) {
    if (!(betas[i] > 0.0)) throw DomainError("beta grid must be strictly positive");
    if (i > 0 && !(betas[i] > betas[i - 1])) throw DomainError("beta grid must be strictly ascending");
  }

  std::vector<SweepRow> rows(betas.size());
  auto work = [&](std::size_t i) {
    Hyperparams h = hp;
    h.beta = betas[i];
    SweepRow& row = rows[i];
    row.beta = h.beta;
    const CollapseReport rep = predict(sp, h);
    row.rank = rep.surviving;
    row.decoder_variance = rep.decoder_variance;
    if (h.decvar_mode == Mode::Fixed) {
      row.regime = to_string(rep.regime);
      const GlobalMinimum gm = h.sigma_mode == Mode::Learnable ? theorem2_solution(sp, h) : theorem1_solution(sp, h);
      row.loss = gm.predicted_loss;
      row.sigma = gm.sigma;
    } else {
      const DecVarSolution& sol = *rep.decvar;
      row.regime = to_string(sol.regime);
      if (sol.tends_to_zero) {
        row.loss = -std::numeric_limits<double>::infinity();
        row.sigma = Vector::Constant(h.latent_dim, std::numeric_limits<double>::quiet_NaN());
      } else {
        row.loss = g_loss(sp, h, sol.s_star);
        h.eta_dec = std::sqrt(sol.s_star);
        row.sigma = h.sigma_mode == Mode::Learnable ? optimal_sigma(sp, h) : Vector::Constant(h.latent_dim, h.eta_enc);
      }
    }
    std::sort(row.sigma.data(), row.sigma.data() + row.sigma.size(), std::greater<>());
  };

  unsigned n = threads != 0 ? threads : std::max(1u, std::thread::hardware_concurrency());
  n = static_cast<unsigned>(std::min<std::size_t>(n, betas.size()));
  if (n <= 1) {
    for (std::size_t i = 0; i < betas.size(); ++i) work(i);
    return rows;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  for (unsigned t = 0; t < n; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < betas.size(); i = next++) {
        try {
          work(i);
        } catch (...) {
          if (!failed.exchange(true)) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
  return rows;
}

}  // namespace collapse_lab

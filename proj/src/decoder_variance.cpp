#include "collapse_lab/decoder_variance.hpp"

#include <algorithm>
#include <cmath>

#include "collapse_lab/errors.hpp"

namespace collapse_lab {

namespace {

constexpr double kBoundaryTol = 1e-12;
constexpr double kInf = std::numeric_limits<double>::infinity();

void check_beta(const Hyperparams& hp) {
  if (!(hp.beta > 0.0) || !std::isfinite(hp.beta)) throw DomainError("beta must be > 0");
  if (hp.latent_dim < 1) throw DomainError("latent dimension must be >= 1");
}

bool survives(const DataSpectrum& sp, const Hyperparams& hp, int i, double s) {
  if (i >= hp.latent_dim || i >= sp.min_dim()) return false;
  return sp.zeta(i) * sp.zeta(i) > hp.beta * s;
}

}  // namespace

std::string to_string(DecVarRegime r) {
  switch (r) {
    case DecVarRegime::IllPosedZero: return "ill_posed_zero";
    case DecVarRegime::BoundaryInterval: return "boundary_interval";
    case DecVarRegime::NoCollapse: return "no_collapse";
    case DecVarRegime::PartialCollapse: return "partial_collapse";
    case DecVarRegime::CompleteCollapse: return "complete_collapse";
  }
  return "unknown";
}

bool BetaInterval::contains(double beta) const {
  const bool above = lo_closed ? beta >= lo : beta > lo;
  const bool below = hi_closed ? beta <= hi : beta < hi;
  return above && below;
}

double g_loss(const DataSpectrum& sp, const Hyperparams& hp, double s) {
  check_beta(hp);
  if (!(s > 0.0)) throw DomainError("decoder variance s must be > 0");
  // Collapsed and surviving modes are summed separately so that nothing
  // cancels; the surviving terms only contribute their log part.
  double unexplained = sp.residual;
  double logs = 0.0;
  for (int i = 0; i < sp.min_dim(); ++i) {
    const double z2 = sp.zeta(i) * sp.zeta(i);
    if (survives(sp, hp, i, s))
      logs += hp.beta * (std::log(hp.beta * s / z2) - 1.0);
    else
      unexplained += z2;
  }
  return unexplained / (2.0 * s) - 0.5 * logs + 0.5 * sp.target_dim * std::log(s);
}

double stationarity_rhs(const DataSpectrum& sp, const Hyperparams& hp, double s) {
  check_beta(hp);
  double c = sp.residual;
  for (int i = 0; i < sp.min_dim(); ++i) {
    const double z2 = sp.zeta(i) * sp.zeta(i);
    c += survives(sp, hp, i, s) ? hp.beta * s : z2;
  }
  return c;
}

double g_derivative(const DataSpectrum& sp, const Hyperparams& hp, double s) {
  if (!(s > 0.0)) throw DomainError("decoder variance s must be > 0");
  return (sp.target_dim * s - stationarity_rhs(sp, hp, s)) / (2.0 * s * s);
}

namespace {

struct Breaks {
  int k1 = 0;                 // d^hat_1
  int ks = 0;                 // d^hat*
  std::vector<double> tail;   // tail[p] = sum_{p < i <= d^hat*} zeta_i^2 + residual, 1-based p
  std::vector<double> b;      // b[p], smallest beta at which mode p collapses
  bool exact_fit = false;     // no unexplained variance once d^hat_1 modes are used
  double critical = 0.0;      // d2 / d^hat_1
};

Breaks breaks_of(const DataSpectrum& sp, const Hyperparams& hp) {
  const EffectiveCounts counts = effective_counts(sp, hp.latent_dim);
  Breaks br;
  br.k1 = counts.nonzero_latent;
  br.ks = counts.nonzero;
  const int d2 = sp.target_dim;
  br.tail.assign(br.ks + 1, sp.residual);
  for (int p = br.ks - 1; p >= 0; --p) br.tail[p] = br.tail[p + 1] + sp.zeta(p) * sp.zeta(p);
  br.b.assign(br.k1 + 1, kInf);
  for (int p = 1; p <= br.k1; ++p) {
    const double z2 = sp.zeta(p - 1) * sp.zeta(p - 1);
    br.b[p] = d2 * z2 / (br.tail[p] + p * z2);
  }
  br.exact_fit = br.k1 > 0 && !(br.tail[br.k1] > 0.0);
  if (br.k1 > 0) br.critical = static_cast<double>(d2) / br.k1;
  if (br.exact_fit) br.b[br.k1] = br.critical;
  return br;
}

}  // namespace

Vector decvar_thresholds(const DataSpectrum& sp, const Hyperparams& hp) {
  check_beta(hp);
  const Breaks br = breaks_of(sp, hp);
  Vector out(br.k1);
  for (int p = 1; p <= br.k1; ++p) out(p - 1) = br.b[p];
  return out;
}

DecVarSolution solve_decoder_variance(const DataSpectrum& sp, const Hyperparams& hp) {
  check_beta(hp);
  const Breaks br = breaks_of(sp, hp);
  const int d2 = sp.target_dim;
  const int k1 = br.k1;
  const int ks = br.ks;
  const double beta = hp.beta;
  const std::vector<double>& tail = br.tail;
  const std::vector<double>& b = br.b;
  const bool exact_fit = br.exact_fit;
  const double critical = br.critical;
  const double total = tail[0];

  DecVarSolution sol;
  sol.nonzero = ks;
  sol.nonzero_latent = k1;
  sol.target_dim = d2;

  if (k1 == 0) {
    RegimeRow row;
    row.beta = BetaInterval{0.0, kInf, false, false};
    if (total > 0.0) {
      row.regime = DecVarRegime::CompleteCollapse;
      row.s_numerator = total;
      sol.regime = row.regime;
      sol.s_star = total / d2;
      sol.s_lo = sol.s_star;
    } else {
      row.regime = DecVarRegime::IllPosedZero;
      sol.regime = row.regime;
      sol.tends_to_zero = true;
    }
    sol.beta_interval = row.beta;
    sol.table.push_back(row);
    return sol;
  }

  auto s_for = [&](int p) { return tail[p] / (d2 - beta * p); };

  // Table, ordered by increasing beta.
  if (exact_fit) {
    RegimeRow ill;
    ill.regime = DecVarRegime::IllPosedZero;
    ill.surviving = k1;
    ill.beta = BetaInterval{0.0, critical, false, false};
    sol.table.push_back(ill);
    RegimeRow edge;
    edge.regime = DecVarRegime::BoundaryInterval;
    edge.surviving = k1;
    edge.beta = BetaInterval{critical, critical, true, true};
    sol.table.push_back(edge);
  } else {
    RegimeRow none;
    none.regime = DecVarRegime::NoCollapse;
    none.surviving = k1;
    none.beta = BetaInterval{0.0, b[k1], false, false};
    none.s_numerator = tail[k1];
    sol.table.push_back(none);
  }
  for (int p = k1 - 1; p >= 0; --p) {
    RegimeRow row;
    row.regime = p == 0 ? DecVarRegime::CompleteCollapse : DecVarRegime::PartialCollapse;
    row.surviving = p;
    row.beta = BetaInterval{b[p + 1], p == 0 ? kInf : b[p], true, false};
    if (exact_fit && p + 1 == k1) row.beta.lo_closed = false;
    row.s_numerator = tail[p];
    if (row.beta.lo < row.beta.hi) sol.table.push_back(row);
  }

  if (exact_fit && std::abs(beta - critical) <= kBoundaryTol * critical) {
    sol.regime = DecVarRegime::BoundaryInterval;
    sol.surviving = k1;
    sol.surviving_at_endpoint = k1 - 1;
    sol.s_star = sp.zeta(k1 - 1) * sp.zeta(k1 - 1) / beta;
    sol.s_lo = 0.0;
    sol.beta_interval = sol.table[1].beta;
    return sol;
  }
  if (exact_fit && beta < critical) {
    sol.regime = DecVarRegime::IllPosedZero;
    sol.surviving = k1;
    sol.surviving_at_endpoint = k1;
    sol.tends_to_zero = true;
    sol.beta_interval = sol.table[0].beta;
    return sol;
  }

  int p = 0;
  for (int q = 1; q <= k1; ++q)
    if (beta < b[q]) ++p;
  sol.surviving = p;
  sol.surviving_at_endpoint = p;
  sol.regime = p == 0    ? DecVarRegime::CompleteCollapse
               : p == k1 ? DecVarRegime::NoCollapse
                         : DecVarRegime::PartialCollapse;
  sol.s_star = s_for(p);
  sol.s_lo = sol.s_star;
  for (const RegimeRow& row : sol.table) {
    if (row.regime == sol.regime && row.surviving == p) {
      sol.beta_interval = row.beta;
      break;
    }
  }
  return sol;
}

SRange oracle_bracket(const DataSpectrum& sp, const Hyperparams& hp) {
  check_beta(hp);
  const double z1 = sp.min_dim() > 0 ? sp.zeta(0) * sp.zeta(0) : 0.0;
  const double s1 = z1 / hp.beta;
  SRange r;
  r.lo = 1e-8 * std::max(s1, 1.0);
  r.hi = std::max(s1 + sp.zeta.squaredNorm() + sp.residual, 1.0);
  return r;
}

double oracle_minimize_g(const DataSpectrum& sp, const Hyperparams& hp, SRange range, int grid_points) {
  if (!(range.lo > 0.0) || !(range.hi > range.lo)) throw DomainError("need 0 < s_lo < s_hi");
  if (grid_points < 3) throw DomainError("grid needs at least 3 points");
  const double a = std::log(range.lo);
  const double b = std::log(range.hi);
  auto f = [&](double t) { return g_loss(sp, hp, std::exp(t)); };

  int best = 0;
  double best_val = f(a);
  for (int k = 1; k < grid_points; ++k) {
    const double t = a + (b - a) * k / (grid_points - 1);
    const double v = f(t);
    if (v < best_val) {
      best_val = v;
      best = k;
    }
  }
  const double step = (b - a) / (grid_points - 1);
  double lo = a + step * std::max(best - 1, 0);
  double hi = a + step * std::min(best + 1, grid_points - 1);

  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = hi - invphi * (hi - lo);
  double x2 = lo + invphi * (hi - lo);
  double f1 = f(x1);
  double f2 = f(x2);
  for (int it = 0; it < 200 && hi - lo > 1e-13; ++it) {
    if (f1 <= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - invphi * (hi - lo);
      f1 = f(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + invphi * (hi - lo);
      f2 = f(x2);
    }
  }
  const double t = 0.5 * (lo + hi);
  // The endpoints can win when the minimum sits on the bracket edge.
  if (f(a) <= f(t) && best == 0) return range.lo;
  return std::exp(t);
}

}  // namespace collapse_lab

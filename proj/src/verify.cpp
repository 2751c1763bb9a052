#include "collapse_lab/verify.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>

#include "collapse_lab/decoder_variance.hpp"
#include "collapse_lab/errors.hpp"

namespace collapse_lab {

namespace {

double max_abs_diff(Vector a, Vector b, bool descending) {
  const Eigen::Index n = std::max(a.size(), b.size());
  a.conservativeResize(n);
  b.conservativeResize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!std::isfinite(a(i))) a(i) = 0.0;
    if (!std::isfinite(b(i))) b(i) = 0.0;
  }
  if (descending) {
    std::sort(a.data(), a.data() + n, std::greater<>());
    std::sort(b.data(), b.data() + n, std::greater<>());
  } else {
    std::sort(a.data(), a.data() + n);
    std::sort(b.data(), b.data() + n);
  }
  return (a - b).cwiseAbs().maxCoeff();
}

Vector padded(const Vector& v, Eigen::Index n) {
  Vector out = Vector::Zero(n);
  out.head(std::min(n, v.size())) = v.head(std::min(n, v.size()));
  return out;
}

}  // namespace

bool VerifyReport::all_passed() const {
  return !rows.empty() && std::all_of(rows.begin(), rows.end(), [](const VerifyRow& r) { return r.passed; });
}

std::vector<OracleInstance> oracle_instances(int count, std::uint64_t seed, bool learnable_decvar) {
  if (count < 1) throw DomainError("need at least one instance");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> dim(2, 8);
  std::uniform_real_distribution<double> beta(0.5, 10.0);
  std::uniform_real_distribution<double> eig(0.5, 3.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<OracleInstance> out;
  for (int id = 0; id < count; ++id) {
    OracleInstance inst;
    inst.id = id;
    const int d0 = dim(rng);
    const int d2 = dim(rng);
    const int dmin = std::min(d0, d2);
    const int choice[3] = {2, dmin, dmin + 2};
    inst.hp.latent_dim = choice[id % 3];
    inst.hp.beta = beta(rng);
    inst.hp.sigma_mode = Mode::Learnable;
    inst.hp.decvar_mode = learnable_decvar ? Mode::Learnable : Mode::Fixed;
    inst.noisy = learnable_decvar || id % 2 == 1;

    SyntheticSpec spec;
    spec.d0 = d0;
    spec.d2 = d2;
    spec.n = 400;
    spec.seed = rng();
    Vector a(d0);
    for (int i = 0; i < d0; ++i) a(i) = eig(rng);
    const Matrix q = random_orthogonal(d0, rng());
    spec.A = q * a.asDiagonal() * q.transpose();
    spec.A = 0.5 * (spec.A + spec.A.transpose());
    spec.M = Matrix(d2, d0);
    const double scale = std::sqrt(2.0 / d0) * 1.5;
    for (int i = 0; i < d2; ++i)
      for (int j = 0; j < d0; ++j) spec.M(i, j) = scale * normal(rng);

    Dataset ds = generate(spec);
    if (inst.noisy) {
      for (Eigen::Index i = 0; i < ds.Y.rows(); ++i)
        for (Eigen::Index j = 0; j < ds.Y.cols(); ++j) ds.Y(i, j) += 0.3 * normal(rng);
    }
    inst.data = center(ds).data;
    out.push_back(std::move(inst));
  }
  return out;
}

VerifyRow verify_instance(const OracleInstance& inst, const VerifyConfig& cfg) {
  const Hyperparams& hp = inst.hp;
  const DataSpectrum sp = compute_spectrum(inst.data);
  VerifyRow row;
  row.id = inst.id;
  row.d0 = sp.ambient_dim;
  row.d2 = sp.target_dim;
  row.d1 = hp.latent_dim;
  row.beta = hp.beta;
  row.decvar_error = std::numeric_limits<double>::quiet_NaN();

  Hyperparams analytic = hp;
  analytic.beta *= cfg.analytic_beta_scale;
  double s_star = analytic.eta_dec * analytic.eta_dec;
  if (hp.decvar_mode == Mode::Learnable) {
    const DecVarSolution sol = solve_decoder_variance(sp, analytic);
    if (sol.tends_to_zero || sol.regime == DecVarRegime::BoundaryInterval) {
      row.note = "decoder variance has no unique optimum (" + to_string(sol.regime) + ")";
      return row;
    }
    s_star = sol.s_star;
    analytic.eta_dec = std::sqrt(s_star);
    row.analytic_loss = g_loss(sp, analytic, s_star);
  } else {
    row.analytic_loss = min_vae_value(sp, analytic) + sp.residual / (2.0 * s_star);
  }

  const int d1 = hp.latent_dim;
  Vector expected_sv = Vector::Zero(d1);
  for (int i = 0; i < d1; ++i) {
    const double z = zeta_or_zero(sp, i);
    if (z * z > analytic.collapse_level()) expected_sv(i) = (z * z - analytic.collapse_level()) / z;
    if (std::abs(z * z - analytic.collapse_level()) < cfg.boundary_margin && i < sp.nonzero) row.relaxed = true;
  }
  const Vector expected_sigma = optimal_sigma(sp, analytic);

  try {
    const Objective obj(inst.data, hp);
    TrainConfig tc = cfg.train;
    tc.seed = cfg.train.seed + static_cast<std::uint64_t>(inst.id);
    const TrainResult tr = train(obj, ParamLayout::from(hp), tc);
    row.trained_loss = tr.final_loss;
    row.steps = tr.steps;
    row.loss_error = std::abs(row.analytic_loss - tr.final_loss) / (1.0 + std::abs(row.analytic_loss));
    const Vector learned_sv = product_singular_values(tr.params, sp);
    const Eigen::Index n = std::max<Eigen::Index>(learned_sv.size(), d1);
    row.singular_value_error = max_abs_diff(padded(learned_sv, n), padded(expected_sv, n), true);
    row.sigma_error = max_abs_diff(tr.params.sigma(), expected_sigma, false);
    if (hp.decvar_mode == Mode::Learnable)
      row.decvar_error = std::abs(std::exp(tr.params.log_s) - s_star) / s_star;
    if (!tr.converged) row.note = "gradient norm " + std::to_string(tr.grad_norm) + " above tolerance";
  } catch (const DivergenceError& e) {
    row.note = e.what();
    return row;
  }

  const double loss_tol = row.relaxed ? cfg.relaxed_tol : cfg.loss_tol;
  const double sv_tol = row.relaxed ? cfg.relaxed_tol : cfg.singular_value_tol;
  const double sigma_tol = row.relaxed ? cfg.relaxed_tol : cfg.sigma_tol;
  row.passed = row.loss_error <= loss_tol && row.singular_value_error <= sv_tol && row.sigma_error <= sigma_tol;
  if (hp.decvar_mode == Mode::Learnable)
    row.passed = row.passed && row.decvar_error <= (row.relaxed ? cfg.relaxed_tol : cfg.decvar_tol);
  return row;
}

VerifyReport run_verify(const VerifyConfig& cfg) {
  VerifyReport rep;
  for (const OracleInstance& inst : oracle_instances(cfg.instances, cfg.seed, cfg.learnable_decvar))
    rep.rows.push_back(verify_instance(inst, cfg));
  return rep;
}

}  // namespace collapse_lab

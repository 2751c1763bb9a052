#include "collapse_lab/trainer.hpp"

#include <cmath>
#include <random>

#include "collapse_lab/errors.hpp"

namespace collapse_lab {

namespace {

// Writes block into x at offset and advances it.
template <typename Block>
void put(Vector& x, Eigen::Index& at, const Block& block) {
  const Eigen::Index n = block.size();
  x.segment(at, n) = Eigen::Map<const Vector>(block.derived().data(), n);
  at += n;
}

template <typename Block>
void take(const Vector& x, Eigen::Index& at, Block& block) {
  const Eigen::Index n = block.size();
  Eigen::Map<Vector>(block.derived().data(), n) = x.segment(at, n);
  at += n;
}

Matrix uniform(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-0.1, 0.1);
  Matrix out(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) out(i, j) = dist(rng);
  return out;
}

}  // namespace

ParamLayout ParamLayout::from(const Hyperparams& hp, bool bias, bool ddv) {
  ParamLayout l;
  l.learn_sigma = hp.sigma_mode == Mode::Learnable;
  l.learn_s = hp.decvar_mode == Mode::Learnable;
  l.bias = bias;
  l.ddv = ddv;
  return l;
}

ModelParams ModelParams::zeros(int input_dim, int target_dim, const Hyperparams& hp, ParamLayout layout) {
  hp.validate();
  if (input_dim < 1 || target_dim < 1) throw ShapeError("dimensions must be >= 1");
  const int d1 = hp.latent_dim;
  ModelParams p;
  p.layout = layout;
  p.U = Matrix::Zero(target_dim, d1);
  p.W = Matrix::Zero(input_dim, d1);
  p.log_sigma = Vector::Constant(d1, std::log(hp.eta_enc));
  p.b_e = Vector::Zero(d1);
  p.b_d = Vector::Zero(target_dim);
  p.C = Matrix::Zero(d1, input_dim);
  p.f = Vector::Constant(d1, hp.eta_enc);
  p.log_s = 2.0 * std::log(hp.eta_dec);
  return p;
}

ModelParams ModelParams::random(int input_dim, int target_dim, const Hyperparams& hp, ParamLayout layout,
                                std::uint64_t seed) {
  ModelParams p = zeros(input_dim, target_dim, hp, layout);
  std::mt19937_64 rng(seed);
  p.U = uniform(p.U.rows(), p.U.cols(), rng);
  p.W = uniform(p.W.rows(), p.W.cols(), rng);
  if (layout.learn_sigma) p.log_sigma.setZero();
  if (layout.bias) {
    p.b_e = uniform(p.b_e.size(), 1, rng);
    p.b_d = uniform(p.b_d.size(), 1, rng);
  }
  if (layout.ddv) {
    p.C = uniform(p.C.rows(), p.C.cols(), rng);
    p.f.setOnes();
  }
  return p;
}

ModelParams ModelParams::from_minimum(const GlobalMinimum& gm, const Hyperparams& hp, ParamLayout layout) {
  ModelParams p = zeros(static_cast<int>(gm.W.rows()), static_cast<int>(gm.U.rows()), hp, layout);
  p.U = gm.U;
  p.W = gm.W;
  p.log_sigma = gm.sigma.array().log();
  p.f = gm.sigma;
  return p;
}

Vector ModelParams::flatten() const {
  Eigen::Index n = U.size() + W.size();
  if (layout.learn_sigma && !layout.ddv) n += log_sigma.size();
  if (layout.bias) n += b_e.size() + b_d.size();
  if (layout.ddv) n += C.size() + f.size();
  if (layout.learn_s) n += 1;
  Vector x(n);
  Eigen::Index at = 0;
  put(x, at, U);
  put(x, at, W);
  if (layout.learn_sigma && !layout.ddv) put(x, at, log_sigma);
  if (layout.bias) {
    put(x, at, b_e);
    put(x, at, b_d);
  }
  if (layout.ddv) {
    put(x, at, C);
    put(x, at, f);
  }
  if (layout.learn_s) x(at++) = log_s;
  return x;
}

void ModelParams::unflatten(const Vector& x) {
  Eigen::Index at = 0;
  take(x, at, U);
  take(x, at, W);
  if (layout.learn_sigma && !layout.ddv) take(x, at, log_sigma);
  if (layout.bias) {
    take(x, at, b_e);
    take(x, at, b_d);
  }
  if (layout.ddv) {
    take(x, at, C);
    take(x, at, f);
  }
  if (layout.learn_s) log_s = x(at++);
  if (at != x.size()) throw ShapeError("flat parameter vector has the wrong length");
}

Moments moments_of(const Dataset& ds) {
  const auto n = ds.n();
  if (n < 1) throw ShapeError("dataset has no samples");
  if (ds.Y.rows() != n) throw ShapeError("X and Y must have the same number of rows");
  const double inv = 1.0 / static_cast<double>(n);
  Moments m;
  m.A = inv * ds.X.transpose() * ds.X;
  m.mean_x = ds.X.colwise().mean().transpose();
  m.Cyx = inv * ds.Y.transpose() * ds.X;
  m.mean_y = ds.Y.colwise().mean().transpose();
  m.y2 = inv * ds.Y.squaredNorm();
  return m;
}

Moments moments_of(const DataSpectrum& sp) {
  Moments m;
  m.A = sp.P * sp.phi.asDiagonal() * sp.P.transpose();
  m.mean_x = Vector::Zero(sp.ambient_dim);
  m.Cyx = sp.Z * sp.phi.cwiseSqrt().asDiagonal() * sp.P.transpose();
  m.mean_y = Vector::Zero(sp.target_dim);
  m.y2 = sp.y_second_moment;
  return m;
}

Objective::Objective(const Dataset& ds, const Hyperparams& hp) : m_(moments_of(ds)), hp_(hp), X_(ds.X) {
  hp_.validate();
}

Objective::Objective(const DataSpectrum& sp, const Hyperparams& hp) : m_(moments_of(sp)), hp_(hp) {
  hp_.validate();
}

void Objective::check(const ModelParams& p) const {
  const int d1 = hp_.latent_dim;
  const int D0 = input_dim();
  const int d2 = target_dim();
  if (p.U.rows() != d2 || p.U.cols() != d1) throw ShapeError("U must be d2 x d1");
  if (p.W.rows() != D0 || p.W.cols() != d1) throw ShapeError("W must be D0 x d1");
  if (p.log_sigma.size() != d1) throw ShapeError("log_sigma must have d1 entries");
  if (p.b_e.size() != d1 || p.b_d.size() != d2) throw ShapeError("bias shapes do not match");
  if (p.layout.ddv) {
    if (p.C.rows() != d1 || p.C.cols() != D0 || p.f.size() != d1) throw ShapeError("C must be d1 x D0, f d1");
    if (!has_samples()) throw InvalidSpec("data-dependent variance needs the samples, not only the spectrum");
  }
}

double Objective::loss(const ModelParams& p) const { return evaluate(p, nullptr); }

double Objective::loss_and_grad(const ModelParams& p, ModelParams& grad) const {
  grad = p;
  return evaluate(p, &grad);
}

double Objective::evaluate(const ModelParams& p, ModelParams* grad) const {
  check(p);
  const int d1 = hp_.latent_dim;
  const int D0 = input_dim();
  const int d2 = target_dim();
  const bool bias = p.layout.bias;
  const double s = p.layout.learn_s ? std::exp(p.log_s) : hp_.eta_dec * hp_.eta_dec;
  const double enc2 = hp_.eta_enc * hp_.eta_enc;
  const double beta = hp_.beta;

  // Augmented input [x; 1] folds the encoder bias into W.
  Matrix Wa(D0 + 1, d1);
  Wa.topRows(D0) = p.W;
  if (bias)
    Wa.row(D0) = p.b_e.transpose();
  else
    Wa.row(D0).setZero();
  Matrix Aa(D0 + 1, D0 + 1);
  Aa.topLeftCorner(D0, D0) = m_.A;
  Aa.topRightCorner(D0, 1) = m_.mean_x;
  Aa.bottomLeftCorner(1, D0) = m_.mean_x.transpose();
  Aa(D0, D0) = 1.0;
  Matrix Ca(d2, D0 + 1);
  Ca.leftCols(D0) = m_.Cyx;
  Ca.col(D0) = m_.mean_y;
  Vector mua(D0 + 1);
  mua.head(D0) = m_.mean_x;
  mua(D0) = 1.0;
  const Vector bd = bias ? p.b_d : Vector::Zero(d2);

  const Matrix AW = Aa * Wa;
  const Matrix M = Wa.transpose() * AW;
  const Vector mh = Wa.transpose() * mua;
  const Vector col_sq = p.U.colwise().squaredNorm().transpose();

  // E sigma_i(x)^2 and E log(sigma_i(x)^2 / eta_enc^2).
  Vector var(d1);
  Vector mean_log(d1);
  Matrix inv_sigma;  // n x d1, 1 / (C_i x + f_i), ddv only
  if (p.layout.ddv) {
    const Matrix CA = p.C * m_.A;
    const Vector Cmu = p.C * m_.mean_x;
    const Matrix lin = (X_ * p.C.transpose()).rowwise() + p.f.transpose();
    if ((lin.array() == 0.0).any()) throw DegenerateVariance("sigma_i(x) = |C_i x + f_i| is zero on a sample");
    for (int i = 0; i < d1; ++i) {
      var(i) = CA.row(i).dot(p.C.row(i)) + 2.0 * p.f(i) * Cmu(i) + p.f(i) * p.f(i);
      mean_log(i) = lin.col(i).array().square().log().mean() - std::log(enc2);
    }
    inv_sigma = lin.cwiseInverse();
  } else {
    var = (2.0 * p.log_sigma).array().exp();
    mean_log = 2.0 * p.log_sigma.array() - std::log(enc2);
  }

  const Matrix UM = p.U * M;
  double R = (UM.cwiseProduct(p.U)).sum() - 2.0 * (p.U.cwiseProduct(Ca * Wa)).sum() + m_.y2 +
             2.0 * bd.dot(p.U * mh - m_.mean_y) + bd.squaredNorm();
  R += col_sq.dot(var);

  const double kl_mean = beta / (2.0 * enc2) * M.trace();
  double kl_var = 0.0;
  for (int i = 0; i < d1; ++i) kl_var += 0.5 * beta * (var(i) / enc2 - 1.0 - mean_log(i));

  double total = R / (2.0 * s) + kl_mean + kl_var;
  if (p.layout.learn_s) total += 0.5 * d2 * std::log(s);

  if (grad == nullptr) return total;

  ModelParams& g = *grad;
  g.layout = p.layout;
  const double inv2s = 1.0 / (2.0 * s);
  g.U = inv2s * (2.0 * UM - 2.0 * Ca * Wa + 2.0 * bd * mh.transpose() + 2.0 * p.U * var.asDiagonal());
  const Matrix gWa = inv2s * (2.0 * AW * (p.U.transpose() * p.U) - 2.0 * Ca.transpose() * p.U +
                              2.0 * mua * (bd.transpose() * p.U)) +
                     (beta / enc2) * AW;
  g.W = gWa.topRows(D0);
  g.b_e = bias ? Vector(gWa.row(D0).transpose()) : Vector::Zero(d1);
  g.b_d = bias ? Vector(inv2s * (2.0 * (p.U * mh - m_.mean_y) + 2.0 * bd)) : Vector::Zero(d2);

  // dL / d var_i and dL / d E log sigma_i^2.
  const Vector d_var = inv2s * col_sq + Vector::Constant(d1, 0.5 * beta / enc2);
  const double d_log = -0.5 * beta;
  if (p.layout.ddv) {
    g.log_sigma = Vector::Zero(d1);
    const double n = static_cast<double>(X_.rows());
    const Matrix CA = p.C * m_.A;
    const Vector Cmu = p.C * m_.mean_x;
    g.C = Matrix::Zero(d1, D0);
    g.f = Vector::Zero(d1);
    const Matrix log_grad_C = (2.0 / n) * inv_sigma.transpose() * X_;  // d1 x D0
    const Vector log_grad_f = (2.0 / n) * inv_sigma.colwise().sum().transpose();
    for (int i = 0; i < d1; ++i) {
      g.C.row(i) = d_var(i) * (2.0 * CA.row(i) + 2.0 * p.f(i) * m_.mean_x.transpose()) + d_log * log_grad_C.row(i);
      g.f(i) = d_var(i) * (2.0 * Cmu(i) + 2.0 * p.f(i)) + d_log * log_grad_f(i);
    }
  } else {
    g.log_sigma = d_var.cwiseProduct(2.0 * var) + Vector::Constant(d1, 2.0 * d_log);
    g.C = Matrix::Zero(p.C.rows(), p.C.cols());
    g.f = Vector::Zero(p.f.size());
  }
  g.log_s = p.layout.learn_s ? -R / (2.0 * s) + 0.5 * d2 : 0.0;
  return total;
}

double eval_loss(const ModelParams& p, const Dataset& ds, const Hyperparams& hp) {
  return Objective(ds, hp).loss(p);
}

double eval_loss(const ModelParams& p, const DataSpectrum& sp, const Hyperparams& hp) {
  return Objective(sp, hp).loss(p);
}

ModelParams eval_grad(const ModelParams& p, const DataSpectrum& sp, const Hyperparams& hp) {
  ModelParams g;
  Objective(sp, hp).loss_and_grad(p, g);
  return g;
}

ModelParams eval_grad(const ModelParams& p, const Dataset& ds, const Hyperparams& hp) {
  ModelParams g;
  Objective(ds, hp).loss_and_grad(p, g);
  return g;
}

MonteCarloEstimate eval_loss_monte_carlo(const ModelParams& p, const Dataset& ds, const Hyperparams& hp,
                                         long k, std::uint64_t seed) {
  hp.validate();
  if (k < 2) throw DomainError("Monte Carlo needs at least 2 draws");
  Objective(ds, hp).loss(p);  // shape checks
  const double s = p.layout.learn_s ? std::exp(p.log_s) : hp.eta_dec * hp.eta_dec;
  const double enc2 = hp.eta_enc * hp.eta_enc;
  const int d1 = hp.latent_dim;
  const int d2 = static_cast<int>(ds.Y.cols());
  const Vector be = p.layout.bias ? p.b_e : Vector::Zero(d1);
  const Vector bd = p.layout.bias ? p.b_d : Vector::Zero(d2);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  double sum = 0.0;
  double sum_sq = 0.0;
  Vector eps(d1);
  for (long j = 0; j < k; ++j) {
    const Eigen::Index row = j % ds.n();
    const Vector x = ds.X.row(row).transpose();
    const Vector y = ds.Y.row(row).transpose();
    Vector sigma(d1);
    if (p.layout.ddv)
      sigma = (p.C * x + p.f).cwiseAbs();
    else
      sigma = p.log_sigma.array().exp();
    for (int i = 0; i < d1; ++i) eps(i) = sigma(i) * normal(rng);
    const Vector mu = p.W.transpose() * x + be;
    const Vector z = mu + eps;
    double v = (p.U * z + bd - y).squaredNorm() / (2.0 * s);
    v += hp.beta / (2.0 * enc2) * mu.squaredNorm();
    for (int i = 0; i < d1; ++i) {
      const double r = sigma(i) * sigma(i) / enc2;
      v += 0.5 * hp.beta * (r - 1.0 - std::log(r));
    }
    if (p.layout.learn_s) v += 0.5 * d2 * std::log(s);
    sum += v;
    sum_sq += v * v;
  }
  MonteCarloEstimate est;
  est.samples = k;
  est.mean = sum / static_cast<double>(k);
  const double var = (sum_sq - static_cast<double>(k) * est.mean * est.mean) / static_cast<double>(k - 1);
  est.std_error = std::sqrt(std::max(var, 0.0) / static_cast<double>(k));
  return est;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw DomainError("learning rate must be > 0");
  if (max_steps < 1) throw DomainError("max_steps must be >= 1");
  if (!(grad_tol >= 0.0)) throw DomainError("grad_tol must be >= 0");
  if (warmup_steps < 0) throw DomainError("warmup_steps must be >= 0");
  if (warmup_steps > 0 && !(warmup_learning_rate > 0.0)) throw DomainError("warmup learning rate must be > 0");
}

TrainResult train(const ModelParams& init, const Objective& obj, const TrainConfig& cfg) {
  cfg.validate();
  if (cfg.expectation != ExpectationMode::ClosedForm)
    throw InvalidSpec("training uses the exact expectation; Monte Carlo is for evaluation only");

  ModelParams work = init;
  ModelParams grad;
  const ObjectiveFn fn = [&](const Vector& x, Vector* g) {
    work.unflatten(x);
    if (g == nullptr) return obj.loss(work);
    const double v = obj.loss_and_grad(work, grad);
    *g = grad.flatten();
    return v;
  };

  auto run = [&](OptimizerKind kind, double lr, long steps, const Vector& x0, long offset) {
    OptimizerConfig oc;
    oc.kind = kind;
    oc.learning_rate = lr;
    oc.max_steps = steps;
    oc.grad_tol = cfg.grad_tol;
    oc.record_trace = cfg.trace;
    if (cfg.on_step) {
      oc.on_step = [&, view = init](long step, const Vector& x) mutable {
        view.unflatten(x);
        cfg.on_step(offset + step, view);
      };
    }
    OptimizerResult r = minimize(fn, x0, oc);
    for (TracePoint& t : r.trace) t.step += offset;
    return r;
  };

  OptimizerResult r;
  std::vector<TracePoint> trace;
  long steps = 0;
  Vector x = init.flatten();
  if (cfg.warmup_steps > 0) {
    r = run(OptimizerKind::Adam, cfg.warmup_learning_rate, cfg.warmup_steps, x, 0);
    x = r.x;
    steps = r.steps;
    trace = std::move(r.trace);
  }
  if (!(cfg.warmup_steps > 0 && r.converged)) {
    r = run(cfg.optimizer, cfg.learning_rate, cfg.max_steps, x, steps);
    steps += r.steps;
    // Both phases record the shared iterate at the hand-over.
    if (!trace.empty() && !r.trace.empty()) r.trace.erase(r.trace.begin());
    trace.insert(trace.end(), r.trace.begin(), r.trace.end());
  }

  TrainResult out;
  out.params = init;
  out.params.unflatten(r.x);
  out.final_loss = r.loss;
  out.grad_norm = r.grad_norm;
  out.steps = steps;
  out.converged = r.converged;
  out.trace = std::move(trace);
  return out;
}

TrainResult train(const Objective& obj, ParamLayout layout, const TrainConfig& cfg) {
  const ModelParams init = ModelParams::random(obj.input_dim(), obj.target_dim(), obj.hyperparams(), layout, cfg.seed);
  return train(init, obj, cfg);
}

Vector product_singular_values(const ModelParams& p, const DataSpectrum& sp) {
  if (p.W.rows() != sp.ambient_dim || p.U.rows() != sp.target_dim) throw ShapeError("parameters do not match the spectrum");
  const Matrix V = sp.phi.cwiseSqrt().asDiagonal() * (sp.P.transpose() * p.W);
  Eigen::JacobiSVD<Matrix> svd(p.U * V.transpose());
  return svd.singularValues();
}

Vector effective_sigma(const ModelParams& p, const Moments& m) {
  if (!p.layout.ddv) return p.sigma();
  Vector out(p.f.size());
  for (Eigen::Index i = 0; i < p.f.size(); ++i) {
    const double v = (p.C.row(i) * m.A).dot(p.C.row(i)) + 2.0 * p.f(i) * p.C.row(i).dot(m.mean_x) + p.f(i) * p.f(i);
    out(i) = std::sqrt(std::max(v, 0.0));
  }
  return out;
}

DdvComparison ddv_inequality_check(const ModelParams& p, const Dataset& ds, const Hyperparams& hp) {
  if (!p.layout.ddv) throw InvalidSpec("ddv_inequality_check needs a data-dependent variance layout");
  const Objective obj(ds, hp);
  DdvComparison out;
  out.lhs = obj.loss(p);
  ModelParams flat = p;
  flat.f = effective_sigma(p, obj.moments());
  flat.C.setZero();
  out.rhs = obj.loss(flat);
  return out;
}

}  // namespace collapse_lab

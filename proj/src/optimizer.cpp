#include "collapse_lab/optimizer.hpp"

#include <cmath>
#include <deque>
#include <limits>

#include "collapse_lab/errors.hpp"

namespace collapse_lab {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

bool finite(double v) { return std::isfinite(v); }

bool finite(const Vector& v) { return v.allFinite(); }

void record(OptimizerResult& r, const OptimizerConfig& cfg, long step, double loss, double gnorm) {
  if (cfg.record_trace) r.trace.push_back({step, loss, gnorm});
  if (cfg.on_step) cfg.on_step(step, r.x);
}

double evaluate(const ObjectiveFn& f, const Vector& x, Vector& g, long step) {
  const double v = f(x, &g);
  if (!finite(v) || !finite(g)) throw DivergenceError("loss or gradient is not finite", step);
  return v;
}

OptimizerResult run_gd(const ObjectiveFn& f, const Vector& x0, const OptimizerConfig& cfg) {
  OptimizerResult r;
  r.x = x0;
  Vector g(x0.size());
  r.loss = evaluate(f, r.x, g, 0);
  double lr = cfg.learning_rate;
  long step = 0;
  record(r, cfg, step, r.loss, g.norm());
  while (step < cfg.max_steps && g.norm() > cfg.grad_tol) {
    ++step;
    bool accepted = false;
    for (int halving = 0; halving < 60; ++halving) {
      const Vector trial = r.x - lr * g;
      if (!finite(trial)) throw DivergenceError("parameters overflowed", step);
      const double v = f(trial, nullptr);
      if (!finite(v)) throw DivergenceError("loss is not finite", step);
      if (v <= r.loss) {
        r.x = trial;
        accepted = true;
        break;
      }
      lr *= 0.5;
    }
    if (!accepted) break;
    r.loss = evaluate(f, r.x, g, step);
    record(r, cfg, step, r.loss, g.norm());
  }
  r.steps = step;
  r.grad_norm = g.norm();
  r.converged = r.grad_norm <= cfg.grad_tol;
  return r;
}

OptimizerResult run_adam(const ObjectiveFn& f, const Vector& x0, const OptimizerConfig& cfg) {
  OptimizerResult r;
  r.x = x0;
  Vector g(x0.size());
  Vector m = Vector::Zero(x0.size());
  Vector v = Vector::Zero(x0.size());
  r.loss = evaluate(f, r.x, g, 0);
  record(r, cfg, 0, r.loss, g.norm());
  long step = 0;
  while (step < cfg.max_steps && g.norm() > cfg.grad_tol) {
    ++step;
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseAbs2();
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    const Vector denom = (v / c2).cwiseSqrt().array() + cfg.epsilon;
    r.x -= cfg.learning_rate * (m / c1).cwiseQuotient(denom);
    if (!finite(r.x)) throw DivergenceError("parameters overflowed", step);
    r.loss = evaluate(f, r.x, g, step);
    record(r, cfg, step, r.loss, g.norm());
  }
  r.steps = step;
  r.grad_norm = g.norm();
  r.converged = r.grad_norm <= cfg.grad_tol;
  return r;
}

OptimizerResult run_lbfgs(const ObjectiveFn& f, const Vector& x0, const OptimizerConfig& cfg) {
  OptimizerResult r;
  r.x = x0;
  Vector g(x0.size());
  r.loss = evaluate(f, r.x, g, 0);
  record(r, cfg, 0, r.loss, g.norm());

  std::deque<Vector> s_hist;
  std::deque<Vector> y_hist;
  std::deque<double> rho_hist;
  Vector g_new(x0.size());
  long step = 0;
  int stalls = 0;

  while (step < cfg.max_steps && g.norm() > cfg.grad_tol) {
    ++step;
    // Two-loop recursion.
    Vector q = g;
    std::vector<double> alpha(s_hist.size());
    for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
      alpha[i] = rho_hist[i] * s_hist[i].dot(q);
      q -= alpha[i] * y_hist[i];
    }
    double gamma = 1.0;
    if (!s_hist.empty()) gamma = s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    Vector d = gamma * q;
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      const double b = rho_hist[i] * y_hist[i].dot(d);
      d += s_hist[i] * (alpha[i] - b);
    }
    d = -d;
    double slope = g.dot(d);
    if (!(slope < 0.0)) {
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      d = -g;
      slope = -g.squaredNorm();
    }
    double t = 1.0;
    if (s_hist.empty()) t = std::min(1.0, 1.0 / std::max(g.norm(), kEps));

    bool accepted = false;
    Vector x_new;
    double f_new = 0.0;
    for (int k = 0; k < 60; ++k) {
      x_new = r.x + t * d;
      f_new = f(x_new, &g_new);
      if (finite(f_new) && finite(g_new)) {
        const bool armijo = f_new <= r.loss + 1e-4 * t * slope;
        // Near the optimum the decrease drops below rounding; accept steps
        // that keep the loss flat while shrinking the gradient.
        const bool flat = f_new - r.loss <= 4.0 * kEps * std::abs(r.loss) && g_new.norm() < g.norm();
        if (armijo || flat) {
          accepted = true;
          break;
        }
      }
      t *= 0.5;
    }
    if (!accepted) {
      if (s_hist.empty() || ++stalls > 2) break;
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      continue;
    }
    stalls = 0;
    const Vector s = x_new - r.x;
    const Vector y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-14 * s.norm() * y.norm()) {
      s_hist.push_back(s);
      y_hist.push_back(y);
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > cfg.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    r.x = x_new;
    r.loss = f_new;
    g = g_new;
    record(r, cfg, step, r.loss, g.norm());
  }
  r.steps = step;
  r.grad_norm = g.norm();
  r.converged = r.grad_norm <= cfg.grad_tol;
  return r;
}

}  // namespace

OptimizerResult minimize(const ObjectiveFn& f, const Vector& x0, const OptimizerConfig& cfg) {
  if (!(cfg.learning_rate > 0.0)) throw DomainError("learning rate must be > 0");
  if (cfg.max_steps < 0) throw DomainError("max_steps must be >= 0");
  switch (cfg.kind) {
    case OptimizerKind::PlainGD: return run_gd(f, x0, cfg);
    case OptimizerKind::Adam: return run_adam(f, x0, cfg);
    case OptimizerKind::LBFGS: return run_lbfgs(f, x0, cfg);
  }
  throw DomainError("unknown optimizer");
}

}  // namespace collapse_lab

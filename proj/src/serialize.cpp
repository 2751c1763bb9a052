#include "collapse_lab/serialize.hpp"

#include <charconv>
#include <cmath>

namespace collapse_lab {

namespace {

std::string mode_name(Mode m) { return m == Mode::Fixed ? "fixed" : "learnable"; }

}  // namespace

Json number(double v) {
  if (std::isnan(v)) return nullptr;
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

Json to_json(const Vector& v) {
  Json arr = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(number(v(i)));
  return arr;
}

Json to_json(const Matrix& m) {
  Json arr = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(number(m(i, j)));
    arr.push_back(std::move(row));
  }
  return arr;
}

Json to_json(const std::vector<bool>& flags) {
  Json arr = Json::array();
  for (bool b : flags) arr.push_back(b);
  return arr;
}

Json to_json(const BetaInterval& b) {
  Json j;
  j["lo"] = number(b.lo);
  j["hi"] = number(b.hi);
  j["lo_closed"] = b.lo_closed;
  j["hi_closed"] = b.hi_closed;
  return j;
}

Json to_json(const DataSpectrum& sp) {
  Json j;
  j["schema"] = kSchema;
  j["kind"] = "spectrum";
  j["ambient_dim"] = sp.ambient_dim;
  j["rank"] = sp.rank;
  j["target_dim"] = sp.target_dim;
  j["min_dim"] = sp.min_dim();
  j["nonzero"] = sp.nonzero;
  j["eig_tol"] = number(sp.eig_tol);
  j["zeta_tol"] = number(sp.zeta_tol);
  j["phi"] = to_json(sp.phi);
  j["zeta"] = to_json(sp.zeta);
  j["zeta_sq"] = to_json(Vector(sp.zeta.cwiseAbs2()));
  j["y_second_moment"] = number(sp.y_second_moment);
  j["residual"] = number(sp.residual);
  j["P"] = to_json(sp.P);
  j["F"] = to_json(sp.F);
  j["G"] = to_json(sp.G);
  j["warnings"] = sp.warnings;
  return j;
}

Json to_json(const Hyperparams& hp) {
  Json j;
  j["beta"] = number(hp.beta);
  j["eta_enc"] = number(hp.eta_enc);
  j["eta_dec"] = number(hp.eta_dec);
  j["latent_dim"] = hp.latent_dim;
  j["sigma_mode"] = mode_name(hp.sigma_mode);
  j["decvar_mode"] = mode_name(hp.decvar_mode);
  return j;
}

Json to_json(const GlobalMinimum& gm, bool with_matrices) {
  Json j;
  j["lambda"] = to_json(gm.lambda);
  j["theta"] = to_json(gm.theta);
  j["sigma"] = to_json(gm.sigma);
  j["collapsed"] = to_json(gm.collapsed);
  j["surviving"] = gm.surviving();
  j["predicted_loss"] = number(gm.predicted_loss);
  if (with_matrices) {
    j["U"] = to_json(gm.U);
    j["W"] = to_json(gm.W);
  }
  return j;
}

Json to_json(const DecVarSolution& sol) {
  Json j;
  j["regime"] = to_string(sol.regime);
  j["surviving"] = sol.surviving;
  j["surviving_at_endpoint"] = sol.surviving_at_endpoint;
  if (sol.tends_to_zero) {
    j["s_star"] = "to_zero";
  } else if (sol.regime == DecVarRegime::BoundaryInterval) {
    Json set;
    set["lo"] = 0.0;
    set["hi"] = number(sol.s_star);
    set["lo_closed"] = false;
    set["hi_closed"] = true;
    j["s_star"] = set;
  } else {
    j["s_star"] = number(sol.s_star);
  }
  j["beta_interval"] = to_json(sol.beta_interval);
  j["nonzero"] = sol.nonzero;
  j["nonzero_latent"] = sol.nonzero_latent;
  j["target_dim"] = sol.target_dim;
  Json table = Json::array();
  for (const RegimeRow& row : sol.table) {
    Json r;
    r["regime"] = to_string(row.regime);
    r["surviving"] = row.surviving;
    r["beta"] = to_json(row.beta);
    switch (row.regime) {
      case DecVarRegime::IllPosedZero: r["s_star"] = "to_zero"; break;
      case DecVarRegime::BoundaryInterval: r["s_star"] = "interval (0, zeta_k^2 / beta]"; break;
      default: r["s_star"] = "(" + format_number(row.s_numerator) + ") / (d2 - beta * " + std::to_string(row.surviving) + ")";
    }
    table.push_back(std::move(r));
  }
  j["table"] = table;
  return j;
}

Json to_json(const CollapseReport& rep) {
  Json j;
  j["regime"] = to_string(rep.regime);
  j["surviving"] = rep.surviving;
  j["collapsed"] = to_json(rep.collapsed);
  j["mode_thresholds"] = to_json(rep.mode_thresholds);
  j["hessian_psd"] = rep.hessian_psd;
  j["min_hessian_quadratic"] = number(rep.min_hessian_quadratic);
  j["decoder_variance"] = number(rep.decoder_variance);
  if (rep.decvar) j["decoder_variance_solution"] = to_json(*rep.decvar);
  return j;
}

Json to_json(const TrainResult& tr) {
  Json j;
  j["final_loss"] = number(tr.final_loss);
  j["grad_norm"] = number(tr.grad_norm);
  j["steps"] = tr.steps;
  j["converged"] = tr.converged;
  const ModelParams& p = tr.params;
  Json params;
  params["U"] = to_json(p.U);
  params["W"] = to_json(p.W);
  if (!p.layout.ddv) params["sigma"] = to_json(p.sigma());
  if (p.layout.bias) {
    params["b_e"] = to_json(p.b_e);
    params["b_d"] = to_json(p.b_d);
  }
  if (p.layout.ddv) {
    params["C"] = to_json(p.C);
    params["f"] = to_json(p.f);
  }
  if (p.layout.learn_s) params["decoder_variance"] = number(std::exp(p.log_s));
  j["params"] = params;
  return j;
}

Json to_json(const VerifyRow& row) {
  Json j;
  j["id"] = row.id;
  j["d0"] = row.d0;
  j["d2"] = row.d2;
  j["d1"] = row.d1;
  j["beta"] = number(row.beta);
  j["analytic_loss"] = number(row.analytic_loss);
  j["trained_loss"] = number(row.trained_loss);
  j["loss_error"] = number(row.loss_error);
  j["singular_value_error"] = number(row.singular_value_error);
  j["sigma_error"] = number(row.sigma_error);
  j["decvar_error"] = number(row.decvar_error);
  j["steps"] = row.steps;
  j["relaxed"] = row.relaxed;
  j["passed"] = row.passed;
  j["note"] = row.note;
  return j;
}

Json to_json(const VerifyReport& rep) {
  Json j;
  j["schema"] = kSchema;
  j["kind"] = "verify";
  j["passed"] = rep.all_passed();
  Json rows = Json::array();
  for (const VerifyRow& r : rep.rows) rows.push_back(to_json(r));
  j["instances"] = rows;
  return j;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows, int latent_dim,
                     const TrainedColumns* trained) {
  out << "beta,loss,rank,regime";
  for (int i = 1; i <= latent_dim; ++i) out << ",sigma_" << i;
  if (trained != nullptr) {
    out << ",train_loss";
    for (int i = 1; i <= latent_dim; ++i) out << ",train_sigma_" << i;
  }
  out << '\n';
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const SweepRow& row = rows[r];
    out << format_number(row.beta) << ',' << format_number(row.loss) << ',' << row.rank << ',' << row.regime;
    for (int i = 0; i < latent_dim; ++i) out << ',' << (i < row.sigma.size() ? format_number(row.sigma(i)) : "");
    if (trained != nullptr) {
      out << ',' << format_number(trained->loss.at(r));
      const Vector& s = trained->sigma.at(r);
      for (int i = 0; i < latent_dim; ++i) out << ',' << (i < s.size() ? format_number(s(i)) : "");
    }
    out << '\n';
  }
}

void write_trace_csv(std::ostream& out, const std::vector<TracePoint>& trace) {
  out << "step,loss,grad_norm\n";
  for (const TracePoint& t : trace)
    out << t.step << ',' << format_number(t.loss) << ',' << format_number(t.grad_norm) << '\n';
}

}  // namespace collapse_lab

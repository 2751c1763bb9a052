#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <thread>

#include "collapse_lab/collapse.hpp"
#include "collapse_lab/errors.hpp"
#include "collapse_lab/serialize.hpp"
#include "collapse_lab/verify.hpp"

namespace collapse_lab::cli {

namespace {

struct Options {
  std::string data;
  std::string synthetic;
  std::vector<double> zeta;
  int zeta_d0 = 0;
  int zeta_d2 = 0;
  std::string save_data;

  double beta = 1.0;
  std::string beta_grid;
  int d1 = 0;
  double eta_enc = 1.0;
  double eta_dec = 1.0;
  bool learnable_sigma = false;
  bool learnable_decvar = false;
  bool ddv = false;
  bool bias = false;
  bool train = false;
  bool full = false;
  std::optional<std::uint64_t> random_p;

  std::string optimizer = "lbfgs";
  double learning_rate = 1e-3;
  long max_steps = 20000;
  double grad_tol = 1e-9;
  std::uint64_t seed = 0;
  std::optional<long> warmup_steps;
  double warmup_lr = 1e-2;

  int instances = 20;
  std::uint64_t verify_seed = 7;
  double analytic_beta_scale = 1.0;

  std::string trace;
  std::string out;
  std::string format;
};

struct Source {
  std::optional<Dataset> raw;  // as loaded or generated
  DataSpectrum sp;             // of the centered data when biases are on
};

// Adam iterations before L-BFGS when the encoder variance depends on x.
constexpr long kDdvWarmup = 20000;

class UsageError : public Error {
 public:
  using Error::Error;
};

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(item);
  return out;
}

long parse_long(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const long v = std::stol(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw UsageError("bad integer in " + what + ": '" + s + "'");
  }
}

double parse_double(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw UsageError("bad number in " + what + ": '" + s + "'");
  }
}

Source load_source(const Options& o) {
  const int given = !o.data.empty() + !o.synthetic.empty() + !o.zeta.empty();
  if (given != 1) throw UsageError("give exactly one of --data, --synthetic or --zeta");
  Source src;
  if (!o.zeta.empty()) {
    Vector z(static_cast<Eigen::Index>(o.zeta.size()));
    for (std::size_t i = 0; i < o.zeta.size(); ++i) z(static_cast<Eigen::Index>(i)) = o.zeta[i];
    const int len = static_cast<int>(o.zeta.size());
    src.sp = DataSpectrum::from_singular_values(z, o.zeta_d0 > 0 ? o.zeta_d0 : len, o.zeta_d2 > 0 ? o.zeta_d2 : len);
    return src;
  }
  if (!o.synthetic.empty()) {
    const auto parts = split(o.synthetic, ',');
    if (parts.size() != 4) throw UsageError("--synthetic expects d0,d2,n,seed");
    const SyntheticSpec spec =
        SyntheticSpec::standard(static_cast<int>(parse_long(parts[0], "--synthetic")),
                                static_cast<int>(parse_long(parts[1], "--synthetic")),
                                static_cast<int>(parse_long(parts[2], "--synthetic")),
                                static_cast<std::uint64_t>(parse_long(parts[3], "--synthetic")));
    src.raw = generate(spec);
  } else {
    src.raw = load(o.data);
  }
  if (!o.save_data.empty()) save(*src.raw, o.save_data);
  src.sp = compute_spectrum(o.bias ? center(*src.raw).data : *src.raw);
  return src;
}

Hyperparams hyperparams(const Options& o, const DataSpectrum& sp) {
  Hyperparams hp;
  hp.beta = o.beta;
  hp.eta_enc = o.eta_enc;
  hp.eta_dec = o.eta_dec;
  hp.latent_dim = o.d1 > 0 ? o.d1 : std::max(sp.min_dim(), 1);
  hp.sigma_mode = o.learnable_sigma ? Mode::Learnable : Mode::Fixed;
  hp.decvar_mode = o.learnable_decvar ? Mode::Learnable : Mode::Fixed;
  hp.validate();
  return hp;
}

std::string format_or(const Options& o, const std::string& fallback, std::initializer_list<const char*> allowed) {
  const std::string f = o.format.empty() ? fallback : o.format;
  for (const char* a : allowed)
    if (f == a) return f;
  throw UsageError("format '" + f + "' is not available for this command");
}

Matrix random_signed_permutation(int d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<int> idx(d);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  Matrix P = Matrix::Zero(d, d);
  for (int j = 0; j < d; ++j) P(idx[j], j) = (rng() & 1U) ? -1.0 : 1.0;
  return P;
}

TrainConfig train_config(const Options& o) {
  TrainConfig tc;
  if (o.optimizer == "gd")
    tc.optimizer = OptimizerKind::PlainGD;
  else if (o.optimizer == "adam")
    tc.optimizer = OptimizerKind::Adam;
  else if (o.optimizer == "lbfgs")
    tc.optimizer = OptimizerKind::LBFGS;
  else
    throw UsageError("unknown optimizer '" + o.optimizer + "' (gd, adam, lbfgs)");
  tc.learning_rate = o.learning_rate;
  tc.max_steps = o.max_steps;
  tc.grad_tol = o.grad_tol;
  tc.seed = o.seed;
  tc.warmup_steps = o.warmup_steps.value_or(o.ddv ? kDdvWarmup : 0);
  tc.warmup_learning_rate = o.warmup_lr;
  tc.trace = !o.trace.empty();
  tc.validate();
  return tc;
}

Objective objective_for(const Source& src, const Hyperparams& hp) {
  if (src.raw) return Objective(*src.raw, hp);
  return Objective(src.sp, hp);
}

/// Minimal objective the trainer should reach, or NaN when it has none.
double analytic_loss(const DataSpectrum& sp, const Hyperparams& hp) {
  if (hp.decvar_mode == Mode::Learnable) {
    const DecVarSolution sol = solve_decoder_variance(sp, hp);
    if (sol.tends_to_zero) return -std::numeric_limits<double>::infinity();
    return g_loss(sp, hp, sol.s_star);
  }
  return hp.sigma_mode == Mode::Learnable ? theorem2_solution(sp, hp).predicted_loss
                                          : theorem1_solution(sp, hp).predicted_loss;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, std::thread::hardware_concurrency()), n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < workers; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          body(i);
        } catch (...) {
          if (!failed.exchange(true)) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

Json header(const char* kind) {
  Json j;
  j["schema"] = kSchema;
  j["kind"] = kind;
  return j;
}

Json counts_json(const DataSpectrum& sp, const Hyperparams& hp) {
  const EffectiveCounts c = effective_counts(sp, hp.latent_dim);
  Json j;
  j["min_dim"] = c.min_dim;
  j["nonzero"] = c.nonzero;
  j["nonzero_latent"] = c.nonzero_latent;
  return j;
}

void warn(const DataSpectrum& sp, std::ostream& err) {
  for (const std::string& w : sp.warnings) err << "warning: " << w << '\n';
}

// Commands. Each writes its document to `out` and returns an exit code.

int cmd_spectrum(const Options& o, std::ostream& out, std::ostream& err) {
  format_or(o, "json", {"json"});
  const Source src = load_source(o);
  warn(src.sp, err);
  out << to_json(src.sp).dump(2) << '\n';
  return kOk;
}

Json solve_json(const Options& o, const DataSpectrum& sp, Hyperparams hp) {
  Json j = header("solve");
  j["hyperparams"] = to_json(hp);
  j["counts"] = counts_json(sp, hp);
  if (hp.decvar_mode == Mode::Learnable) {
    const DecVarSolution sol = solve_decoder_variance(sp, hp);
    j["decoder_variance_solution"] = to_json(sol);
    if (sol.tends_to_zero || sol.regime == DecVarRegime::BoundaryInterval) {
      j["solution"] = nullptr;
      j["note"] = "no unique optimal decoder variance; see decoder_variance_solution";
      return j;
    }
    hp.eta_dec = std::sqrt(sol.s_star);
  }
  std::optional<Matrix> P;
  if (o.random_p) {
    P = hp.sigma_mode == Mode::Learnable ? random_signed_permutation(hp.latent_dim, *o.random_p)
                                         : random_orthogonal(hp.latent_dim, *o.random_p);
  }
  const GlobalMinimum gm = hp.sigma_mode == Mode::Learnable ? theorem2_solution(sp, hp, P) : theorem1_solution(sp, hp, P);
  Json s = to_json(gm, o.full);
  if (hp.decvar_mode == Mode::Learnable) s["predicted_loss"] = number(g_loss(sp, hp, hp.eta_dec * hp.eta_dec));
  j["solution"] = s;
  return j;
}

int cmd_solve(const Options& o, std::ostream& out, std::ostream& err) {
  format_or(o, "json", {"json"});
  const Source src = load_source(o);
  warn(src.sp, err);
  out << solve_json(o, src.sp, hyperparams(o, src.sp)).dump(2) << '\n';
  return kOk;
}

Json predict_json(const DataSpectrum& sp, const Hyperparams& hp) {
  Json j = header("predict");
  j["hyperparams"] = to_json(hp);
  j["counts"] = counts_json(sp, hp);
  j["prediction"] = to_json(predict(sp, hp));
  if (hp.decvar_mode == Mode::Learnable) {
    Hyperparams fixed = hp;
    fixed.decvar_mode = Mode::Fixed;
    j["fixed_decvar_prediction"] = to_json(predict(sp, fixed));
  }
  return j;
}

int cmd_predict(const Options& o, std::ostream& out, std::ostream& err) {
  format_or(o, "json", {"json"});
  const Source src = load_source(o);
  warn(src.sp, err);
  out << predict_json(src.sp, hyperparams(o, src.sp)).dump(2) << '\n';
  return kOk;
}

std::vector<double> grid_from(const Options& o) {
  if (o.beta_grid.empty()) return {o.beta};
  const auto parts = split(o.beta_grid, ':');
  if (parts.size() != 3) throw UsageError("--beta-grid expects lo:hi:step");
  return beta_grid(parse_double(parts[0], "--beta-grid"), parse_double(parts[1], "--beta-grid"),
                   parse_double(parts[2], "--beta-grid"));
}

int cmd_sweep(const Options& o, std::ostream& out, std::ostream& err) {
  const std::string fmt = format_or(o, "csv", {"csv", "json"});
  const Source src = load_source(o);
  warn(src.sp, err);
  const Hyperparams hp = hyperparams(o, src.sp);
  const std::vector<double> betas = grid_from(o);
  const std::vector<SweepRow> rows = beta_sweep(src.sp, hp, betas);

  std::optional<TrainedColumns> trained;
  if (o.train) {
    const TrainConfig tc = train_config(o);
    TrainedColumns cols;
    cols.loss.resize(rows.size());
    cols.sigma.resize(rows.size());
    parallel_for(rows.size(), [&](std::size_t i) {
      Hyperparams h = hp;
      h.beta = betas[i];
      const Objective obj = objective_for(src, h);
      const TrainResult tr = train(obj, ParamLayout::from(h, o.bias, o.ddv), tc);
      cols.loss[i] = tr.final_loss;
      Vector s = effective_sigma(tr.params, obj.moments());
      std::sort(s.data(), s.data() + s.size(), std::greater<>());
      cols.sigma[i] = s;
    });
    trained = std::move(cols);
  }

  if (fmt == "csv") {
    write_sweep_csv(out, rows, hp.latent_dim, trained ? &*trained : nullptr);
    return kOk;
  }
  Json j = header("sweep");
  j["hyperparams"] = to_json(hp);
  Json arr = Json::array();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    Json r;
    r["beta"] = number(rows[i].beta);
    r["loss"] = number(rows[i].loss);
    r["rank"] = rows[i].rank;
    r["regime"] = rows[i].regime;
    r["sigma"] = to_json(rows[i].sigma);
    r["decoder_variance"] = number(rows[i].decoder_variance);
    if (trained) {
      r["train_loss"] = number(trained->loss[i]);
      r["train_sigma"] = to_json(trained->sigma[i]);
    }
    arr.push_back(std::move(r));
  }
  j["rows"] = arr;
  out << j.dump(2) << '\n';
  return kOk;
}

int cmd_train(const Options& o, std::ostream& out, std::ostream& err) {
  format_or(o, "json", {"json"});
  const Source src = load_source(o);
  warn(src.sp, err);
  const Hyperparams hp = hyperparams(o, src.sp);
  const TrainConfig tc = train_config(o);
  const Objective obj = objective_for(src, hp);
  const TrainResult tr = train(obj, ParamLayout::from(hp, o.bias, o.ddv), tc);

  if (!o.trace.empty()) {
    std::ofstream f(o.trace);
    if (!f) throw IoError("cannot open for writing: " + o.trace);
    write_trace_csv(f, tr.trace);
    if (!f) throw IoError("write failed: " + o.trace);
  }

  Json j = header("train");
  j["hyperparams"] = to_json(hp);
  j["result"] = to_json(tr);
  Hyperparams reference = hp;
  if (o.ddv) reference.sigma_mode = Mode::Learnable;  // sigma(x) is trained either way
  const double a = analytic_loss(src.sp, reference);
  j["analytic_loss"] = number(a);
  j["relative_error"] = number(std::abs(a - tr.final_loss) / (1.0 + std::abs(a)));
  j["learned_singular_values"] = to_json(product_singular_values(tr.params, src.sp));
  j["effective_sigma"] = to_json(effective_sigma(tr.params, obj.moments()));
  out << j.dump(2) << '\n';
  return kOk;
}

int cmd_verify(const Options& o, std::ostream& out, std::ostream&) {
  const std::string fmt = format_or(o, "text", {"text", "json"});
  VerifyConfig cfg;
  cfg.instances = o.instances;
  cfg.seed = o.verify_seed;
  cfg.learnable_decvar = o.learnable_decvar;
  cfg.analytic_beta_scale = o.analytic_beta_scale;
  cfg.train = train_config(o);
  cfg.train.trace = false;
  const VerifyReport rep = run_verify(cfg);

  if (fmt == "json") {
    out << to_json(rep).dump(2) << '\n';
  } else {
    char line[256];
    std::snprintf(line, sizeof line, "%-4s %-3s %-3s %-3s %-9s %-11s %-11s %-11s %-11s %-6s %s\n", "id", "d0", "d2",
                  "d1", "beta", "loss_err", "sv_err", "sigma_err", "s_err", "result", "note");
    out << line;
    int passed = 0;
    for (const VerifyRow& r : rep.rows) {
      passed += r.passed;
      std::snprintf(line, sizeof line, "%-4d %-3d %-3d %-3d %-9.4f %-11.3e %-11.3e %-11.3e %-11.3e %-6s %s\n", r.id,
                    r.d0, r.d2, r.d1, r.beta, r.loss_error, r.singular_value_error, r.sigma_error, r.decvar_error,
                    r.passed ? "PASS" : "FAIL", (r.relaxed ? "[relaxed] " + r.note : r.note).c_str());
      out << line;
    }
    out << "passed " << passed << "/" << rep.rows.size() << '\n';
  }
  return rep.all_passed() ? kOk : kVerifyFailed;
}

std::string join(const Vector& v) {
  std::string s;
  for (Eigen::Index i = 0; i < v.size(); ++i) s += (i ? ", " : "") + format_number(v(i));
  return s;
}

int cmd_report(const Options& o, std::ostream& out, std::ostream& err) {
  const std::string fmt = format_or(o, "md", {"md", "json"});
  const Source src = load_source(o);
  warn(src.sp, err);
  const Hyperparams hp = hyperparams(o, src.sp);
  const Json solved = solve_json(o, src.sp, hp);
  const CollapseReport rep = predict(src.sp, hp);

  if (fmt == "json") {
    Json j = header("report");
    j["spectrum"] = to_json(src.sp);
    j["solve"] = solved;
    j["predict"] = predict_json(src.sp, hp);
    out << j.dump(2) << '\n';
    return kOk;
  }

  const DataSpectrum& sp = src.sp;
  const EffectiveCounts c = effective_counts(sp, hp.latent_dim);
  out << "# collapse-lab report\n\n";
  out << "## Data\n\n";
  out << "- input dim " << sp.ambient_dim << ", rank " << sp.rank << ", target dim " << sp.target_dim << "\n";
  out << "- d* = " << c.min_dim << ", nonzero zeta = " << c.nonzero << ", nonzero within d1 = " << c.nonzero_latent
      << "\n";
  out << "- zeta: " << join(sp.zeta) << "\n";
  out << "- unexplained target variance: " << format_number(sp.residual) << "\n";
  for (const std::string& w : sp.warnings) out << "- warning: " << w << "\n";
  out << "\n## Hyperparameters\n\n";
  out << "- beta " << format_number(hp.beta) << ", eta_enc " << format_number(hp.eta_enc) << ", eta_dec "
      << format_number(hp.eta_dec) << ", d1 " << hp.latent_dim << "\n";
  out << "- encoder variance " << (hp.sigma_mode == Mode::Learnable ? "learnable" : "fixed") << ", decoder variance "
      << (hp.decvar_mode == Mode::Learnable ? "learnable" : "fixed") << "\n";
  out << "\n## Collapse\n\n";
  out << "- regime: " << to_string(rep.regime) << " (" << rep.surviving << " of " << hp.latent_dim
      << " latent modes survive)\n";
  out << "- per-mode beta thresholds: " << join(rep.mode_thresholds) << "\n";
  out << "- Hessian at the origin PSD: " << (rep.hessian_psd ? "yes" : "no") << " (min quadratic "
      << format_number(rep.min_hessian_quadratic) << ")\n";
  if (rep.decvar) {
    const DecVarSolution& sol = *rep.decvar;
    out << "\n## Learnable decoder variance\n\n";
    out << "- regime: " << to_string(sol.regime) << "\n";
    if (sol.tends_to_zero)
      out << "- optimal s: none, the loss decreases without bound as s -> 0\n";
    else if (sol.regime == DecVarRegime::BoundaryInterval)
      out << "- optimal s: any value in (0, " << format_number(sol.s_star) << "]\n";
    else
      out << "- optimal s: " << format_number(sol.s_star) << "\n";
    out << "\n| regime | surviving | beta from | beta to |\n|---|---|---|---|\n";
    for (const RegimeRow& row : sol.table) {
      out << "| " << to_string(row.regime) << " | " << row.surviving << " | " << (row.beta.lo_closed ? "[" : "(")
          << format_number(row.beta.lo) << " | " << format_number(row.beta.hi) << (row.beta.hi_closed ? "]" : ")")
          << " |\n";
    }
  }
  out << "\n## Global minimum\n\n";
  if (solved["solution"].is_null()) {
    out << "- no unique minimizer\n";
  } else {
    const Json& s = solved["solution"];
    auto list = [](const Json& arr) {
      std::string t;
      for (std::size_t i = 0; i < arr.size(); ++i)
        t += (i ? ", " : "") + (arr[i].is_number() ? format_number(arr[i].get<double>()) : arr[i].dump());
      return t;
    };
    out << "- lambda: " << list(s["lambda"]) << "\n";
    out << "- theta: " << list(s["theta"]) << "\n";
    out << "- sigma: " << list(s["sigma"]) << "\n";
    out << "- minimal loss: " << (s["predicted_loss"].is_number() ? format_number(s["predicted_loss"].get<double>())
                                                                  : s["predicted_loss"].dump())
        << "\n";
  }
  return kOk;
}

void add_source(CLI::App* c, Options& o) {
  c->add_option("--data", o.data, "dataset file (.csv or binary)");
  c->add_option("--synthetic", o.synthetic, "built-in Gaussian instance d0,d2,n,seed");
  c->add_option("--zeta", o.zeta, "singular values given directly")->delimiter(',');
  c->add_option("--zeta-d0", o.zeta_d0, "input rank for --zeta (default: number of values)");
  c->add_option("--zeta-d2", o.zeta_d2, "target dim for --zeta (default: number of values)");
  c->add_option("--save-data", o.save_data, "write the loaded or generated dataset here");
  c->add_flag("--bias", o.bias, "learnable biases; closed forms use the centered data");
}

void add_hyper(CLI::App* c, Options& o) {
  c->add_option("--beta", o.beta, "KL weight");
  c->add_option("--d1", o.d1, "latent dimension (default: min(d0, d2))");
  c->add_option("--eta-enc", o.eta_enc, "prior standard deviation");
  c->add_option("--eta-dec", o.eta_dec, "decoder standard deviation");
  c->add_flag("--learnable-sigma", o.learnable_sigma, "learn the encoder variances");
  c->add_flag("--learnable-decvar", o.learnable_decvar, "learn the decoder variance");
}

void add_training(CLI::App* c, Options& o) {
  c->add_option("--optimizer", o.optimizer, "gd, adam or lbfgs");
  c->add_option("--lr", o.learning_rate, "learning rate (gd, adam)");
  c->add_option("--max-steps", o.max_steps, "iteration cap");
  c->add_option("--grad-tol", o.grad_tol, "stop when the gradient norm is below this");
  c->add_option("--seed", o.seed, "initialization seed");
  c->add_option("--warmup-steps", o.warmup_steps, "Adam steps before the main optimizer (default 0, 20000 with --ddv)");
  c->add_option("--warmup-lr", o.warmup_lr, "learning rate of the warm-up phase");
}

void add_output(CLI::App* c, Options& o) {
  c->add_option("--out", o.out, "write output here instead of stdout");
  c->add_option("--format", o.format, "output format");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Closed-form global minima and posterior collapse of linear latent variable models", "collapse-lab"};
  app.require_subcommand(1);

  auto* spectrum = app.add_subcommand("spectrum", "spectral summary of a dataset");
  add_source(spectrum, o);
  add_output(spectrum, o);

  auto* solve = app.add_subcommand("solve", "closed-form global minimum");
  add_source(solve, o);
  add_hyper(solve, o);
  add_output(solve, o);
  solve->add_option("--random-p", o.random_p, "rotate the solution by a random P drawn from this seed");
  solve->add_flag("--full", o.full, "include U and W");

  auto* predict_cmd = app.add_subcommand("predict", "per-mode collapse prediction");
  add_source(predict_cmd, o);
  add_hyper(predict_cmd, o);
  add_output(predict_cmd, o);

  auto* sweep = app.add_subcommand("sweep", "collapse table over a beta grid");
  add_source(sweep, o);
  add_hyper(sweep, o);
  add_training(sweep, o);
  add_output(sweep, o);
  sweep->add_option("--beta-grid", o.beta_grid, "lo:hi:step");
  sweep->add_flag("--train", o.train, "add columns from training runs");
  sweep->add_flag("--ddv", o.ddv, "data-dependent encoder variance in training runs");

  auto* train_cmd = app.add_subcommand("train", "gradient-based minimization of the exact loss");
  add_source(train_cmd, o);
  add_hyper(train_cmd, o);
  add_training(train_cmd, o);
  add_output(train_cmd, o);
  train_cmd->add_flag("--ddv", o.ddv, "data-dependent encoder variance |C x + f|");
  train_cmd->add_option("--trace", o.trace, "per-step loss CSV");

  auto* verify = app.add_subcommand("verify", "train random instances and compare with the closed form");
  add_training(verify, o);
  add_output(verify, o);
  verify->add_flag("--learnable-decvar", o.learnable_decvar, "also learn and check the decoder variance");
  verify->add_option("--instances", o.instances, "number of random instances");
  verify->add_option("--suite-seed", o.verify_seed, "seed of the instance generator");
  verify->add_option("--analytic-beta-scale", o.analytic_beta_scale, "testing hook: scale beta on the analytic side")
      ->group("");

  auto* report = app.add_subcommand("report", "human-readable summary");
  add_source(report, o);
  add_hyper(report, o);
  add_output(report, o);
  report->add_option("--random-p", o.random_p, "rotate the solution by a random P drawn from this seed");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kDegenerate;
  }

  std::ostringstream buffer;
  int code = kOk;
  try {
    if (spectrum->parsed()) code = cmd_spectrum(o, buffer, err);
    else if (solve->parsed()) code = cmd_solve(o, buffer, err);
    else if (predict_cmd->parsed()) code = cmd_predict(o, buffer, err);
    else if (sweep->parsed()) code = cmd_sweep(o, buffer, err);
    else if (train_cmd->parsed()) code = cmd_train(o, buffer, err);
    else if (verify->parsed()) code = cmd_verify(o, buffer, err);
    else if (report->parsed()) code = cmd_report(o, buffer, err);

    if (o.out.empty()) {
      out << buffer.str();
    } else {
      std::ofstream f(o.out, std::ios::binary);
      if (!f) throw IoError("cannot open for writing: " + o.out);
      f << buffer.str();
      if (!f) throw IoError("write failed: " + o.out);
    }
    return code;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kIoError;
  } catch (const collapse_lab::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kIoError;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kDegenerate;
  }
}

}  // namespace collapse_lab::cli

#include <doctest.h>

#include <cmath>
#include <random>

#include "collapse_lab/closed_form.hpp"
#include "collapse_lab/errors.hpp"
#include "oracles.hpp"

using namespace collapse_lab;

namespace {

Hyperparams make_hp(double beta, int d1, Mode sigma_mode = Mode::Learnable, double eta_enc = 1.0,
                    double eta_dec = 1.0) {
  Hyperparams hp;
  hp.beta = beta;
  hp.latent_dim = d1;
  hp.sigma_mode = sigma_mode;
  hp.eta_enc = eta_enc;
  hp.eta_dec = eta_dec;
  return hp;
}

DataSpectrum spectrum_of(std::initializer_list<double> z, int d0, int d2) {
  Vector v(static_cast<Eigen::Index>(z.size()));
  int i = 0;
  for (double x : z) v(i++) = x;
  return DataSpectrum::from_singular_values(v, d0, d2);
}

struct Instance {
  Dataset ds;
  DataSpectrum sp;
};

Instance random_instance(std::uint64_t seed, int d0, int d2, int n = 200, double noise = 0.0) {
  std::mt19937_64 rng(seed);
  Instance in;
  in.ds.X = oracle::random_matrix(rng, n, d0);
  in.ds.Y = in.ds.X * oracle::random_matrix(rng, d2, d0, 0.8).transpose();
  if (noise > 0.0) in.ds.Y += oracle::random_matrix(rng, n, d2, noise);
  in.sp = compute_spectrum(in.ds);
  return in;
}

double kl_terms(const Vector& sigma, const Hyperparams& hp) {
  double v = 0.0;
  for (Eigen::Index i = 0; i < sigma.size(); ++i) {
    const double r = sigma(i) * sigma(i) / (hp.eta_enc * hp.eta_enc);
    v += 0.5 * hp.beta * (r - 1.0 - std::log(r));
  }
  return v;
}

}  // namespace

TEST_CASE("hyperparameters must be positive") {
  Hyperparams hp = make_hp(1.0, 2);
  CHECK_NOTHROW(hp.validate());
  hp.beta = 0.0;
  CHECK_THROWS_AS(hp.validate(), DomainError);
  hp = make_hp(1.0, 2);
  hp.eta_dec = -1.0;
  CHECK_THROWS_AS(hp.validate(), DomainError);
  hp = make_hp(1.0, 0);
  CHECK_THROWS_AS(hp.validate(), DomainError);
}

TEST_CASE("reduction reproduces the loss up to the stated constants") {
  const Instance in = random_instance(1, 4, 4);
  std::mt19937_64 rng(2);
  for (double beta : {0.5, 2.0}) {
    const Hyperparams hp = make_hp(beta, 3, Mode::Learnable, 1.3, 0.7);
    Vector sigma(3);
    sigma << 0.4, 1.1, 0.9;
    const ReducedProblem rp = reduce_to_factorization(in.sp, hp, sigma);
    CHECK(rp.ridge == doctest::Approx(hp.ridge()));
    for (int t = 0; t < 5; ++t) {
      const Matrix U = oracle::random_matrix(rng, 4, 3);
      const Matrix V = oracle::random_matrix(rng, 4, 3);
      const Matrix W = rp.W_from_V(V);
      const double vae = oracle::sample_loss(in.ds.X, in.ds.Y, U, W, sigma, hp.beta, hp.eta_enc, hp.eta_dec);
      const double constant = (in.sp.y_second_moment - in.sp.Z.squaredNorm()) / (2.0 * hp.eta_dec * hp.eta_dec);
      const double expected = 2.0 * hp.eta_dec * hp.eta_dec * (vae - kl_terms(sigma, hp) - constant);
      CHECK(rp.value(U, V) == doctest::Approx(expected).epsilon(1e-8));
      CHECK((rp.V_from_W(W) - V).norm() < 1e-10);
    }
  }
}

TEST_CASE("unit ridge for the standard hyperparameters") {
  const DataSpectrum sp = spectrum_of({2.0}, 1, 1);
  const ReducedProblem rp = reduce_to_factorization(sp, make_hp(1.0, 1), Vector::Ones(1));
  CHECK(rp.ridge == 1.0);
}

TEST_CASE("zero data gives the zero minimizer") {
  const DataSpectrum sp = spectrum_of({}, 3, 3);
  const GlobalMinimum gm = theorem1_solution(sp, make_hp(1.0, 2, Mode::Fixed));
  CHECK(gm.U.norm() == 0.0);
  CHECK(gm.W.norm() == 0.0);
  CHECK(min_factorization_value(sp, make_hp(1.0, 2), Vector::Ones(2)) == 0.0);
}

TEST_CASE("factors for a single mode match numeric minimization") {
  const DataSpectrum sp = spectrum_of({2.0}, 1, 1);
  const Hyperparams hp = make_hp(1.0, 1, Mode::Fixed);
  const Factors f = optimal_factors_given_sigma(sp, hp, Vector::Ones(1));
  CHECK(f.lambda(0) == doctest::Approx(1.0));
  CHECK(f.theta(0) == doctest::Approx(1.0));
  const double numeric = oracle::factorization_descent(sp.Z, Vector::Ones(1), 1.0, 1, 3);
  const double direct = std::pow(f.lambda(0) * f.theta(0) - 2.0, 2) + f.lambda(0) * f.lambda(0) +
                        f.theta(0) * f.theta(0);
  CHECK(direct == doctest::Approx(numeric).epsilon(1e-8));
}

TEST_CASE("clamped and padded modes are zero") {
  const DataSpectrum sp = spectrum_of({3.0, 0.5}, 3, 3);
  const Factors f = optimal_factors_given_sigma(sp, make_hp(1.0, 4), Vector::Ones(4));
  CHECK(f.lambda(0) > 0.0);
  for (int i = 1; i < 4; ++i) {
    CHECK(f.lambda(i) == 0.0);
    CHECK(f.theta(i) == 0.0);
  }
}

TEST_CASE("fixed-sigma factors on a two-mode instance") {
  const DataSpectrum sp = spectrum_of({3.0, 1.0}, 2, 2);
  const Hyperparams hp = make_hp(4.0, 2, Mode::Fixed);
  const Factors f = theorem1_factors(sp, hp);
  CHECK(f.lambda(0) == doctest::Approx(std::sqrt(2.0)));
  CHECK(f.theta(0) == doctest::Approx(std::sqrt(0.5)));
  CHECK(f.lambda(1) == 0.0);
  CHECK(f.theta(1) == 0.0);
  const double numeric = oracle::factorization_descent(sp.Z, Vector::Ones(2), 4.0, 2, 4);
  CHECK(min_factorization_value(sp, hp, Vector::Ones(2)) == doctest::Approx(numeric).epsilon(1e-8));

  const Factors g = optimal_factors_given_sigma(sp, hp, Vector::Ones(2));
  CHECK((g.lambda - f.lambda).norm() == 0.0);
  CHECK((g.theta - f.theta).norm() == 0.0);
}

TEST_CASE("minimal factorization value agrees with gradient descent on random instances") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> unif(0.3, 1.5);
  for (int t = 0; t < 6; ++t) {
    const Instance in = random_instance(100 + t, 3, 4);
    const Hyperparams hp = make_hp(0.5 + t * 0.7, 1 + t % 4);
    Vector sigma(hp.latent_dim);
    for (auto& s : sigma) s = unif(rng);
    const double numeric = oracle::factorization_descent(in.sp.Z, sigma, hp.ridge(), hp.latent_dim, t);
    CHECK(min_factorization_value(in.sp, hp, sigma) == doctest::Approx(numeric).epsilon(1e-7));
  }
}

TEST_CASE("complete collapse under the fixed-sigma closed form") {
  const DataSpectrum sp = spectrum_of({1.5, 1.0}, 2, 2);
  const GlobalMinimum gm = theorem1_solution(sp, make_hp(2.25, 2, Mode::Fixed));
  CHECK(gm.surviving() == 0);
  CHECK(gm.U.norm() == 0.0);
  CHECK(min_factorization_value(sp, make_hp(2.25, 2), Vector::Ones(2)) == doctest::Approx(3.25));
}

TEST_CASE("optimal sigma") {
  const DataSpectrum sp = spectrum_of({2.0, 1.0}, 2, 2);
  const Vector s = optimal_sigma(sp, make_hp(1.0, 3));
  CHECK(s(0) == doctest::Approx(0.5));
  CHECK(s(1) == doctest::Approx(1.0));  // boundary counts as collapsed
  CHECK(s(2) == 1.0);
  CHECK(oracle::mode_sigma(2.0, 1.0, 1.0, 1.0) == doctest::Approx(0.5).epsilon(1e-9));

  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> unif(0.2, 5.0);
  for (int t = 0; t < 50; ++t) {
    Hyperparams hp = make_hp(unif(rng), 1, Mode::Learnable, unif(rng), unif(rng));
    const double zeta = unif(rng) * 2.0;
    const DataSpectrum one = DataSpectrum::from_singular_values(Vector::Constant(1, zeta), 1, 1);
    const double sig = optimal_sigma(one, hp)(0);
    CHECK(sig > 0.0);
    CHECK(sig <= hp.eta_enc);
    CHECK(sig == doctest::Approx(oracle::mode_sigma(zeta, hp.beta, hp.eta_enc, hp.eta_dec)).epsilon(1e-8));
    CHECK(sigma_objective(zeta, sig, hp) ==
          doctest::Approx(oracle::mode_objective(zeta, sig, hp.beta, hp.eta_enc, hp.eta_dec)));
  }
}

TEST_CASE("learnable-sigma minimum: soft thresholding and structure") {
  const Instance in = random_instance(7, 5, 4);
  const Hyperparams hp = make_hp(1.0, 4);
  const GlobalMinimum gm = theorem2_solution(in.sp, hp);
  for (int i = 0; i < 4; ++i) {
    const double z = in.sp.zeta(i);
    CHECK(gm.lambda(i) * gm.theta(i) == doctest::Approx(std::max(0.0, z * z - hp.beta) / z));
    CHECK(gm.collapsed[i] == (z * z <= hp.beta));
    CHECK((gm.lambda(i) == 0.0) == gm.collapsed[i]);
    CHECK((gm.theta(i) == 0.0) == gm.collapsed[i]);
    if (i > 0) {
      CHECK(gm.lambda(i) <= gm.lambda(i - 1));
      CHECK(gm.theta(i) <= gm.theta(i - 1));
    }
  }
  // Product singular values.
  const Matrix V = in.sp.phi.cwiseSqrt().asDiagonal() * in.sp.P.transpose() * gm.W;
  Eigen::JacobiSVD<Matrix> svd(gm.U * V.transpose());
  Vector prod = (gm.lambda.array() * gm.theta.array()).matrix();
  std::sort(prod.data(), prod.data() + prod.size(), std::greater<>());
  for (int i = 0; i < 4; ++i) CHECK(svd.singularValues()(i) == doctest::Approx(prod(i)).epsilon(1e-8));

  // Predicted loss equals the sample loss at the minimizer.
  const double at_min = oracle::sample_loss(in.ds.X, in.ds.Y, gm.U, gm.W, gm.sigma, hp.beta, 1.0, 1.0);
  CHECK(gm.predicted_loss == doctest::Approx(at_min).epsilon(1e-10));
}

TEST_CASE("global optimality spot-check at random points") {
  const Instance in = random_instance(8, 4, 3, 200, 0.3);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> unif(0.1, 2.0);
  for (Mode m : {Mode::Fixed, Mode::Learnable}) {
    const Hyperparams hp = make_hp(1.5, 3, m);
    const GlobalMinimum gm = m == Mode::Fixed ? theorem1_solution(in.sp, hp) : theorem2_solution(in.sp, hp);
    for (int t = 0; t < 100; ++t) {
      const double scale = t < 50 ? 1.0 : 0.05;
      const Matrix U = gm.U + oracle::random_matrix(rng, 3, 3, scale);
      const Matrix W = gm.W + oracle::random_matrix(rng, 4, 3, scale);
      Vector sigma = gm.sigma;
      if (m == Mode::Learnable)
        for (auto& s : sigma) s *= unif(rng);
      const double v = oracle::sample_loss(in.ds.X, in.ds.Y, U, W, sigma, hp.beta, 1.0, 1.0);
      CHECK(v >= gm.predicted_loss - 1e-10);
    }
  }
}

TEST_CASE("complete collapse and the small-beta limit") {
  const DataSpectrum sp = spectrum_of({2.0, 1.0}, 2, 3);
  const GlobalMinimum gm = theorem2_solution(sp, make_hp(4.0, 2));
  CHECK(gm.surviving() == 0);
  CHECK(gm.U.norm() == 0.0);
  CHECK(gm.W.norm() == 0.0);
  CHECK(min_vae_value(sp, make_hp(4.0, 2)) == doctest::Approx(5.0 / 2.0));
  CHECK(std::abs(min_vae_value(sp, make_hp(1e-8, 2))) < 1e-5);
}

TEST_CASE("rotations and permutations of the solution") {
  const Instance in = random_instance(10, 4, 4);
  const Hyperparams fixed = make_hp(0.8, 3, Mode::Fixed);
  const GlobalMinimum base = theorem1_solution(in.sp, fixed);
  const GlobalMinimum rot = theorem1_solution(in.sp, fixed, random_orthogonal(3, 1));
  const double a = oracle::sample_loss(in.ds.X, in.ds.Y, base.U, base.W, base.sigma, fixed.beta, 1.0, 1.0);
  const double b = oracle::sample_loss(in.ds.X, in.ds.Y, rot.U, rot.W, rot.sigma, fixed.beta, 1.0, 1.0);
  CHECK(std::abs(a - b) <= 1e-10);
  CHECK((base.U * base.W.transpose() - rot.U * rot.W.transpose()).norm() < 1e-10);

  const Hyperparams learn = make_hp(0.8, 3);
  CHECK_THROWS_AS(theorem2_solution(in.sp, learn, random_orthogonal(3, 1)), DomainError);
  Matrix P = Matrix::Zero(3, 3);
  P(0, 2) = 1.0;
  P(1, 0) = -1.0;
  P(2, 1) = 1.0;
  CHECK(is_signed_permutation(P));
  const GlobalMinimum g0 = theorem2_solution(in.sp, learn);
  const GlobalMinimum g1 = theorem2_solution(in.sp, learn, P);
  const double c = oracle::sample_loss(in.ds.X, in.ds.Y, g0.U, g0.W, g0.sigma, learn.beta, 1.0, 1.0);
  const double d = oracle::sample_loss(in.ds.X, in.ds.Y, g1.U, g1.W, g1.sigma, learn.beta, 1.0, 1.0);
  CHECK(std::abs(c - d) <= 1e-10);
}

TEST_CASE("W is minimum-norm on rank-deficient inputs") {
  std::mt19937_64 rng(11);
  Dataset ds;
  const Matrix B = oracle::random_matrix(rng, 150, 2);
  ds.X = B * oracle::random_matrix(rng, 2, 4);
  ds.Y = B * oracle::random_matrix(rng, 2, 3);
  const DataSpectrum sp = compute_spectrum(ds);
  const GlobalMinimum gm = theorem2_solution(sp, make_hp(0.3, 2));
  // Columns of W lie in the range of P.
  CHECK((gm.W - sp.P * (sp.P.transpose() * gm.W)).norm() < 1e-10);
}

TEST_CASE("eta_enc does not change which modes collapse") {
  const Instance in = random_instance(12, 5, 5);
  for (double beta : {0.3, 1.0, 3.0, 10.0}) {
    std::vector<bool> ref;
    for (double e : {0.25, 1.0, 4.0}) {
      for (Mode m : {Mode::Fixed, Mode::Learnable}) {
        const Hyperparams hp = make_hp(beta, 5, m, e);
        const auto flags = (m == Mode::Fixed ? theorem1_solution(in.sp, hp) : theorem2_solution(in.sp, hp)).collapsed;
        if (ref.empty()) ref = flags;
        CHECK(flags == ref);
      }
    }
  }
}

TEST_CASE("beta and eta_dec enter through sqrt(beta) eta_dec") {
  const Instance in = random_instance(13, 4, 4);
  const Hyperparams a = make_hp(4.0, 4, Mode::Fixed, 1.0, 0.5);
  const Hyperparams b = make_hp(1.0, 4, Mode::Fixed, 1.0, 1.0);
  const Factors fa = theorem1_factors(in.sp, a);
  const Factors fb = theorem1_factors(in.sp, b);
  CHECK((fa.lambda - fb.lambda).norm() < 1e-12);
  CHECK((fa.theta - fb.theta).norm() < 1e-12);
  CHECK(theorem1_solution(in.sp, a).collapsed == theorem1_solution(in.sp, b).collapsed);
}

TEST_CASE("rotating two modes under learnable sigma raises the loss by a known amount") {
  const Instance in = random_instance(14, 4, 4);
  const Hyperparams hp = make_hp(0.6, 3, Mode::Learnable, 1.0, 0.9);
  const GlobalMinimum gm = theorem2_solution(in.sp, hp);
  REQUIRE(gm.surviving() >= 2);
  const double base = oracle::sample_loss(in.ds.X, in.ds.Y, gm.U, gm.W, gm.sigma, hp.beta, 1.0, 0.9);
  for (double t : {0.1, 0.7, 1.3}) {
    Matrix R = Matrix::Identity(3, 3);
    R(0, 0) = R(1, 1) = std::cos(t);
    R(0, 1) = -std::sin(t);
    R(1, 0) = std::sin(t);
    const double rotated =
        oracle::sample_loss(in.ds.X, in.ds.Y, gm.U * R, gm.W * R, gm.sigma, hp.beta, 1.0, 0.9);
    const double l1 = gm.lambda(0) * gm.lambda(0);
    const double l2 = gm.lambda(1) * gm.lambda(1);
    const double s1 = gm.sigma(0) * gm.sigma(0);
    const double s2 = gm.sigma(1) * gm.sigma(1);
    const double expected = std::pow(std::sin(t), 2) * (l1 - l2) * (s2 - s1) / (2.0 * 0.81);
    CHECK(rotated - base == doctest::Approx(expected).epsilon(1e-8));
    CHECK(rotated - base > 0.0);
  }
}

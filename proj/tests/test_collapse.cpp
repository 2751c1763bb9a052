#include <doctest.h>

#include <cmath>
#include <random>

#include "collapse_lab/collapse.hpp"
#include "collapse_lab/errors.hpp"
#include "oracles.hpp"

using namespace collapse_lab;

namespace {

DataSpectrum spectrum_of(const std::vector<double>& z, int d0, int d2) {
  return DataSpectrum::from_singular_values(Eigen::Map<const Vector>(z.data(), static_cast<Eigen::Index>(z.size())),
                                            d0, d2);
}

Hyperparams make_hp(double beta, int d1, double eta_enc = 1.0, double eta_dec = 1.0) {
  Hyperparams hp;
  hp.beta = beta;
  hp.latent_dim = d1;
  hp.eta_enc = eta_enc;
  hp.eta_dec = eta_dec;
  return hp;
}

const std::vector<double> kPublished = {5.12, 3.74, 3.25, 2.84, 2.57};

}  // namespace

TEST_CASE("published spectrum at beta = 3 under fixed decoder variance") {
  const DataSpectrum sp = spectrum_of(kPublished, 5, 5);
  const CollapseReport rep = predict(sp, make_hp(3.0, 5));
  CHECK(rep.regime == CollapseRegime::None);
  CHECK(rep.surviving == 5);
  CHECK(rep.mode_thresholds(4) == doctest::Approx(2.57 * 2.57));
  for (int i = 0; i + 1 < 5; ++i) CHECK(rep.mode_thresholds(i) >= rep.mode_thresholds(i + 1));
}

TEST_CASE("small and large beta") {
  const DataSpectrum sp = spectrum_of({2.0, 1.0, 0.5}, 3, 3);
  CHECK(predict(sp, make_hp(1e-9, 3)).regime == CollapseRegime::None);
  const CollapseReport top = predict(sp, make_hp(4.0 + 1e-9, 3));
  CHECK(top.regime == CollapseRegime::Complete);
  CHECK(top.hessian_psd);
  const CollapseReport mid = predict(sp, make_hp(2.0, 3));
  CHECK(mid.regime == CollapseRegime::Partial);
  CHECK(mid.surviving == 1);
}

TEST_CASE("extra latent dimensions beyond the signal do not make the regime partial") {
  const DataSpectrum sp = spectrum_of({2.0, 1.0}, 2, 2);
  const CollapseReport rep = predict(sp, make_hp(0.5, 4));
  CHECK(rep.surviving == 2);
  CHECK(rep.regime == CollapseRegime::None);
}

TEST_CASE("Hessian test: closed form, boundary and zero signal") {
  const DataSpectrum zero = spectrum_of({}, 2, 2);
  CHECK(hessian_origin_test(zero, make_hp(1.0, 2)).psd);

  const DataSpectrum sp = spectrum_of({2.0, 1.0}, 2, 2);
  const HessianTest edge = hessian_origin_test(sp, make_hp(4.0, 2));
  CHECK(edge.psd);
  CHECK(edge.min_quadratic == doctest::Approx(0.0));

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> unif(0.2, 4.0);
  for (int t = 0; t < 50; ++t) {
    const Hyperparams hp = make_hp(unif(rng), 2, unif(rng), unif(rng));
    const double z = unif(rng) * 2.0;
    const DataSpectrum one = spectrum_of({z, 0.1}, 2, 2);
    const double s2 = hp.eta_enc * hp.eta_enc;
    const double k = hp.ridge();
    const double expected = s2 + k - std::sqrt((s2 - k) * (s2 - k) + 4.0 * z * z);
    const HessianTest h = hessian_origin_test(one, hp);
    CHECK(h.min_quadratic == doctest::Approx(expected).epsilon(1e-10));
    CHECK(h.psd == (z * z <= hp.collapse_level()));
  }
}

TEST_CASE("Hessian PSD exactly when collapse is complete") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> unif(0.1, 10.0);
  int mismatches = 0;
  for (int t = 0; t < 200; ++t) {
    const auto z = oracle::random_zeta(rng, 5, 0.1, 4.0);
    const DataSpectrum sp = spectrum_of(z, 5, 5);
    const Hyperparams hp = make_hp(unif(rng), 1 + t % 7, 0.5 + unif(rng) / 5, 0.5 + unif(rng) / 10);
    const CollapseReport rep = predict(sp, hp);
    mismatches += hessian_origin_test(sp, hp).psd != (rep.regime == CollapseRegime::Complete);
    mismatches += rep.hessian_psd != (rep.regime == CollapseRegime::Complete);
  }
  CHECK(mismatches == 0);
}

TEST_CASE("finite-difference curvature agrees in sign") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unif(0.3, 6.0);
  for (int t = 0; t < 30; ++t) {
    const auto z = oracle::random_zeta(rng, 3, 0.2, 2.5);
    const DataSpectrum sp = spectrum_of(z, 3, 4);
    const Hyperparams hp = make_hp(unif(rng), 2);
    const HessianTest h = hessian_origin_test(sp, hp);
    if (std::abs(h.min_quadratic) <= 1e-4) continue;
    const double fd = numeric_hessian_check(sp, hp, 32, t);
    CHECK((fd >= -1e-6) == h.psd);
    if (h.psd) CHECK(fd >= h.min_quadratic - 1e-6);
  }
}

TEST_CASE("zero data has curvature 2 sigma^2") {
  const DataSpectrum zero = spectrum_of({}, 3, 3);
  CHECK(numeric_hessian_check(zero, make_hp(1.0, 2), 20) == doctest::Approx(2.0).epsilon(1e-6));
  CHECK_THROWS_AS(numeric_hessian_check(zero, make_hp(1.0, 2), 0), DomainError);
}

TEST_CASE("collapse flags are monotone in beta and independent of eta_enc") {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 20; ++t) {
    const auto z = oracle::random_zeta(rng, 4, 0.1, 3.0);
    const DataSpectrum sp = spectrum_of(z, 4, 4);
    std::vector<bool> prev(4, false);
    for (double beta = 0.05; beta < 12.0; beta *= 1.3) {
      const auto flags = predict(sp, make_hp(beta, 4)).collapsed;
      for (int i = 0; i < 4; ++i) CHECK((!prev[i] || flags[i]));
      for (double e : {0.25, 4.0}) CHECK(predict(sp, make_hp(beta, 4, e)).collapsed == flags);
      prev = flags;
    }
  }
}

TEST_CASE("beta_grid and sweep input validation") {
  const auto g = beta_grid(0.5, 2.0, 0.5);
  REQUIRE(g.size() == 4);
  CHECK(g.back() == doctest::Approx(2.0));
  CHECK(beta_grid(1.0, 2.6, 1.0).size() == 2);
  CHECK(beta_grid(1.0, 1.0, 1.0).size() == 1);
  CHECK_THROWS_AS(beta_grid(0.0, 1.0, 0.1), DomainError);
  const DataSpectrum sp = spectrum_of({1.0}, 1, 1);
  CHECK_THROWS_AS(beta_sweep(sp, make_hp(1.0, 1), {2.0, 1.0}), DomainError);
  CHECK_THROWS_AS(beta_sweep(sp, make_hp(1.0, 1), {-1.0}), DomainError);
  CHECK(beta_sweep(sp, make_hp(1.0, 1), {0.5}).size() == 1);
}

TEST_CASE("sweep on a synthetic 5x5 instance") {
  const Dataset ds = generate(SyntheticSpec::standard(5, 5, 2000, 1));
  const DataSpectrum sp = compute_spectrum(center(ds).data);
  const double top = sp.zeta(0) * sp.zeta(0);
  const auto rows = beta_sweep(sp, make_hp(1.0, 5), beta_grid(0.5, 20.0, 0.5), 2);
  CHECK(rows.front().rank == 5);
  CHECK(rows.back().rank == 0);
  std::vector<bool> seen(6, false);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    seen[rows[i].rank] = true;
    if (i > 0) CHECK(rows[i].rank <= rows[i - 1].rank);
    CHECK((rows[i].rank == 0) == (rows[i].beta >= top));
    CHECK(rows[i].sigma(0) <= 1.0);
    CHECK(rows[i].sigma.size() == 5);
  }
  for (int r = 0; r <= 5; ++r) CHECK(seen[r]);

  // Sigma of mode i rises to 1 at its threshold and stays there.
  for (int j = 0; j < 5; ++j) {
    const double z2 = sp.zeta(j) * sp.zeta(j);
    Hyperparams below = make_hp(z2 * 0.999, 5);
    Hyperparams at = make_hp(z2, 5);
    CHECK(optimal_sigma(sp, below)(j) < 1.0);
    CHECK(optimal_sigma(sp, below)(j) == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(optimal_sigma(sp, at)(j) == 1.0);
    CHECK(optimal_sigma(sp, make_hp(z2 * 2.0, 5))(j) == 1.0);
  }
}

TEST_CASE("sweep below every threshold keeps full rank") {
  const DataSpectrum sp = spectrum_of({3.0, 2.0, 1.5}, 3, 3);
  for (const auto& row : beta_sweep(sp, make_hp(1.0, 2), beta_grid(0.1, 2.0, 0.1))) CHECK(row.rank == 2);
}

TEST_CASE("published spectrum with learnable decoder variance collapses in reverse order") {
  const DataSpectrum sp = spectrum_of(kPublished, 5, 5);
  Hyperparams hp = make_hp(0.1, 5);
  hp.decvar_mode = Mode::Learnable;
  int prev = 5;
  std::vector<int> counts;
  for (double beta : beta_grid(0.01, 3.0, 0.01)) {
    hp.beta = beta;
    const CollapseReport rep = predict(sp, hp);
    CHECK(rep.surviving <= prev);
    // Surviving modes are always a prefix: the smallest zeta goes first.
    for (int i = 0; i < 5; ++i) CHECK(rep.collapsed[i] == (i >= rep.surviving));
    prev = rep.surviving;
    if (counts.empty() || counts.back() != rep.surviving) counts.push_back(rep.surviving);
  }
  CHECK(counts == std::vector<int>{5, 4, 3, 2, 1, 0});
}

TEST_CASE("scaling Y scales every threshold by c^2") {
  const Dataset ds = generate(SyntheticSpec::standard(4, 3, 300, 2));
  Dataset scaled = ds;
  scaled.Y *= 3.0;
  const CollapseReport a = predict(compute_spectrum(ds), make_hp(1.0, 3));
  const CollapseReport b = predict(compute_spectrum(scaled), make_hp(1.0, 3));
  CHECK((b.mode_thresholds - 9.0 * a.mode_thresholds).norm() < 1e-8 * b.mode_thresholds.norm());
}

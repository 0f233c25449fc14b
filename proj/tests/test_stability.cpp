#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "tcstab/stability.hpp"

using namespace tcstab;

namespace {

// Independent oracle for the lowest Dirichlet eigenvalue of -f'' + q f with
// q = (k^2 - 1/4) / r^2 on (1, R): second-order finite differences on a
// uniform grid, smallest eigenvalue by Sturm-sequence bisection, then one
// Richardson step to cancel the h^2 truncation error.  Shares no code with
// the spectral discretization under test.
double fd_smallest_eig(double R, double k, int m) {
  const double h = (R - 1.0) / (m + 1);
  std::vector<double> d(m);
  for (int i = 0; i < m; ++i) {
    const double r = 1.0 + (i + 1) * h;
    d[i] = 2.0 / (h * h) + (k * k - 0.25) / (r * r);
  }
  const double off2 = 1.0 / (h * h * h * h);
  auto count_below = [&](double x) {
    int cnt = 0;
    double q = d[0] - x;
    if (q < 0) ++cnt;
    for (int i = 1; i < m; ++i) {
      if (q == 0.0) q = 1e-300;
      q = d[i] - x - off2 / q;
      if (q < 0) ++cnt;
    }
    return cnt;
  };
  double lo = 0.0, hi = 4.0 / (h * h) + 20.0;
  while (count_below(hi) < 1) hi *= 2;
  while (hi - lo > 1e-13 * hi) {
    const double mid = 0.5 * (lo + hi);
    (count_below(mid) >= 1 ? hi : lo) = mid;
  }
  return 0.5 * (lo + hi);
}

double dirichlet_mu1(double R, double k) {
  const double mu_h = fd_smallest_eig(R, k, 1200);
  const double mu_h2 = fd_smallest_eig(R, k, 2401);  // exactly halves h
  return (4.0 * mu_h2 - mu_h) / 3.0;
}

FlowParams params_with(double nu, double B, double R) {
  FlowParams p;
  p.nu = nu;
  p.B = B;
  p.R = R;
  return p;
}

}  // namespace

TEST_CASE("stream estimate constants reproduce the frozen battery") {
  const auto grid = build_grid(2.0, 64);
  const auto c = verify_elliptic_estimates(1, grid, 200, 101);
  CHECK(c.grad_pair == doctest::Approx(1.01158395665).epsilon(1e-9));
  CHECK(c.pair_rf == doctest::Approx(0.0454062424869).epsilon(1e-9));
  CHECK(c.grad_l1 == doctest::Approx(0.0913488537682).epsilon(1e-9));
  CHECK(c.pointwise == doctest::Approx(0.352541878572).epsilon(1e-9));
  CHECK(c.trials == 200);

  // cross-check against an independent reference implementation of the same
  // battery (different RNG stream, hence the loose tolerance)
  CHECK(c.grad_pair == doctest::Approx(1.012).epsilon(0.10));
  CHECK(c.pair_rf == doctest::Approx(0.046).epsilon(0.10));
  CHECK(c.grad_l1 == doctest::Approx(0.095).epsilon(0.10));
  CHECK(c.pointwise == doctest::Approx(0.355).epsilon(0.10));
}

TEST_CASE("axisymmetric pointwise constant reproduces the frozen value") {
  const auto grid = build_grid(2.0, 64);
  const double ax = axisymmetric_pointwise_constant(grid, 200, 202);
  CHECK(ax == doctest::Approx(0.164877454748).epsilon(1e-9));
  CHECK(ax == doctest::Approx(0.1676).epsilon(0.25));  // independent reference
}

TEST_CASE("stream estimate constants are stable under grid doubling") {
  const auto c64 = verify_elliptic_estimates(4, build_grid(2.0, 64), 200, 303);
  const auto c128 = verify_elliptic_estimates(4, build_grid(2.0, 128), 200, 303);
  CHECK(std::abs(c128.grad_pair / c64.grad_pair - 1.0) < 0.05);
  CHECK(std::abs(c128.pair_rf / c64.pair_rf - 1.0) < 0.05);
  CHECK(std::abs(c128.grad_l1 / c64.grad_l1 - 1.0) < 0.05);
  CHECK(std::abs(c128.pointwise / c64.pointwise - 1.0) < 0.05);
}

TEST_CASE("stream estimate constants stay bounded over wavenumber and radius ratio") {
  for (double R : {2.0, 4.0}) {
    const auto grid = build_grid(R, 64);
    for (int k : {1, 2, 4, 8, 16}) {
      const auto c = verify_elliptic_estimates(k, grid, 50, 7);
      CHECK(std::isfinite(c.grad_pair));
      CHECK(c.grad_pair > 0.0);
      CHECK(c.grad_pair < 1.1);  // pairing identity: ratio is 1 up to quadrature
      CHECK(c.pair_rf > 0.0);
      CHECK(c.pair_rf < 1.05);
      CHECK(c.grad_l1 > 0.0);
      CHECK(c.grad_l1 < 2.0);
      CHECK(c.pointwise > 0.0);
      CHECK(c.pointwise < 2.0);
    }
  }
}

TEST_CASE("gap matches an independent eigenvalue solve when rotation vanishes") {
  const auto grid = build_grid(2.0, 64);
  const auto bundle = assemble_mode_operator(params_with(1e-3, 0.0, 2.0), 2, grid);
  const auto gap = spectral_gap(bundle);
  const double mu1 = dirichlet_mu1(2.0, 2.0);
  CHECK(std::abs(gap.psi - 1e-3 * mu1) / (1e-3 * mu1) < 1e-8);
  CHECK(std::abs(gap.argmin_lambda) < 1e-6);  // self-adjoint: minimum at zero shift
  CHECK_FALSE(gap.range_warning);
}

TEST_CASE("gap frozen values and monotonicity in viscosity") {
  const auto grid = build_grid(2.0, 64);
  double prev = 0.0;
  for (double nu : {1e-3, 3e-3, 1e-2}) {
    const auto gap = spectral_gap(assemble_mode_operator(params_with(nu, 1.0, 2.0), 1, grid));
    CHECK(gap.psi > prev);  // gap closes as nu does
    CHECK(gap.psi >= 0.0);
    CHECK(gap.argmin_lambda >= gap.lambda_lo);
    CHECK(gap.argmin_lambda <= gap.lambda_hi);
    CHECK(gap.lambda_steps >= 64);
    // window covers the rotation range 1/r^2 in [1/R^2, 1] scaled by k B
    CHECK(gap.lambda_lo <= 0.25);
    CHECK(gap.lambda_hi >= 1.0);
    prev = gap.psi;
    if (nu == 1e-3) {
      CHECK(gap.psi == doctest::Approx(0.041319285).epsilon(1e-6));
    } else if (nu == 3e-3) {
      CHECK(gap.psi == doctest::Approx(0.0689318339).epsilon(1e-6));
    } else {
      CHECK(gap.psi == doctest::Approx(0.126250266).epsilon(1e-6));
      CHECK(gap.argmin_lambda == doctest::Approx(0.457259332).epsilon(1e-4));
    }
  }
}

TEST_CASE("gap is a lower bound for sampled singular values") {
  const auto grid = build_grid(2.0, 64);
  const auto bundle = assemble_mode_operator(params_with(1e-2, 1.0, 2.0), 1, grid);
  const auto gap = spectral_gap(bundle);
  const int ni = grid.n - 2;
  for (int j : {0, 13, 47, 80, 95}) {
    const double lam =
        gap.lambda_lo + j * (gap.lambda_hi - gap.lambda_lo) / (gap.lambda_steps - 1);
    CMat shifted = bundle.Le;
    shifted.diagonal().array() -= cplx(0.0, lam);
    Eigen::BDCSVD<CMat> svd(shifted);
    CHECK(svd.singularValues().minCoeff() >= gap.psi * (1.0 - 1e-12));
  }
}

TEST_CASE("resolvent solutions at sampled shifts respect the gap ceiling") {
  const auto grid = build_grid(2.0, 64);
  const auto bundle = assemble_mode_operator(params_with(1e-2, 1.0, 2.0), 1, grid);
  const auto gap = spectral_gap(bundle);
  Rng rng(909);
  double worst = 0.0;
  for (int j = 0; j < gap.lambda_steps; j += 7) {
    const double lam =
        gap.lambda_lo + j * (gap.lambda_hi - gap.lambda_lo) / (gap.lambda_steps - 1);
    CVec F = rand_field(rng, grid);
    F /= wnorm(grid, F);
    const auto sol = solve_resolvent(bundle, lam / bundle.params.B, F);
    CHECK(sol.residual < 1e-10);
    worst = std::max(worst, wnorm(grid, sol.omega.values) * gap.psi);
  }
  CHECK(worst <= 1.0 + 1e-6);
}

TEST_CASE("resolvent solve inverts the forward application") {
  const auto grid = build_grid(2.0, 64);
  const auto bundle = assemble_mode_operator(params_with(1e-2, 1.0, 2.0), 1, grid);
  const double lam = 0.55;
  Rng rng(910);
  const CVec xs = interior(rand_field(rng, grid, 12, -2.0));
  // forward image under the same weak operator the solve factors
  const CVec Fi = bundle.mass.cwiseInverse().asDiagonal() * (bundle.L * xs).eval() -
                  cplx(0, 1) * bundle.params.B * lam * xs;
  const auto sol = solve_resolvent(bundle, lam, pad(Fi));
  CHECK((interior(sol.omega.values) - xs).norm() / xs.norm() < 1e-9);
  CHECK(sol.residual < 1e-10);
  CHECK(sol.omega.k == 1);
  CHECK(sol.phi.values.size() == grid.n);
}

TEST_CASE("resolvent solve is linear and annihilates zero forcing") {
  const auto grid = build_grid(2.0, 48);
  const auto bundle = assemble_mode_operator(params_with(1e-3, 1.0, 2.0), 2, grid);

  const auto zero = solve_resolvent(bundle, 0.4, CVec::Zero(grid.n));
  CHECK(zero.omega.values.norm() == 0.0);
  CHECK(zero.phi.values.norm() == 0.0);

  Rng rng(11);
  const CVec F1 = rand_field(rng, grid);
  const CVec F2 = rand_field(rng, grid);
  const cplx a(0.7, -0.3), b(-1.2, 0.4);
  const auto s1 = solve_resolvent(bundle, 0.4, F1);
  const auto s2 = solve_resolvent(bundle, 0.4, F2);
  const auto s12 = solve_resolvent(bundle, 0.4, CVec(a * F1 + b * F2));
  const double scale = s12.omega.values.norm();
  CHECK((s12.omega.values - a * s1.omega.values - b * s2.omega.values).norm() < 1e-11 * scale);
}

TEST_CASE("resolvent estimate constants are flat across the viscosity sweep") {
  const auto grid = build_grid(2.0, 48);
  const auto lam_grid = default_lambda_grid(2.0, 21);
  const auto sweep = verify_resolvent_bounds(params_with(1e-2, 1.0, 2.0), 1, grid,
                                             {1e-2, 3e-3, 1e-3, 3e-4, 1e-4}, lam_grid, 20, 404);
  // the first family is the headline estimate; the others share its tolerance
  CHECK(std::abs(sweep.fits[0].slope) < 0.15);
  for (int j = 0; j < 4; ++j) {
    CHECK(std::abs(sweep.fits[j].slope) < 0.2);
    CHECK(sweep.fits[j].r_squared >= 0.0);
    CHECK(sweep.fits[j].r_squared <= 1.0);
  }
  // frozen regression values for the fitted slopes
  CHECK(sweep.fits[0].slope == doctest::Approx(-0.0048028).epsilon(1e-3));
  CHECK(sweep.fits[1].slope == doctest::Approx(-0.135978).epsilon(1e-3));
  CHECK(sweep.fits[2].slope == doctest::Approx(0.00293446).epsilon(1e-3));
  CHECK(sweep.fits[3].slope == doctest::Approx(-0.0682599).epsilon(1e-3));

  for (const auto& s : sweep.samples) {
    for (int j = 0; j < 4; ++j) {
      CHECK(std::isfinite(s.worst[j]));
      CHECK(s.worst[j] > 0.0);
      // sampled ratios sum two norm terms; the certified value is the
      // root-sum-of-squares supremum, so sqrt(2) relates the two
      CHECK(s.worst_sampled[j] <= std::sqrt(2.0) * s.worst[j] * 1.02);
      CHECK(s.argmin_lambda[j] >= lam_grid.front());
      CHECK(s.argmin_lambda[j] <= lam_grid.back());
    }
  }
}

TEST_CASE("certified resolvent suprema do not depend on the trial count") {
  const auto grid = build_grid(2.0, 48);
  const auto lam_grid = default_lambda_grid(2.0, 11);
  const auto p = params_with(1e-3, 1.0, 2.0);
  const auto a = resolvent_bound_constants(p, 1, grid, lam_grid, 20, 21);
  const auto b = resolvent_bound_constants(p, 1, grid, lam_grid, 40, 21);
  for (int j = 0; j < 4; ++j) {
    CHECK(a.worst[j] == doctest::Approx(b.worst[j]).epsilon(1e-13));
    // doubling the trial count moves the sampled maximum only modestly
    CHECK(std::abs(b.worst_sampled[j] / a.worst_sampled[j] - 1.0) < 0.2);
  }
}

TEST_CASE("resolvent worst case concentrates in the critical band") {
  const auto grid = build_grid(2.0, 48);
  const auto p = params_with(1e-3, 1.0, 2.0);
  const auto inside = resolvent_bound_constants(p, 1, grid, default_lambda_grid(2.0, 21), 10, 808);
  const auto outside = resolvent_bound_constants(p, 1, grid, {1.5, 2.0}, 10, 808);
  for (int j = 0; j < 4; ++j) CHECK(outside.worst[j] < inside.worst[j]);
}

TEST_CASE("accretivity battery across azimuthal numbers") {
  const auto grid = build_grid(2.0, 64);
  for (int k = 1; k <= 8; ++k) {
    const auto bundle = assemble_mode_operator(params_with(1e-3, 1.0, 2.0), k, grid);
    const auto rep = check_accretivity(bundle, 60, 500 + k);
    CHECK(rep.min_real >= -1e-12);
    CHECK(rep.max_real_residual < 1e-10);
    CHECK(rep.max_imag_residual < 1e-10);
    REQUIRE(rep.shift_norm.size() == rep.shifts.size());
    for (double s : rep.shift_norm) CHECK(s <= 1.0 + 1e-10);  // lambda ||(lambda+L)^-1|| <= 1
  }
}

TEST_CASE("propagator norms stay under the gap exponential with the universal slack") {
  const auto grid = build_grid(2.0, 64);
  const auto bundle = assemble_mode_operator(params_with(1e-3, 1.0, 2.0), 1, grid);
  const auto gap = spectral_gap(bundle);
  const auto rep = semigroup_bound_check(bundle, gap.psi, {0.5, 1.0, 5.0, 10.0, 50.0});
  CHECK(rep.all_hold);
  REQUIRE(rep.t.size() == 5);
  double min_log = 1e300;
  for (size_t i = 0; i < rep.t.size(); ++i) {
    CHECK(rep.norm[i] <= 1.0 + 1e-12);  // contraction semigroup
    CHECK(rep.bound[i] ==
          doctest::Approx(std::exp(-rep.t[i] * gap.psi + M_PI / 2.0)).epsilon(1e-12));
    CHECK(rep.margin[i] > 0.0);
    min_log = std::min(min_log, rep.log_margin[i]);
  }
  CHECK(min_log > 0.0);  // bound / norm >= 1 everywhere
  CHECK(min_log == doctest::Approx(1.29589576).epsilon(1e-4));
}

TEST_CASE("propagator norms are exact exponentials in the self-adjoint case") {
  const auto grid = build_grid(2.0, 64);
  const auto bundle = assemble_mode_operator(params_with(1e-3, 0.0, 2.0), 2, grid);
  const auto gap = spectral_gap(bundle);
  const auto rep = semigroup_bound_check(bundle, gap.psi, {0.0, 1.0, 5.0, 10.0, 50.0});
  CHECK(rep.all_hold);
  CHECK(rep.norm[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(rep.bound[0] == doctest::Approx(std::exp(M_PI / 2.0)).epsilon(1e-12));
  for (size_t i = 0; i < rep.t.size(); ++i)
    CHECK(rep.norm[i] == doctest::Approx(std::exp(-rep.t[i] * gap.psi)).epsilon(1e-10));
}

TEST_CASE("default shift grid brackets the critical band") {
  const auto g = default_lambda_grid(2.0);
  REQUIRE(g.size() >= 2);
  CHECK(g.front() <= 0.25);
  CHECK(g.back() >= 1.0);
  for (size_t i = 1; i < g.size(); ++i) CHECK(g[i] > g[i - 1]);
  CHECK_THROWS_AS((void)default_lambda_grid(2.0, 1), param_error);
}

TEST_CASE("scan window diagnostics") {
  const auto grid = build_grid(2.0, 48);
  const auto bundle = assemble_mode_operator(params_with(1e-2, 1.0, 2.0), 1, grid);
  CHECK(spectral_gap(bundle, 0.3, 0.5, 64).range_warning);
  CHECK_FALSE(spectral_gap(bundle, 0.1, 1.2, 96).range_warning);
  CHECK_THROWS_AS(spectral_gap(bundle, 0.1, 1.2, 32), param_error);
  CHECK_THROWS_AS(spectral_gap(bundle, 1.2, 0.1, 96), param_error);
}

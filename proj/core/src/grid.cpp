#include "tcstab/grid.hpp"

#include <cmath>

namespace tcstab {

namespace {
constexpr double kPi = 3.14159265358979323846264338327950288;
}

RadialGrid build_grid(double R, int n) {
  if (!(R > 1.0)) throw param_error("build_grid: aspect ratio must satisfy R > 1");
  if (n < 8) throw param_error("build_grid: need at least 8 nodes");

  const int N = n - 1;
  RadialGrid g;
  g.R = R;
  g.n = n;
  g.nodes.resize(n);
  g.quad_weights.resize(n);
  g.deriv.resize(n, n);

  // Chebyshev points t_j = cos(pi j / N) run from 1 down to -1; the affine map
  // r = 1 + (R-1)(1-t)/2 makes the node list ascending on [1, R].
  Vec lam(n);
  for (int j = 0; j <= N; ++j) {
    const double t = std::cos(kPi * j / N);
    g.nodes[j] = 1.0 + (R - 1.0) * (1.0 - t) / 2.0;
    lam[j] = ((j % 2) ? -1.0 : 1.0) * ((j == 0 || j == N) ? 0.5 : 1.0);
  }
  g.nodes[0] = 1.0;
  g.nodes[N] = R;

  // barycentric differentiation; diagonal by the negative-sum trick so that
  // constants are differentiated to exactly zero
  for (int i = 0; i <= N; ++i) {
    double rowsum = 0.0;
    for (int j = 0; j <= N; ++j) {
      if (i == j) continue;
      const double d = (lam[j] / lam[i]) / (g.nodes[i] - g.nodes[j]);
      g.deriv(i, j) = d;
      rowsum += d;
    }
    g.deriv(i, i) = -rowsum;
  }

  // Clenshaw-Curtis weights (symmetric in j, so the ascending order is fine)
  for (int j = 0; j <= N; ++j) {
    double s = 0.0;
    for (int m = 1; m <= N / 2; ++m) {
      const double b = (2 * m == N) ? 1.0 : 2.0;
      s += b / (4.0 * m * m - 1.0) * std::cos(2.0 * kPi * m * j / N);
    }
    const double c = (j == 0 || j == N) ? 1.0 : 2.0;
    g.quad_weights[j] = (c / N) * (1.0 - s) * (R - 1.0) / 2.0;
  }

  // quadratic form of ||f'||^2 + ||f/r||^2 and the factorization of its
  // interior block (SPD) used by the dual norm
  const Mat W = g.quad_weights.asDiagonal();
  g.h1_form = g.deriv.transpose() * W * g.deriv;
  g.h1_form.diagonal() += (g.quad_weights.array() / g.nodes.array().square()).matrix();
  const Mat K_int = g.h1_form.block(1, 1, n - 2, n - 2);
  g.h1_llt.compute(K_int);
  if (g.h1_llt.info() != Eigen::Success)
    throw numerical_error("build_grid: dual-norm form not positive definite");
  return g;
}

CVec pad(const CVec& f_int) {
  CVec f = CVec::Zero(f_int.size() + 2);
  f.segment(1, f_int.size()) = f_int;
  return f;
}

cplx inner_product(const CVec& f, const CVec& g, const RadialGrid& grid) {
  if (f.size() != grid.n || g.size() != grid.n)
    throw param_error("inner_product: field size does not match grid");
  return (grid.quad_weights.array() * f.array() * g.array().conjugate()).sum();
}

double wnorm(const RadialGrid& grid, const CVec& f) {
  return std::sqrt((grid.quad_weights.array() * f.array().abs2()).sum());
}

double wnorm(const RadialGrid& grid, const Vec& f) {
  return std::sqrt((grid.quad_weights.array() * f.array().square()).sum());
}

double h1r_dual(const CVec& f, const RadialGrid& grid) {
  if (f.size() != grid.n) throw param_error("h1r_dual: field size does not match grid");
  // sup over Dirichlet g of |<f,g>| / h1r(g) is attained at the solution of
  // the auxiliary problem (-d_rr + r^{-2}) u = f, u(1) = u(R) = 0, with value
  // sqrt(<f, u>); in weak form: K u = w*f on the interior block.
  const CVec b = (grid.quad_weights.array() * f.array()).matrix().segment(1, grid.n - 2);
  CVec u(b.size());
  u.real() = grid.h1_llt.solve(b.real().eval());
  u.imag() = grid.h1_llt.solve(b.imag().eval());
  const double val = b.dot(u).real();
  return std::sqrt(std::max(0.0, val));
}

NormReport norms(const CVec& f, const RadialGrid& grid) {
  if (f.size() != grid.n) throw param_error("norms: field size does not match grid");
  NormReport rep;
  rep.l2 = wnorm(grid, f);
  const CVec df = grid.deriv * f;
  const CVec fr = (f.array() / grid.nodes.array()).matrix();
  rep.h1r = std::sqrt(wnorm(grid, df) * wnorm(grid, df) + wnorm(grid, fr) * wnorm(grid, fr));
  rep.h1r_dual = h1r_dual(f, grid);
  rep.linf = f.size() ? f.cwiseAbs().maxCoeff() : 0.0;
  return rep;
}

CMat to_physical(const std::vector<CVec>& modes, int K, int ntheta) {
  if (static_cast<int>(modes.size()) != 2 * K + 1)
    throw param_error("to_physical: expected 2K+1 mode profiles");
  if (ntheta <= 2 * K)
    throw param_error("to_physical: ntheta must exceed 2K to avoid aliasing");
  const int n = static_cast<int>(modes[0].size());
  CMat phys = CMat::Zero(ntheta, n);
  for (int k = -K; k <= K; ++k) {
    const CVec& mk = modes[k + K];
    if (mk.size() != n) throw param_error("to_physical: inconsistent mode profile lengths");
    for (int j = 0; j < ntheta; ++j) {
      const double th = 2.0 * kPi * j / ntheta;
      phys.row(j) += std::exp(I * (k * th)) * mk.transpose();
    }
  }
  return phys;
}

std::vector<CVec> to_modes(const CMat& phys, int K) {
  const int ntheta = static_cast<int>(phys.rows());
  if (ntheta <= 2 * K)
    throw param_error("to_modes: ntheta must exceed 2K to avoid aliasing");
  std::vector<CVec> modes(2 * K + 1);
  for (int k = -K; k <= K; ++k) {
    CVec acc = CVec::Zero(phys.cols());
    for (int j = 0; j < ntheta; ++j) {
      const double th = 2.0 * kPi * j / ntheta;
      acc += std::exp(-I * (k * th)) * phys.row(j).transpose();
    }
    modes[k + K] = acc / static_cast<double>(ntheta);
  }
  return modes;
}

CVec rand_field(Rng& rng, const RadialGrid& grid, int nmodes, double power) {
  CVec f = CVec::Zero(grid.n);
  const Vec xi = ((grid.nodes.array() - 1.0) / (grid.R - 1.0)).matrix();
  for (int m = 1; m <= nmodes; ++m) {
    const double re = rng.gauss();
    const double im = rng.gauss();
    const cplx c = cplx(re, im) * std::pow(static_cast<double>(m), power);
    f += c * (kPi * m * xi.array()).sin().matrix().cast<cplx>();
  }
  f[0] = 0.0;
  f[grid.n - 1] = 0.0;
  return f;
}

}  // namespace tcstab

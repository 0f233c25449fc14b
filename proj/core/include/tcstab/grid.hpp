#pragma once

#include <vector>

#include "tcstab/rng.hpp"
#include "tcstab/types.hpp"

namespace tcstab {

// Collocation discretization of [1, R] with the measure dr.
// Nodes are Chebyshev points mapped affinely to [1, R], stored ascending
// (nodes[0] = 1, nodes[n-1] = R).  deriv is the dense nodal differentiation
// matrix; quad_weights are Clenshaw-Curtis weights (positive, sum R-1).
//
// h1_form = deriv^T W deriv + diag(w / r^2) is the quadratic form of the
// norm ||f'||^2 + ||f/r||^2; its interior block is kept factored for the
// dual-norm solve in norms().
struct RadialGrid {
  double R = 0.0;
  int n = 0;
  Vec nodes;
  Vec quad_weights;
  Mat deriv;
  Mat h1_form;
  Eigen::LLT<Mat> h1_llt;  // LLT of h1_form interior block
};

RadialGrid build_grid(double R, int n);

// interior slice (Dirichlet dofs) and zero-padded extension back to the full grid
inline CVec interior(const CVec& f) { return f.segment(1, f.size() - 2); }
inline Vec interior(const Vec& f) { return f.segment(1, f.size() - 2); }
CVec pad(const CVec& f_int);

// <f, g> = integral f conj(g) dr, quadrature-weighted
cplx inner_product(const CVec& f, const CVec& g, const RadialGrid& grid);

// sqrt(sum w |f|^2): the discrete L^2(dr) norm used throughout
double wnorm(const RadialGrid& grid, const CVec& f);
double wnorm(const RadialGrid& grid, const Vec& f);

struct NormReport {
  double l2 = 0.0;
  double h1r = 0.0;
  double h1r_dual = 0.0;
  double linf = 0.0;
};

// l2, H^1-type norm sqrt(||f'||^2 + ||f/r||^2), its dual over the Dirichlet
// test space (computed by one elliptic solve, exact discrete supremum), and
// the max nodal modulus.
NormReport norms(const CVec& f, const RadialGrid& grid);

// dual norm alone (the elliptic-solve path of norms())
double h1r_dual(const CVec& f, const RadialGrid& grid);

// f(r, theta_j) = sum_k modes[k+K](r) e^{i k theta_j} on theta_j = 2 pi j / ntheta.
// modes has length 2K+1 indexed k+K.  Requires ntheta > 2K (no aliasing).
CMat to_physical(const std::vector<CVec>& modes, int K, int ntheta);

// forward transform: mode k = mean over theta of f e^{-i k theta}
std::vector<CVec> to_modes(const CMat& phys, int K);

// smooth random Dirichlet field: sum of the first nmodes sine modes with
// complex Gaussian coefficients decaying like m^power; endpoints exactly zero
CVec rand_field(Rng& rng, const RadialGrid& grid, int nmodes = 16, double power = -2.0);

}  // namespace tcstab

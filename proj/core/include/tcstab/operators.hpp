#pragma once

#include "tcstab/grid.hpp"
#include "tcstab/types.hpp"

namespace tcstab {

// Physical/numerical parameter bundle.  The base azimuthal flow is
// U(r) = A r + B / r; a single diffusivity nu acts on both vorticity and
// temperature.  g_scale multiplies the buoyancy right-hand side.
struct FlowParams {
  double nu = 1e-3;
  double A = 0.0;
  double B = 1.0;
  double R = 2.0;
  double g_scale = 1.0;
  int K = 8;

  void validate() const {
    if (!(nu > 0.0)) throw param_error("FlowParams: nu must be positive");
    if (!(R > 1.0)) throw param_error("FlowParams: R must exceed 1");
    if (K < 1) throw param_error("FlowParams: truncation K must be at least 1");
  }
};

// Representation of a single azimuthal mode profile.
// weighted means f_k = r^{1/2} e^{i k A t} (hat f)_k: the change of variables
// that removes the first-order radial derivative and the rigid-rotation phase.
enum class Rep { hat, weighted };

struct ModeField {
  int k = 0;
  Rep rep = Rep::weighted;
  CVec values;
};

// Weak-form (Galerkin) operators for one azimuthal mode, assembled on the
// boundary-vanishing interior so that the discrete energy identities are
// exact:  Re(f^H L f) = nu (||f'||^2 + (k^2-1/4) ||f/r||^2) holds to roundoff.
//
// For k != 0 everything lives in the weighted representation with plain
// L^2(dr) geometry; the k == 0 (axisymmetric) bundle works on hat fields in
// L^2(r dr) geometry, where mass = (w r)_int.
struct OperatorBundle {
  int k = 0;
  FlowParams params;
  RadialGrid grid;
  Mat elliptic_form;  // n x n quadratic form of the (negative) elliptic operator
  Mat elliptic_int;   // its interior block, SPD
  Eigen::LLT<Mat> elliptic_llt;
  CMat L;    // interior evolution operator, weak form (includes the mass weights)
  CMat Le;   // diag(mass^{-1/2}) L diag(mass^{-1/2}): Euclidean-similar image
  Vec mass;  // interior mass diagonal
  Vec w_int, r_int;
  // strong (collocation) elliptic operator on the interior, for stream solves:
  // the nodal residual of Delta_k phi = omega vanishes identically, so the
  // solve converges spectrally instead of at the quadrature-crime rate of the
  // weak form (which is kept for the energy identities, where it is exact)
  Mat stream_int;
  Eigen::PartialPivLU<Mat> stream_lu;
};

// Advection-diffusion operator for mode k != 0 (weighted representation):
//    L f = -nu (f'' - (k^2 - 1/4) f / r^2) + i k B f / r^2
// with Dirichlet rows eliminated.  The sign makes the evolution
// d_t f + L f = forcing dissipative (accretive L).
OperatorBundle assemble_mode_operator(const FlowParams& params, int k, const RadialGrid& grid);

// Axisymmetric diffusion/stream bundle: quadratic form of -(d_rr + r^{-1} d_r)
// on L^2(r dr), Dirichlet boundary conditions.
OperatorBundle assemble_zero_mode(const FlowParams& params, const RadialGrid& grid);

// strong-form nodal application of the mode elliptic operator:
// k != 0: f'' - (k^2-1/4) f / r^2 ; k == 0: f'' + f' / r
CVec apply_elliptic(const OperatorBundle& bundle, const CVec& f);

// Solve Delta_k phi = omega, phi(1) = phi(R) = 0, by collocation on the
// interior nodes (one iterative-refinement pass keeps the nodal residual at
// roundoff level).
ModeField solve_stream(const ModeField& omega, const OperatorBundle& bundle);

// hat <-> weighted change of variables at time t (rotation coefficient A)
ModeField mode_transform(const ModeField& f, const RadialGrid& grid, double A, double t, Rep target);

}  // namespace tcstab

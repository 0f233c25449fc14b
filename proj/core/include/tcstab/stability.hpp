#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "tcstab/fit.hpp"
#include "tcstab/operators.hpp"

namespace tcstab {

// Worst-case constants from a randomized battery of stream-function solves.
// Each field is the max over trials of measured/reference for one inequality.
struct EllipticConstants {
  double R = 0;
  int k = 0, n = 0, trials = 0;
  double grad_pair = 0;   // (||D phi||_w^2 + k^2 ||phi/r||_w^2) / |<omega,phi>|
  double pair_rf = 0;     // |<omega,phi>| / (k^-2 ||r omega||_w^2)
  double grad_l1 = 0;     // (||D phi||_w^2 + k^2 ||phi/r||_w^2) / (|k|^-1 ||sqrt(r) omega||_L1^2)
  double pointwise = 0;   // (max|sqrt(r) D phi| + |k| max|phi/sqrt(r)|)
                          //   / ((R/(R-1))^(1/2) |k|^(-1/2) ||r omega||_w)
};

EllipticConstants verify_elliptic_estimates(int k, const RadialGrid& grid, int trials,
                                            std::uint64_t seed);

// max|D phi| / ((R/(R-1))^(1/2) (1+log R) ||r^(3/2) omega||_w) for the
// axisymmetric stream solve, worst case over random real vorticities.
double axisymmetric_pointwise_constant(const RadialGrid& grid, int trials, std::uint64_t seed);

// Solves (L - i k B lambda) omega = F in weak form, F given in the weighted
// representation on the full grid.  Returns omega and its stream function.
struct ResolventSolution {
  ModeField omega;
  ModeField phi;
  double residual = 0;  // ||H x - shift x - M F|| relative to ||M F||
};
ResolventSolution solve_resolvent(const OperatorBundle& bundle, double lambda, const CVec& F);

struct SpectralGapResult {
  double psi = 0;             // min over lambda of sigma_min(Le - i lambda)
  double argmin_lambda = 0;
  double lambda_lo = 0, lambda_hi = 0;
  int lambda_steps = 0;
  bool range_warning = false;  // scan window missed the rotation range of L
};

// Scans sigma_min(Le - i lambda I) over [lambda_lo, lambda_hi] with
// lambda_steps points (>= 64) and refines the minimum by golden section.
SpectralGapResult spectral_gap(const OperatorBundle& bundle, double lambda_lo, double lambda_hi,
                               int lambda_steps = 96);

// Same with the window derived from the numerical range of the skew part,
// padded by 20 percent (and a fixed fallback window when B = 0).
SpectralGapResult spectral_gap(const OperatorBundle& bundle, int lambda_steps = 96);

struct AccretivityReport {
  int trials = 0;
  double min_real = 0;            // min over fields of Re<L f, f>_w / ||f||_H1r^2
  double max_real_residual = 0;   // |Re<L f,f> - nu(||Df||^2 + (k^2-1/4)||f/r||^2)| / ||f||_H1r^2
  double max_imag_residual = 0;   // |Im<L f,f> - k B ||f/r||^2| / ||f||_H1r^2
  std::vector<double> shifts;     // lambda values probed for the resolvent bound
  std::vector<double> shift_norm; // lambda * ||(lambda + L)^-1||_w, should be <= 1
};

AccretivityReport check_accretivity(const OperatorBundle& bundle, int trials, std::uint64_t seed,
                                    const std::vector<double>& shifts = {0.1, 1.0, 10.0});

struct SemigroupReport {
  std::vector<double> t;
  std::vector<double> norm;        // ||exp(-t Le)||_2
  std::vector<double> bound;       // exp(-t psi + pi/2)
  std::vector<double> margin;      // bound - norm
  std::vector<double> log_margin;  // log(bound) - log(norm)
  bool all_hold = true;
};

SemigroupReport semigroup_bound_check(const OperatorBundle& bundle, double psi,
                                      const std::vector<double>& t_grid);

// Worst measured/bound ratio per resolvent inequality family at one viscosity:
// the exact operator norms (via SVD of the weighted solution map) and a
// randomized lower estimate from sampled forcings for cross-checking.
struct ResolventBoundSample {
  double nu = 0;
  std::array<double, 4> worst{};          // exact sup over the lambda window
  std::array<double, 4> worst_sampled{};  // max over random forcings
  std::array<double, 4> argmin_lambda{};  // where the sup is attained
};

ResolventBoundSample resolvent_bound_constants(const FlowParams& params, int k,
                                               const RadialGrid& grid,
                                               const std::vector<double>& lambda_grid, int trials,
                                               std::uint64_t seed);

// Sweeps nu, collecting the constants above and log-log fits of the exact
// worst ratios against nu.  Flat slopes mean the scalings are sharp.
struct ResolventBoundSweep {
  std::vector<ResolventBoundSample> samples;
  std::array<ScalingFit, 4> fits;
};

ResolventBoundSweep verify_resolvent_bounds(const FlowParams& base, int k, const RadialGrid& grid,
                                            const std::vector<double>& nus,
                                            const std::vector<double>& lambda_grid, int trials,
                                            std::uint64_t seed);

// Default lambda window for the resolvent battery on [1, R].
std::vector<double> default_lambda_grid(double R, int count = 31);

}  // namespace tcstab

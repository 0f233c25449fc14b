#include "tcstab/operators.hpp"

#include <cmath>

namespace tcstab {

namespace {

void finish_bundle(OperatorBundle& b) {
  const int ni = b.grid.n - 2;
  b.elliptic_int = b.elliptic_form.block(1, 1, ni, ni);
  b.elliptic_llt.compute(b.elliptic_int);
  if (b.elliptic_llt.info() != Eigen::Success)
    throw numerical_error("assemble: elliptic form not positive definite");
  const Vec scale = b.mass.array().sqrt().inverse().matrix();
  b.Le = scale.asDiagonal() * b.L * scale.asDiagonal();

  const Mat& D = b.grid.deriv;
  Mat strong = D * D;
  if (b.k == 0)
    strong += (Mat)(b.grid.nodes.array().inverse().matrix().asDiagonal() * D);
  else
    strong.diagonal() -=
        ((b.k * b.k - 0.25) / b.grid.nodes.array().square()).matrix();
  b.stream_int = strong.block(1, 1, ni, ni);
  b.stream_lu.compute(b.stream_int);
  if (b.stream_lu.matrixLU().diagonal().cwiseAbs().minCoeff() <= 0)
    throw numerical_error("assemble: collocation elliptic operator is singular");
}

}  // namespace

OperatorBundle assemble_mode_operator(const FlowParams& params, int k, const RadialGrid& grid) {
  params.validate();
  if (k == 0)
    throw param_error("assemble_mode_operator: k must be nonzero (use assemble_zero_mode)");

  OperatorBundle b;
  b.k = k;
  b.params = params;
  b.grid = grid;
  const int n = grid.n;
  const int ni = n - 2;
  b.w_int = interior(grid.quad_weights);
  b.r_int = interior(grid.nodes);

  const Mat W = grid.quad_weights.asDiagonal();
  b.elliptic_form = grid.deriv.transpose() * W * grid.deriv;
  b.elliptic_form.diagonal() +=
      ((k * k - 0.25) * grid.quad_weights.array() / grid.nodes.array().square()).matrix();

  b.mass = b.w_int;
  const Vec skew = (b.w_int.array() / b.r_int.array().square()).matrix();
  b.L = (params.nu * b.elliptic_form.block(1, 1, ni, ni)).cast<cplx>();
  b.L += (I * (static_cast<double>(k) * params.B)) * Mat(skew.asDiagonal()).cast<cplx>();
  finish_bundle(b);
  return b;
}

OperatorBundle assemble_zero_mode(const FlowParams& params, const RadialGrid& grid) {
  params.validate();
  OperatorBundle b;
  b.k = 0;
  b.params = params;
  b.grid = grid;
  const int n = grid.n;
  const int ni = n - 2;
  b.w_int = interior(grid.quad_weights);
  b.r_int = interior(grid.nodes);

  const Vec wr = (grid.quad_weights.array() * grid.nodes.array()).matrix();
  b.elliptic_form = grid.deriv.transpose() * wr.asDiagonal() * grid.deriv;
  b.mass = interior(wr);
  b.L = (params.nu * b.elliptic_form.block(1, 1, ni, ni)).cast<cplx>();
  finish_bundle(b);
  return b;
}

CVec apply_elliptic(const OperatorBundle& bundle, const CVec& f) {
  const RadialGrid& g = bundle.grid;
  if (f.size() != g.n) throw param_error("apply_elliptic: field size does not match grid");
  const CVec df = g.deriv * f;
  if (bundle.k == 0) return g.deriv * df + (df.array() / g.nodes.array()).matrix();
  const double c = bundle.k * bundle.k - 0.25;
  return g.deriv * df - (c * f.array() / g.nodes.array().square()).matrix();
}

ModeField solve_stream(const ModeField& omega, const OperatorBundle& bundle) {
  const RadialGrid& g = bundle.grid;
  if (omega.values.size() != g.n) throw param_error("solve_stream: field size does not match grid");
  if (omega.k != bundle.k) throw param_error("solve_stream: mode index does not match bundle");
  const Rep want = (bundle.k == 0) ? Rep::hat : Rep::weighted;
  if (omega.rep != want)
    throw param_error("solve_stream: expected weighted fields for k != 0, hat for k == 0");

  // collocation: Delta_k phi = omega at the interior nodes
  const CVec rhs = interior(omega.values);
  auto solve = [&](const CVec& b) {
    CVec x(b.size());
    x.real() = bundle.stream_lu.solve(b.real().eval());
    x.imag() = bundle.stream_lu.solve(b.imag().eval());
    return x;
  };
  CVec phi = solve(rhs);
  phi += solve(CVec(rhs - bundle.stream_int.cast<cplx>() * phi));  // one refinement pass

  ModeField out;
  out.k = omega.k;
  out.rep = omega.rep;
  out.values = pad(phi);
  return out;
}

ModeField mode_transform(const ModeField& f, const RadialGrid& grid, double A, double t, Rep target) {
  if (f.values.size() != grid.n) throw param_error("mode_transform: field size does not match grid");
  if (f.rep == target) return f;
  ModeField out;
  out.k = f.k;
  out.rep = target;
  const cplx phase = std::exp(I * (f.k * A * t));
  const Vec sq = grid.nodes.array().sqrt().matrix();
  if (target == Rep::weighted)
    out.values = (f.values.array() * sq.array().cast<cplx>() * phase).matrix();
  else
    out.values = (f.values.array() / sq.array().cast<cplx>() / phase).matrix();
  return out;
}

}  // namespace tcstab

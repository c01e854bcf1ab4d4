#pragma once

#include "rcs/linear_operator.hpp"
#include "rcs/transforms.hpp"

#include <cstdint>
#include <vector>

namespace rcs {

/// Row-major real image.
struct Image {
  Index height = 0;
  Index width = 0;
  Vec pixels;

  Image() = default;
  Image(Index h, Index w) : height(h), width(w), pixels(Vec::Zero(h * w)) {}
  Image(Index h, Index w, Vec data);

  double& operator()(Index r, Index c) { return pixels[r * width + c]; }
  double operator()(Index r, Index c) const { return pixels[r * width + c]; }
  Index size() const { return height * width; }
};

/// Forward differences with replicate boundary: dh(r, c) = x(r, c+1) - x(r, c)
/// and dv(r, c) = x(r+1, c) - x(r, c), zero in the last column / row.
struct GradientField {
  Index height = 0;
  Index width = 0;
  Vec dh;
  Vec dv;
};

GradientField grad(const Image& img);
/// Negative adjoint of grad: <grad u, p> = -<u, div p>.
Image div(const GradientField& field);
/// Isotropic total variation, sum over pixels of sqrt(dh^2 + dv^2).
double tv_norm(const Image& img);

/// Modified (high-contrast) Shepp-Logan phantom on a size x size grid.
/// Throws for size < 32.
Image shepp_logan(Index size);

/// Selected coefficients of a size x size 2-D transform, as sorted linear
/// indices into the row-major coefficient array.
struct SamplingMask {
  Index height = 0;
  Index width = 0;
  std::vector<Index> indices;

  Index count() const { return static_cast<Index>(indices.size()); }
};

/// `lines` equally spaced lines through the zero frequency, rasterized at
/// half-pixel steps out to radius size/2. Frequencies wrap modulo size, so the
/// mask is invariant under (r, c) -> (-r, -c). A non-zero seed rotates the
/// fan by a random offset below one angular step.
SamplingMask radial_mask(Index size, Index lines, std::uint64_t seed = 0);

/// Rows of the 2-D Hartley transform selected by a mask, row_gram_scale() == 1.
class SampledTransform2D final : public LinearOperator {
 public:
  using LinearOperator::apply;
  using LinearOperator::apply_adjoint;

  SampledTransform2D(Index height, Index width, std::vector<Index> indices);
  explicit SampledTransform2D(const SamplingMask& mask)
      : SampledTransform2D(mask.height, mask.width, mask.indices) {}

  Index rows() const override { return static_cast<Index>(indices_.size()); }
  Index cols() const override { return t_.size(); }
  void apply(const Vec& x, Vec& out) const override;
  void apply_adjoint(const Vec& y, Vec& out) const override;
  std::optional<double> row_gram_scale() const override { return 1.0; }

  const Transform2D& transform() const { return t_; }
  const std::vector<Index>& indices() const { return indices_; }
  /// Same transform restricted to the given positions of this operator's rows.
  SampledTransform2D restrict_rows(const std::vector<Index>& positions) const;

 private:
  Transform2D t_;
  std::vector<Index> indices_;
};

struct TvOptions {
  int max_iters = 600;
  /// Relative primal and dual residual tolerance.
  double tol = 1e-4;
  /// Initial penalties on w = grad x, on the data constraint and on e.
  double beta = 1.0;
  double gamma = 1.0;
  double delta = 1.0;
  double balance_ratio = 10.0;
  double balance_factor = 2.0;
  int balance_every = 10;
  /// Conjugate-gradient iterations for the x update per outer iteration.
  int inner_iters = 10;
};

struct TvResult {
  Image xhat;
  Vec ehat;  // sparse error estimate, empty for the TV-only problem
  int iterations = 0;
  double primal_residual = 0.0;  // relative, at exit
  double dual_residual = 0.0;
  double data_residual = 0.0;    // ||y - A xhat - ehat||
  double objective = 0.0;        // TV(xhat) + lambda ||ehat||_1
  bool converged = false;
};

/// min TV(x) + lambda ||e||_1  s.t. ||y - A x - e|| <= sigma, by alternating
/// directions with splitting variables for grad x, the data residual and e.
TvResult solve_tv_l1(const SampledTransform2D& op, const Vec& y, double lambda, double sigma,
                     const TvOptions& opts = {});

/// min TV(x)  s.t. ||y - A x|| <= sigma.
TvResult solve_tv(const SampledTransform2D& op, const Vec& y, double sigma,
                  const TvOptions& opts = {});

struct TwoStepResult {
  TvResult step1;
  TvResult step2;
  std::vector<Index> kept;  // positions in y judged clean
};

/// Solves the TV + l1 problem, keeps the measurements whose error estimate
/// satisfies |ehat_i| <= zero_threshold and re-solves TV-only on them.
/// Throws when no measurement is kept.
TwoStepResult two_step_recover(const SampledTransform2D& op, const Vec& y, double lambda,
                               double sigma, double zero_threshold, const TvOptions& opts = {});

/// 1e-3 * median |y|.
double default_zero_threshold(const Vec& y);

/// sqrt(n / (m ln n)).
double lambda_tv(Index n, Index m);

struct Corruption {
  Vec error;                   // same length as the clean coefficients
  std::vector<Index> support;  // sorted positions
};

/// Picks round(fraction * m) positions uniformly and sets
/// error_i = +/- factor * |clean_i| with random signs.
Corruption corrupt_measurements(const Vec& clean, double fraction, double factor,
                                std::uint64_t seed);

double relative_error(const Vec& estimate, const Vec& truth);

}  // namespace rcs

#pragma once

// Finite time scales and the Δ-calculus on them.
//
// A finite time scale is a strictly increasing list of points t_0 < ... <
// t_{N-1}. Every point is isolated, so the forward jump is the next point,
// the graininess is the gap to it, and the Δ-derivative is a forward
// difference quotient. The Δ-integral over [t_i, t_j) is the μ-weighted sum
// of the integrand on t_i..t_{j-1}.

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

namespace deltavar {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Jump operators at one point.
struct Jump {
  double sigma;
  double rho;
  double mu;
};

/// Reporting marker for the gap [t_i, t_{i+1}). Carries no calculus meaning.
struct SegmentTag {
  enum class Kind { Isolated, SampledDense };
  Kind kind = Kind::Isolated;
  double h = 0.0;

  friend bool operator==(const SegmentTag&, const SegmentTag&) = default;
};

class TimeScale {
 public:
  /// Throws ErrorCode::InvalidArgument unless the points are finite, strictly
  /// increasing and at least two. (k_restriction may still produce a
  /// single-point scale.)
  explicit TimeScale(std::vector<double> points,
                     std::vector<SegmentTag> tags = {});

  /// n equally spaced points on [a, b], tagged as a sampled-dense segment.
  static TimeScale uniform(double a, double b, std::size_t n);

  std::size_t size() const noexcept { return points_.size(); }
  const std::vector<double>& points() const noexcept { return points_; }
  const std::vector<SegmentTag>& segment_tags() const noexcept { return tags_; }

  double front() const noexcept { return points_.front(); }
  double back() const noexcept { return points_.back(); }
  double operator[](std::size_t i) const noexcept { return points_[i]; }

  // Index-based jump operators. The maximum is its own forward jump and the
  // minimum its own backward jump.
  double sigma(std::size_t i) const noexcept {
    return i + 1 < points_.size() ? points_[i + 1] : points_[i];
  }
  double rho(std::size_t i) const noexcept {
    return i > 0 ? points_[i - 1] : points_[i];
  }
  double mu(std::size_t i) const noexcept { return sigma(i) - points_[i]; }

  /// Index of t; throws ErrorCode::Domain when t is not a point of the scale.
  std::size_t index_of(double t) const;

  /// True when μ ≡ 1 on T^k (to within tol).
  bool unit_spaced(double tol = 1e-12) const noexcept;

  friend bool operator==(const TimeScale& a, const TimeScale& b) {
    return a.points_ == b.points_;
  }

 private:
  struct Restricted {};
  TimeScale(Restricted, std::vector<double> points, std::vector<SegmentTag> tags)
      : points_(std::move(points)), tags_(std::move(tags)) {}
  friend TimeScale k_restriction(const TimeScale&, std::size_t);

  std::vector<double> points_;
  std::vector<SegmentTag> tags_;
};

/// σ, ρ and μ at the point t.
Jump jump_operators(const TimeScale& ts, double t);

/// T^{k^r}: the first N - r points. Throws InsufficientPoints when N <= r.
TimeScale k_restriction(const TimeScale& ts, std::size_t r);

/// Vector-valued samples on a time scale; row i is the value at point i.
class GridFunction {
 public:
  GridFunction(TimeScale scale, Matrix values);
  /// Scalar-valued convenience constructor.
  GridFunction(TimeScale scale, const std::vector<double>& values);

  const TimeScale& scale() const noexcept { return scale_; }
  const Matrix& values() const noexcept { return values_; }
  std::size_t size() const noexcept { return scale_.size(); }
  std::size_t dim() const noexcept {
    return static_cast<std::size_t>(values_.cols());
  }
  Vector at(std::size_t i) const { return values_.row(static_cast<Eigen::Index>(i)).transpose(); }

 private:
  TimeScale scale_;
  Matrix values_;
};

/// r-th Δ-derivative; the result lives on T^{k^r}. Throws InsufficientPoints
/// when N <= r.
GridFunction delta_derivative(const GridFunction& f, std::size_t order = 1);

/// f^σ(t) = f(σ(t)) on the whole scale (f^σ(b) = f(b)).
GridFunction sigma_shift(const GridFunction& f);

/// ∫_lo^hi f(t) Δt for scale points lo <= hi.
Vector delta_integral(const GridFunction& f, double lo, double hi);

/// Same, by point index.
Vector delta_integral_by_index(const GridFunction& f, std::size_t lo,
                               std::size_t hi);

/// Running integral S[f](t) = ∫_a^{σ(t)} f(ξ) Δξ for the first K points of
/// `scale`, where `rows` holds f on those K points (K <= N). Because μ
/// vanishes at the maximum, S[f](b) = ∫_a^b f. The graininess is taken from
/// `scale`, so f may be a sequence that only exists on a k-restriction.
Matrix running_sigma_integral(const TimeScale& scale, const Matrix& rows);

/// The graininess μ as a scalar grid function on the whole scale.
GridFunction graininess(const TimeScale& ts);

struct IntegrationByPartsResiduals {
  double sigma_form;  // |∫ f^σ g^Δ - ([fg]_a^b - ∫ f^Δ g)|
  double plain_form;  // |∫ f g^Δ - ([fg]_a^b - ∫ f^Δ g^σ)|
  double magnitude;   // 1 + largest absolute term entering either formula
};

/// Both integration-by-parts formulas for scalar f, g on a common scale.
IntegrationByPartsResiduals integration_by_parts_residuals(
    const GridFunction& f, const GridFunction& g);

}  // namespace deltavar

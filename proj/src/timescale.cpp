#include "deltavar/timescale.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "deltavar/error.hpp"

namespace deltavar {

TimeScale::TimeScale(std::vector<double> points, std::vector<SegmentTag> tags)
    : points_(std::move(points)), tags_(std::move(tags)) {
  if (points_.size() < 2) {
    throw Error(ErrorCode::InvalidArgument,
                "a time scale needs at least 2 points, got " +
                    std::to_string(points_.size()));
  }
  for (std::size_t i = 0; i < points_.size(); ++i) {
    if (!std::isfinite(points_[i])) {
      throw Error(ErrorCode::InvalidArgument, "time scale point " +
                                                  std::to_string(i) +
                                                  " is not finite");
    }
    if (i > 0 && !(points_[i] > points_[i - 1])) {
      throw Error(ErrorCode::InvalidArgument,
                  "time scale points must be strictly increasing (index " +
                      std::to_string(i) + ")");
    }
  }
  if (tags_.empty()) {
    tags_.assign(points_.size() - 1, SegmentTag{});
  } else if (tags_.size() != points_.size() - 1) {
    throw Error(ErrorCode::InvalidArgument,
                "segment tags must have one entry per gap");
  }
}

TimeScale TimeScale::uniform(double a, double b, std::size_t n) {
  if (n < 2 || !(b > a)) {
    throw Error(ErrorCode::InvalidArgument,
                "uniform scale needs n >= 2 and b > a");
  }
  std::vector<double> pts(n);
  const double h = (b - a) / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    pts[i] = a + h * static_cast<double>(i);
  }
  pts.back() = b;
  std::vector<SegmentTag> tags(n - 1, SegmentTag{SegmentTag::Kind::SampledDense, h});
  return TimeScale(std::move(pts), std::move(tags));
}

std::size_t TimeScale::index_of(double t) const {
  auto it = std::lower_bound(points_.begin(), points_.end(), t);
  const double tol = 1e-12 * (1.0 + std::abs(t));
  if (it != points_.end() && std::abs(*it - t) <= tol) {
    return static_cast<std::size_t>(it - points_.begin());
  }
  if (it != points_.begin() && std::abs(*(it - 1) - t) <= tol) {
    return static_cast<std::size_t>(it - points_.begin() - 1);
  }
  throw Error(ErrorCode::Domain,
              "t = " + std::to_string(t) + " is not a point of the time scale");
}

bool TimeScale::unit_spaced(double tol) const noexcept {
  for (std::size_t i = 0; i + 1 < points_.size(); ++i) {
    if (std::abs(mu(i) - 1.0) > tol) return false;
  }
  return true;
}

Jump jump_operators(const TimeScale& ts, double t) {
  const std::size_t i = ts.index_of(t);
  return {ts.sigma(i), ts.rho(i), ts.mu(i)};
}

TimeScale k_restriction(const TimeScale& ts, std::size_t r) {
  if (ts.size() <= r) {
    throw Error(ErrorCode::InsufficientPoints,
                "k-restriction of order " + std::to_string(r) +
                    " needs more than " + std::to_string(r) + " points");
  }
  const std::size_t keep = ts.size() - r;
  std::vector<double> pts(ts.points().begin(),
                          ts.points().begin() + static_cast<long>(keep));
  std::vector<SegmentTag> tags(
      ts.segment_tags().begin(),
      ts.segment_tags().begin() + static_cast<long>(keep - 1));
  return TimeScale(TimeScale::Restricted{}, std::move(pts), std::move(tags));
}

GridFunction::GridFunction(TimeScale scale, Matrix values)
    : scale_(std::move(scale)), values_(std::move(values)) {
  if (static_cast<std::size_t>(values_.rows()) != scale_.size()) {
    throw Error(ErrorCode::InvalidArgument,
                "grid function has " + std::to_string(values_.rows()) +
                    " rows but the scale has " + std::to_string(scale_.size()) +
                    " points");
  }
}

GridFunction::GridFunction(TimeScale scale, const std::vector<double>& values)
    : GridFunction(std::move(scale),
                   Matrix(Eigen::Map<const Vector>(values.data(),
                                                   static_cast<Eigen::Index>(values.size())))) {}

GridFunction delta_derivative(const GridFunction& f, std::size_t order) {
  const TimeScale& ts = f.scale();
  if (ts.size() <= order) {
    throw Error(ErrorCode::InsufficientPoints,
                "Δ-derivative of order " + std::to_string(order) + " needs more than " +
                    std::to_string(order) + " points, scale has " +
                    std::to_string(ts.size()));
  }
  Matrix cur = f.values();
  for (std::size_t k = 0; k < order; ++k) {
    const Eigen::Index rows = cur.rows() - 1;
    Matrix next(rows, cur.cols());
    for (Eigen::Index i = 0; i < rows; ++i) {
      const double mu = ts.mu(static_cast<std::size_t>(i));
      next.row(i) = (cur.row(i + 1) - cur.row(i)) / mu;
    }
    cur = std::move(next);
  }
  return GridFunction(k_restriction(ts, order), std::move(cur));
}

GridFunction sigma_shift(const GridFunction& f) {
  const Eigen::Index n = f.values().rows();
  Matrix shifted(n, f.values().cols());
  shifted.topRows(n - 1) = f.values().bottomRows(n - 1);
  shifted.row(n - 1) = f.values().row(n - 1);
  return GridFunction(f.scale(), std::move(shifted));
}

Vector delta_integral_by_index(const GridFunction& f, std::size_t lo,
                               std::size_t hi) {
  if (lo > hi) {
    throw Error(ErrorCode::ReversedBounds, "Δ-integral lower bound exceeds upper bound");
  }
  if (hi >= f.size()) {
    throw Error(ErrorCode::Domain, "Δ-integral bound outside the scale");
  }
  Vector sum = Vector::Zero(f.values().cols());
  for (std::size_t i = lo; i < hi; ++i) {
    sum += f.scale().mu(i) * f.values().row(static_cast<Eigen::Index>(i)).transpose();
  }
  return sum;
}

Vector delta_integral(const GridFunction& f, double lo, double hi) {
  if (lo > hi) {
    throw Error(ErrorCode::ReversedBounds, "Δ-integral lower bound exceeds upper bound");
  }
  return delta_integral_by_index(f, f.scale().index_of(lo), f.scale().index_of(hi));
}

Matrix running_sigma_integral(const TimeScale& scale, const Matrix& rows) {
  if (static_cast<std::size_t>(rows.rows()) > scale.size()) {
    throw Error(ErrorCode::InvalidArgument,
                "running integral given more rows than scale points");
  }
  Matrix out(rows.rows(), rows.cols());
  Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(rows.cols());
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    acc += scale.mu(static_cast<std::size_t>(i)) * rows.row(i);
    out.row(i) = acc;
  }
  return out;
}

GridFunction graininess(const TimeScale& ts) {
  Matrix m(ts.size(), 1);
  for (std::size_t i = 0; i < ts.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = ts.mu(i);
  return GridFunction(ts, std::move(m));
}

IntegrationByPartsResiduals integration_by_parts_residuals(
    const GridFunction& f, const GridFunction& g) {
  if (!(f.scale() == g.scale())) {
    throw Error(ErrorCode::Domain, "integration by parts needs a common time scale");
  }
  if (f.dim() != 1 || g.dim() != 1) {
    throw Error(ErrorCode::InvalidArgument, "integration by parts is for scalar functions");
  }
  const TimeScale& ts = f.scale();
  const std::size_t n = ts.size();
  const auto& fv = f.values();
  const auto& gv = g.values();
  const double boundary = fv(static_cast<Eigen::Index>(n - 1), 0) * gv(static_cast<Eigen::Index>(n - 1), 0) -
                          fv(0, 0) * gv(0, 0);
  double magnitude = 1.0 + std::abs(fv(static_cast<Eigen::Index>(n - 1), 0) * gv(static_cast<Eigen::Index>(n - 1), 0)) +
                     std::abs(fv(0, 0) * gv(0, 0));
  double lhs1 = 0.0, rhs1 = 0.0, lhs2 = 0.0, rhs2 = 0.0;
  for (std::size_t k = 0; k + 1 < n; ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    const double mu = ts.mu(k);
    const double df = (fv(i + 1, 0) - fv(i, 0)) / mu;
    const double dg = (gv(i + 1, 0) - gv(i, 0)) / mu;
    const double t1 = mu * fv(i + 1, 0) * dg;  // f^σ g^Δ
    const double t2 = mu * df * gv(i, 0);      // f^Δ g
    const double t3 = mu * fv(i, 0) * dg;      // f g^Δ
    const double t4 = mu * df * gv(i + 1, 0);  // f^Δ g^σ
    lhs1 += t1;
    rhs1 += t2;
    lhs2 += t3;
    rhs2 += t4;
    magnitude += std::abs(t1) + std::abs(t2) + std::abs(t3) + std::abs(t4);
  }
  return {std::abs(lhs1 - (boundary - rhs1)), std::abs(lhs2 - (boundary - rhs2)),
          magnitude};
}

}  // namespace deltavar

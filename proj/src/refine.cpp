#include "deltavar/refine.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <thread>

#include "deltavar/error.hpp"
#include "detail/threads.hpp"

namespace deltavar {

namespace {

void check_ladder(const std::vector<std::size_t>& ladder) {
  if (ladder.size() < 3) {
    throw Error(ErrorCode::InvalidArgument, "refinement ladder needs at least 3 entries");
  }
  for (std::size_t k = 1; k < ladder.size(); ++k) {
    if (ladder[k] <= ladder[k - 1]) {
      throw Error(ErrorCode::InvalidArgument, "refinement ladder must be strictly increasing");
    }
  }
}

GridFunction solve_on(const RefineSpec& spec, std::size_t n) {
  BasicProblem p(TimeScale::uniform(spec.a, spec.b, n), spec.lagrangian, spec.form, spec.bc_a, spec.bc_b);
  return solve_basic(p).y;
}

/// Runs job(k) for every ladder entry; the first exception (lowest k) wins.
template <class Job>
void for_each_entry(std::size_t count, unsigned threads, const Job& job) {
  const unsigned workers = std::min<unsigned>(detail::worker_count(threads), static_cast<unsigned>(count));
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t k = next++; k < count; k = next++) {
      try {
        job(k);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

void fill_ratios(ConvergenceTable& table, double scale) {
  const double floor = 64 * std::numeric_limits<double>::epsilon() * scale;
  for (std::size_t k = 0; k + 1 < table.rows.size(); ++k) {
    const auto& c = table.rows[k];
    const auto& f = table.rows[k + 1];
    if (c.error <= floor || f.error <= floor) {
      table.ratios.push_back(std::numeric_limits<double>::quiet_NaN());
      table.orders.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    const double ratio = c.error / f.error;
    table.ratios.push_back(ratio);
    table.orders.push_back(std::log(ratio) / std::log(c.h / f.h));
  }
}

}  // namespace

ConvergenceTable refine_study(const RefineSpec& spec, const std::vector<std::size_t>& ladder,
                              const ReferenceSolution& reference, unsigned threads) {
  check_ladder(ladder);
  ConvergenceTable table;
  table.rows.resize(ladder.size());
  std::vector<double> ref_size(ladder.size(), 0.0);
  for_each_entry(ladder.size(), threads, [&](std::size_t k) {
    GridFunction y = solve_on(spec, ladder[k]);
    const GridFunction dy = delta_derivative(y);
    const TimeScale& ts = y.scale();
    ConvergenceRow row{ladder[k], ts.mu(0)};
    for (std::size_t i = 0; i < ts.size(); ++i) {
      const ReferencePoint ref = reference(ts[i]);
      row.error_values = std::max(row.error_values, (y.at(i) - ref.y).cwiseAbs().maxCoeff());
      if (i + 1 < ts.size()) {
        row.error_derivative = std::max(row.error_derivative, (dy.at(i) - ref.dy).cwiseAbs().maxCoeff());
      }
      ref_size[k] = std::max({ref_size[k], ref.y.cwiseAbs().maxCoeff(), ref.dy.cwiseAbs().maxCoeff()});
    }
    row.error = row.error_values + row.error_derivative;
    table.rows[k] = row;
  });
  double scale = 1.0;
  for (double s : ref_size) scale = std::max(scale, 1.0 + s);
  fill_ratios(table, scale);
  return table;
}

ConvergenceTable refine_study(const RefineSpec& spec, const std::vector<std::size_t>& ladder,
                              std::size_t fine_n, unsigned threads) {
  check_ladder(ladder);
  for (std::size_t n : ladder) {
    if (n < 2 || fine_n <= n || (fine_n - 1) % (n - 1) != 0) {
      throw Error(ErrorCode::InvalidArgument, "ladder grid with " + std::to_string(n) +
                                                  " points is not nested in the reference grid");
    }
  }
  const GridFunction fine = solve_on(spec, fine_n);
  const GridFunction fine_dy = delta_derivative(fine);
  ConvergenceTable table;
  table.rows.resize(ladder.size());
  for_each_entry(ladder.size(), threads, [&](std::size_t k) {
    GridFunction y = solve_on(spec, ladder[k]);
    const GridFunction dy = delta_derivative(y);
    const std::size_t stride = (fine_n - 1) / (ladder[k] - 1);
    ConvergenceRow row{ladder[k], y.scale().mu(0)};
    for (std::size_t i = 0; i < y.size(); ++i) {
      row.error_values = std::max(row.error_values, (y.at(i) - fine.at(i * stride)).cwiseAbs().maxCoeff());
      if (i + 1 < y.size()) {
        row.error_derivative =
            std::max(row.error_derivative, (dy.at(i) - fine_dy.at(i * stride)).cwiseAbs().maxCoeff());
      }
    }
    row.error = row.error_values + row.error_derivative;
    table.rows[k] = row;
  });
  fill_ratios(table, 1.0 + std::max(fine.values().cwiseAbs().maxCoeff(), fine_dy.values().cwiseAbs().maxCoeff()));
  return table;
}

ReferenceSolution expression_reference(const std::vector<Expr>& components) {
  using K = VarRef::Kind;
  for (const Expr& e : components) {
    if (e.uses(K::Mu) || e.uses(K::State) || e.uses(K::Derivative) || e.uses(K::Control)) {
      throw Error(ErrorCode::InvalidArgument, "reference expressions may only use t");
    }
  }
  return [components](double t) {
    const auto n = static_cast<Eigen::Index>(components.size());
    ReferencePoint ref{Vector(n), Vector(n)};
    for (Eigen::Index c = 0; c < n; ++c) {
      const Expr& e = components[static_cast<std::size_t>(c)];
      std::vector<double> point(e.layout().size(), 0.0);
      point[e.layout().time()] = t;
      const Evaluation ev = e.eval_with_partials(point);
      ref.y(c) = ev.value;
      ref.dy(c) = ev.partials[e.layout().time()];
    }
    return ref;
  };
}

}  // namespace deltavar

#include "isac/optim.hpp"

#include <algorithm>
#include <cmath>

namespace isac {

CMat project_power_sphere(const CMat& x, double power) {
  const double n = x.norm();
  if (n == 0.0) {
    CMat y = CMat::Zero(x.rows(), x.cols());
    y(0, 0) = std::sqrt(power);
    return y;
  }
  return x * (std::sqrt(power) / n);
}

CMat project_power_ball(const CMat& x, double power) {
  const double n2 = x.squaredNorm();
  if (n2 <= power) return x;
  return x * std::sqrt(power / n2);
}

PgResult projected_gradient(const MatrixObjective& f, const MatrixProjection& project, CMat x0,
                            const PgOptions& opts) {
  PgResult r;
  r.x = project(x0);
  CMat g;
  r.value = f(r.x, &g);
  double step = opts.initial_step;
  int stalled = 0;
  for (int it = 0; it < opts.max_iterations; ++it) {
    r.iterations = it + 1;
    bool accepted = false;
    for (int bt = 0; bt < 60; ++bt) {
      const CMat cand = project(r.x - step * g);
      const double decrease = 2.0 * (g.array().conjugate() * (r.x - cand).array()).sum().real();
      if (decrease > 0.0) {
        const double fc = f(cand, nullptr);
        if (std::isfinite(fc) && fc <= r.value - 1e-4 * decrease) {
          const double rel = (r.value - fc) / std::max(std::abs(r.value), 1e-300);
          r.x = cand;
          r.value = f(r.x, &g);
          stalled = rel < opts.tolerance ? stalled + 1 : 0;
          accepted = true;
          step *= 2.0;
          break;
        }
      }
      step *= 0.5;
      if (step < 1e-300) break;
    }
    if (!accepted || stalled >= opts.patience) {
      r.converged = true;
      break;
    }
  }
  return r;
}

AlResult augmented_lagrangian(const MatrixObjective& f, const MatrixConstraints& c, const MatrixProjection& project,
                              CMat x0, const AlOptions& opts) {
  AlResult r;
  r.x = project(x0);
  RVec c0 = c(r.x, nullptr);
  RVec lambda = RVec::Zero(c0.size());
  double mu = opts.penalty;
  double prev_violation = std::max(0.0, c0.size() ? c0.maxCoeff() : 0.0);
  for (int outer = 0; outer < opts.outer_iterations; ++outer) {
    const MatrixObjective lagr = [&](const CMat& x, CMat* grad) {
      std::vector<CMat> cg;
      const RVec cv = c(x, grad ? &cg : nullptr);
      double val = f(x, grad);
      for (Eigen::Index i = 0; i < cv.size(); ++i) {
        const double s = std::max(0.0, lambda(i) + mu * cv(i));
        val += (s * s - lambda(i) * lambda(i)) / (2.0 * mu);
        if (grad && s > 0.0) *grad += s * cg[static_cast<std::size_t>(i)];
      }
      return val;
    };
    const auto inner = projected_gradient(lagr, project, r.x, opts.inner);
    r.x = inner.x;
    r.iterations += inner.iterations;
    const RVec cv = c(r.x, nullptr);
    for (Eigen::Index i = 0; i < cv.size(); ++i) lambda(i) = std::max(0.0, lambda(i) + mu * cv(i));
    const double violation = cv.size() ? std::max(0.0, cv.maxCoeff()) : 0.0;
    r.max_violation = violation;
    if (opts.on_outer) opts.on_outer(r.x);
    if (violation <= opts.feasibility_tol && inner.converged && outer > 0) {
      r.converged = true;
      break;
    }
    if (violation > 0.25 * prev_violation) mu *= opts.penalty_growth;
    prev_violation = violation;
  }
  r.value = f(r.x, nullptr);
  r.multipliers = lambda;
  return r;
}

bool project_polyhedron(const RMat& a, const RVec& b, const RVec& z, RVec& x, int max_iterations) {
  // Least-distance form: min ||y|| s.t. A y >= h with x = z + y, solved as the
  // NNLS problem min_{u >= 0} ||E u - f||, E = [A'; h'], f = e_{n+1}.
  const Eigen::Index m = a.rows(), n = a.cols();
  if (m == 0) {
    x = z;
    return true;
  }
  RVec h = b - a * z;
  // The embedding is best conditioned for ||y|| ~ 1; the problem is
  // homogeneous in (h, y), so rescale by a lower bound on ||y||.
  double scale = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    const double rn = a.row(i).norm();
    if (rn > 0.0) scale = std::max(scale, h(i) / rn);
  }
  if (!(scale > 0.0)) scale = 1.0;
  h /= scale;
  RMat e(n + 1, m);
  e.topRows(n) = a.transpose();
  e.row(n) = h.transpose();
  RVec f = RVec::Zero(n + 1);
  f(n) = 1.0;

  RVec u = RVec::Zero(m);
  std::vector<Eigen::Index> passive;
  std::vector<bool> in_p(static_cast<std::size_t>(m), false);
  const double tol = 1e-12 * std::max(1.0, e.cwiseAbs().maxCoeff());

  auto solve_passive = [&](RVec& s) {
    s = RVec::Zero(m);
    RMat ep(n + 1, static_cast<Eigen::Index>(passive.size()));
    for (std::size_t k = 0; k < passive.size(); ++k) ep.col(static_cast<Eigen::Index>(k)) = e.col(passive[k]);
    const RVec sp = ep.colPivHouseholderQr().solve(f);
    for (std::size_t k = 0; k < passive.size(); ++k) s(passive[k]) = sp(static_cast<Eigen::Index>(k));
  };

  // columns whose entry failed (rounding) stay out until the iterate moves
  std::vector<bool> blocked(static_cast<std::size_t>(m), false);
  bool done = false;
  for (int outer = 0; outer < max_iterations && !done; ++outer) {
    const RVec w = e.transpose() * (f - e * u);
    Eigen::Index best = -1;
    double best_w = tol;
    for (Eigen::Index i = 0; i < m; ++i)
      if (!in_p[static_cast<std::size_t>(i)] && !blocked[static_cast<std::size_t>(i)] && w(i) > best_w) {
        best_w = w(i);
        best = i;
      }
    if (best < 0) {
      done = true;
      break;
    }
    passive.push_back(best);
    in_p[static_cast<std::size_t>(best)] = true;
    for (int inner = 0; inner < max_iterations; ++inner) {
      RVec s;
      solve_passive(s);
      if (!s.allFinite()) return false;
      if (inner == 0 && s(best) <= 0.0) {
        passive.pop_back();
        in_p[static_cast<std::size_t>(best)] = false;
        blocked[static_cast<std::size_t>(best)] = true;
        break;
      }
      bool all_pos = true;
      double step = 1.0;
      for (Eigen::Index i : passive)
        if (s(i) <= 0.0) {
          all_pos = false;
          step = std::min(step, u(i) / (u(i) - s(i)));
        }
      if (all_pos) {
        u = s;
        std::fill(blocked.begin(), blocked.end(), false);
        break;
      }
      u += step * (s - u);
      std::vector<Eigen::Index> keep;
      for (Eigen::Index i : passive)
        if (u(i) > 1e-15)
          keep.push_back(i);
        else {
          u(i) = 0.0;
          in_p[static_cast<std::size_t>(i)] = false;
        }
      passive = keep;
    }
  }
  const RVec r = e * u - f;
  if (!done || !(std::abs(r(n)) > 1e-14)) return false;  // r = 0: constraints inconsistent
  x = z - scale * r.head(n) / r(n);
  return x.allFinite();
}

}  // namespace isac

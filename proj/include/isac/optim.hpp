#pragma once

#include <functional>
#include <vector>

#include "isac/types.hpp"

namespace isac {

// Objective on a complex matrix variable. Returns f(X); when `grad` is
// non-null it receives the Wirtinger gradient df/dconj(X).
using MatrixObjective = std::function<double(const CMat&, CMat* grad)>;
using MatrixProjection = std::function<CMat(const CMat&)>;

struct PgOptions {
  int max_iterations = 500;
  double tolerance = 1e-9;  // relative objective change that counts as stalled
  int patience = 5;          // consecutive stalled steps before stopping
  double initial_step = 1.0;
};

struct PgResult {
  CMat x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Projected gradient with Armijo backtracking and step growth on success.
PgResult projected_gradient(const MatrixObjective& f, const MatrixProjection& project, CMat x0,
                            const PgOptions& opts = {});

// Inequality constraints c_i(X) <= 0. When `grads` is non-null it is resized
// to the constraint count and filled with dc_i/dconj(X).
using MatrixConstraints = std::function<RVec(const CMat&, std::vector<CMat>* grads)>;

struct AlOptions {
  int outer_iterations = 30;
  PgOptions inner{300, 1e-10, 5, 1.0};
  double penalty = 10.0;
  double penalty_growth = 4.0;
  double feasibility_tol = 1e-7;
  // Called with the iterate after every outer step.
  std::function<void(const CMat&)> on_outer;
};

struct AlResult {
  CMat x;
  double value = 0.0;
  double max_violation = 0.0;
  int iterations = 0;  // total inner iterations
  bool converged = false;
  RVec multipliers;
};

// Augmented-Lagrangian loop around projected_gradient.
AlResult augmented_lagrangian(const MatrixObjective& f, const MatrixConstraints& c, const MatrixProjection& project,
                              CMat x0, const AlOptions& opts = {});

// Projection onto {X : ||X||_F^2 = power} (the sphere; zero maps to a fixed point).
CMat project_power_sphere(const CMat& x, double power);
// Projection onto {X : ||X||_F^2 <= power}.
CMat project_power_ball(const CMat& x, double power);

// Smallest-norm correction onto a polyhedron: argmin ||x - z||^2 s.t. A x >= b,
// solved through its dual with an active-set loop. Returns false if the set
// is empty (the dual diverges).
bool project_polyhedron(const RMat& a, const RVec& b, const RVec& z, RVec& x, int max_iterations = 200);

}  // namespace isac

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "pipefreeze/types.hpp"

namespace pipefreeze {

enum class RowSense { LessEq, Eq, GreaterEq };

enum class SimplexStatus { Optimal, Infeasible, Unbounded, IterationLimit };

// min c'x  s.t.  A x (<= | = | >=) b,  x >= 0
template <typename Scalar = double>
struct SimplexProblem {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  Vector objective;
  Matrix lhs;
  Vector rhs;
  std::vector<RowSense> senses;

  Eigen::Index num_vars() const { return objective.size(); }
  Eigen::Index num_rows() const { return lhs.rows(); }
};

template <typename Scalar = double>
struct SimplexResult {
  SimplexStatus status{SimplexStatus::IterationLimit};
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> x;
  Scalar objective_value{0};
  long iterations{0};
};

// Dense two-phase primal simplex. Entering column by steepest reduced cost
// with an automatic permanent switch to Bland's rule once the objective
// stalls, which guarantees termination on degenerate bases.
template <typename Scalar = double>
class DenseSimplex {
 public:
  using Vector = typename SimplexProblem<Scalar>::Vector;
  using Matrix = typename SimplexProblem<Scalar>::Matrix;

  explicit DenseSimplex(Scalar pivot_tol = Scalar(1e-9), long max_iterations = 200000)
      : tol_(pivot_tol), max_iterations_(max_iterations) {}

  SimplexResult<Scalar> solve(const SimplexProblem<Scalar>& problem) {
    const Eigen::Index n = problem.num_vars();
    const Eigen::Index m = problem.num_rows();
    if (problem.rhs.size() != m || static_cast<Eigen::Index>(problem.senses.size()) != m)
      throw std::domain_error("simplex: inconsistent problem dimensions");

    // Row normalization: b >= 0.
    Matrix a = problem.lhs;
    Vector b = problem.rhs;
    std::vector<RowSense> senses = problem.senses;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (b(i) < Scalar(0)) {
        a.row(i) = -a.row(i);
        b(i) = -b(i);
        if (senses[i] == RowSense::LessEq) senses[i] = RowSense::GreaterEq;
        else if (senses[i] == RowSense::GreaterEq) senses[i] = RowSense::LessEq;
      }
    }

    Eigen::Index slack_count = 0, artificial_count = 0;
    for (auto s : senses) {
      if (s != RowSense::Eq) ++slack_count;
      if (s != RowSense::LessEq) ++artificial_count;
    }
    const Eigen::Index total = n + slack_count + artificial_count;

    tableau_.setZero(m, total);
    tableau_.leftCols(n) = a;
    rhs_ = b;
    basis_.assign(m, -1);
    first_artificial_ = n + slack_count;

    Eigen::Index slack_at = n, artificial_at = first_artificial_;
    for (Eigen::Index i = 0; i < m; ++i) {
      switch (senses[i]) {
        case RowSense::LessEq:
          tableau_(i, slack_at) = Scalar(1);
          basis_[i] = slack_at++;
          break;
        case RowSense::GreaterEq:
          tableau_(i, slack_at) = Scalar(-1);
          ++slack_at;
          tableau_(i, artificial_at) = Scalar(1);
          basis_[i] = artificial_at++;
          break;
        case RowSense::Eq:
          tableau_(i, artificial_at) = Scalar(1);
          basis_[i] = artificial_at++;
          break;
      }
    }

    SimplexResult<Scalar> result;

    if (artificial_count > 0) {
      Vector phase1 = Vector::Zero(total);
      phase1.tail(artificial_count).setConstant(Scalar(1));
      const auto status = run_phase(phase1, total, result.iterations);
      if (status != SimplexStatus::Optimal) {
        result.status = status;
        return result;
      }
      Scalar infeasibility = 0;
      for (Eigen::Index i = 0; i < m; ++i)
        if (basis_[i] >= first_artificial_) infeasibility += rhs_(i);
      if (infeasibility > tol_ * Scalar(100)) {
        result.status = SimplexStatus::Infeasible;
        return result;
      }
      expel_artificials();
    }

    Vector phase2 = Vector::Zero(total);
    phase2.head(n) = problem.objective;
    const auto status = run_phase(phase2, first_artificial_, result.iterations);
    result.status = status;
    if (status != SimplexStatus::Optimal) return result;

    result.x = Vector::Zero(n);
    for (Eigen::Index i = 0; i < m; ++i)
      if (basis_[i] < n) result.x(basis_[i]) = rhs_(i);
    result.objective_value = problem.objective.dot(result.x);
    return result;
  }

 private:
  void pivot(Eigen::Index row, Eigen::Index col) {
    const Scalar inv = Scalar(1) / tableau_(row, col);
    tableau_.row(row) *= inv;
    rhs_(row) *= inv;
    for (Eigen::Index i = 0; i < tableau_.rows(); ++i) {
      if (i == row) continue;
      const Scalar factor = tableau_(i, col);
      if (factor == Scalar(0)) continue;
      tableau_.row(i) -= factor * tableau_.row(row);
      rhs_(i) -= factor * rhs_(row);
    }
    basis_[row] = col;
  }

  // Pivot still-basic artificials out after phase 1; rows that cannot be
  // pivoted are redundant and stay with the artificial at value zero.
  void expel_artificials() {
    for (Eigen::Index i = 0; i < tableau_.rows(); ++i) {
      if (basis_[i] < first_artificial_) continue;
      for (Eigen::Index j = 0; j < first_artificial_; ++j) {
        if (std::abs(tableau_(i, j)) > tol_) {
          pivot(i, j);
          break;
        }
      }
    }
  }

  SimplexStatus run_phase(const Vector& cost, Eigen::Index allowed_cols, long& iterations) {
    const Eigen::Index m = tableau_.rows();
    Vector reduced = cost;
    Scalar objective = 0;
    for (Eigen::Index i = 0; i < m; ++i) {
      const Scalar cb = cost(basis_[i]);
      if (cb != Scalar(0)) {
        reduced -= cb * tableau_.row(i).transpose();
        objective += cb * rhs_(i);
      }
    }

    bool bland = false;
    long stall = 0;
    Scalar last_objective = objective;
    for (long iter = 0; iter < max_iterations_; ++iter, ++iterations) {
      Eigen::Index entering = -1;
      if (bland) {
        for (Eigen::Index j = 0; j < allowed_cols; ++j)
          if (reduced(j) < -tol_) {
            entering = j;
            break;
          }
      } else {
        Scalar best = -tol_;
        for (Eigen::Index j = 0; j < allowed_cols; ++j)
          if (reduced(j) < best) {
            best = reduced(j);
            entering = j;
          }
      }
      if (entering < 0) return SimplexStatus::Optimal;

      Eigen::Index leaving = -1;
      Scalar best_ratio = 0;
      for (Eigen::Index i = 0; i < m; ++i) {
        const Scalar coef = tableau_(i, entering);
        if (coef <= tol_) continue;
        const Scalar ratio = rhs_(i) / coef;
        if (leaving < 0 || ratio < best_ratio - tol_ ||
            (ratio < best_ratio + tol_ && basis_[i] < basis_[leaving])) {
          leaving = i;
          best_ratio = ratio;
        }
      }
      if (leaving < 0) return SimplexStatus::Unbounded;

      const Scalar enter_reduced = reduced(entering);
      pivot(leaving, entering);
      reduced -= enter_reduced * tableau_.row(leaving).transpose();
      reduced(entering) = Scalar(0);
      objective += enter_reduced * rhs_(leaving);

      if (!bland) {
        if (objective < last_objective - tol_) {
          stall = 0;
          last_objective = objective;
        } else if (++stall > 2 * m + 50) {
          bland = true;
        }
      }
    }
    return SimplexStatus::IterationLimit;
  }

  Scalar tol_;
  long max_iterations_;
  Matrix tableau_;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> rhs_;
  std::vector<Eigen::Index> basis_;
  Eigen::Index first_artificial_{0};
};

template <typename Scalar = double>
SimplexResult<Scalar> solve_simplex(const SimplexProblem<Scalar>& problem,
                                    Scalar pivot_tol = Scalar(1e-9),
                                    long max_iterations = 200000) {
  DenseSimplex<Scalar> solver(pivot_tol, max_iterations);
  return solver.solve(problem);
}

}  // namespace pipefreeze

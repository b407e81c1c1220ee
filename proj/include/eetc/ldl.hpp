#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace eetc {

/// Sparse LDL^T factorization of a symmetric quasi-definite matrix under a
/// fixed symmetric permutation, with dynamic pivot regularization: a pivot
/// whose magnitude falls below a threshold (or whose sign disagrees with the
/// expected quasi-definite sign) is replaced by a signed floor value. No
/// numerical pivoting, so the fill pattern and the arithmetic are
/// reproducible run to run.
///
/// Arithmetic runs in extended precision; the interior-point caller needs
/// the headroom for its endgame, where the scaling matrices become
/// extremely ill-conditioned.
class SparseLdl {
 public:
  using Scalar = long double;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  /// Symbolic analysis of P K P^T. `upper` lists the (row, col) positions of
  /// the upper triangle of K in original indices, row <= col, no duplicates.
  /// `new_of_old` maps original indices to permuted positions.
  void analyze(int dim, const std::vector<std::pair<int, int>>& upper,
               const std::vector<int>& new_of_old);

  /// Numeric factorization. values[t] belongs to upper[t]. signs[j] is the
  /// expected pivot sign (+1/-1) of original index j.
  void factor(const std::vector<Scalar>& values,
              const std::vector<std::int8_t>& signs, Scalar dyn_threshold,
              Scalar dyn_floor);

  /// Solves K x = rhs in place (permutation handled internally).
  void solve(Vector& rhs) const;

  /// out = rhs - K x using the given entry values (e.g. the unregularized
  /// ones). row_scale, when non-null, receives per-row magnitude sums
  /// |rhs_i| + sum_j |K_ij x_j| for scale-aware refinement tests.
  void residual(const std::vector<Scalar>& values, const Vector& x,
                const Vector& rhs, Vector& out,
                Vector* row_scale = nullptr) const;

  int dimension() const { return dim_; }
  long long factor_nonzeros() const { return total_lnz_; }
  int dynamic_bumps() const { return dynamic_bumps_; }

 private:
  int dim_ = 0;
  long long total_lnz_ = 0;
  int dynamic_bumps_ = 0;

  std::vector<int> new_of_old_, old_of_new_;
  // Permuted upper triangle, CSC. slot_[t] is the position of input entry t.
  std::vector<int> up_, ui_, slot_;
  std::vector<Scalar> ux_;
  // Elimination tree and factor storage.
  std::vector<int> parent_, lp_, li_, lnz_;
  std::vector<Scalar> lx_, d_;
  // Workspaces.
  mutable std::vector<Scalar> y_;
  std::vector<int> flag_, pattern_, fill_;
};

}  // namespace eetc

#include "eetc/ldl.hpp"

#include <algorithm>
#include <cmath>

#include "eetc/errors.hpp"

namespace eetc {

void SparseLdl::analyze(int dim, const std::vector<std::pair<int, int>>& upper,
                        const std::vector<int>& new_of_old) {
  dim_ = dim;
  new_of_old_ = new_of_old;
  old_of_new_.assign(dim, 0);
  for (int j = 0; j < dim; ++j) old_of_new_[new_of_old_[j]] = j;

  // Permute entries into the upper triangle of P K P^T, then sort into CSC
  // while remembering where each input entry landed.
  struct Entry {
    int row, col, input;
  };
  std::vector<Entry> entries(upper.size());
  for (size_t t = 0; t < upper.size(); ++t) {
    int r = new_of_old_[upper[t].first];
    int c = new_of_old_[upper[t].second];
    if (r > c) std::swap(r, c);
    entries[t] = {r, c, static_cast<int>(t)};
  }
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    return a.col != b.col ? a.col < b.col : a.row < b.row;
  });

  up_.assign(dim + 1, 0);
  ui_.resize(entries.size());
  ux_.assign(entries.size(), 0.0L);
  slot_.resize(entries.size());
  for (size_t k = 0; k < entries.size(); ++k) {
    if (k > 0 && entries[k].col == entries[k - 1].col &&
        entries[k].row == entries[k - 1].row) {
      throw Error("SparseLdl: duplicate entry in the matrix pattern");
    }
    ++up_[entries[k].col + 1];
    ui_[k] = entries[k].row;
    slot_[entries[k].input] = static_cast<int>(k);
  }
  for (int j = 0; j < dim; ++j) up_[j + 1] += up_[j];

  // Elimination tree and per-column factor counts.
  parent_.assign(dim, -1);
  lnz_.assign(dim, 0);
  flag_.assign(dim, -1);
  for (int k = 0; k < dim; ++k) {
    parent_[k] = -1;
    flag_[k] = k;
    for (int p = up_[k]; p < up_[k + 1]; ++p) {
      int i = ui_[p];
      while (i < k && flag_[i] != k) {
        if (parent_[i] == -1) parent_[i] = k;
        ++lnz_[i];
        flag_[i] = k;
        i = parent_[i];
      }
    }
  }
  lp_.assign(dim + 1, 0);
  for (int j = 0; j < dim; ++j) lp_[j + 1] = lp_[j] + lnz_[j];
  total_lnz_ = lp_[dim];
  li_.assign(total_lnz_, 0);
  lx_.assign(total_lnz_, 0.0L);
  d_.assign(dim, 0.0L);
  y_.assign(dim, 0.0L);
  pattern_.assign(dim, 0);
  fill_.assign(dim, 0);
}

void SparseLdl::factor(const std::vector<Scalar>& values,
                       const std::vector<std::int8_t>& signs,
                       Scalar dyn_threshold, Scalar dyn_floor) {
  if (values.size() != slot_.size()) {
    throw DimensionError("SparseLdl: value array does not match the pattern");
  }
  for (size_t t = 0; t < values.size(); ++t) ux_[slot_[t]] = values[t];

  const int n = dim_;
  dynamic_bumps_ = 0;
  std::fill(flag_.begin(), flag_.end(), -1);
  std::fill(fill_.begin(), fill_.end(), 0);
  std::fill(y_.begin(), y_.end(), 0.0L);

  for (int k = 0; k < n; ++k) {
    // Scatter column k of the permuted matrix and collect the pattern of row
    // k of L by walking the elimination tree.
    int top = n;
    flag_[k] = k;
    for (int p = up_[k]; p < up_[k + 1]; ++p) {
      const int row = ui_[p];
      y_[row] += ux_[p];
      int len = 0;
      for (int i = row; i < k && flag_[i] != k; i = parent_[i]) {
        pattern_[len++] = i;
        flag_[i] = k;
      }
      while (len > 0) pattern_[--top] = pattern_[--len];
    }

    Scalar dk = y_[k];
    y_[k] = 0.0L;
    for (; top < n; ++top) {
      const int i = pattern_[top];
      const Scalar yi = y_[i];
      y_[i] = 0.0L;
      const int p2 = lp_[i] + fill_[i];
      for (int p = lp_[i]; p < p2; ++p) y_[li_[p]] -= lx_[p] * yi;
      const Scalar lki = yi / d_[i];
      dk -= lki * yi;
      li_[p2] = k;
      lx_[p2] = lki;
      ++fill_[i];
    }

    const Scalar sign = signs[old_of_new_[k]] >= 0 ? 1.0L : -1.0L;
    if (sign * dk < dyn_threshold) {
      dk = sign * dyn_floor;
      ++dynamic_bumps_;
    }
    d_[k] = dk;
  }
}

void SparseLdl::solve(Vector& rhs) const {
  const int n = dim_;
  for (int j = 0; j < n; ++j) y_[j] = rhs[old_of_new_[j]];
  for (int j = 0; j < n; ++j) {
    const Scalar yj = y_[j];
    for (int p = lp_[j]; p < lp_[j + 1]; ++p) y_[li_[p]] -= lx_[p] * yj;
  }
  for (int j = 0; j < n; ++j) y_[j] /= d_[j];
  for (int j = n - 1; j >= 0; --j) {
    Scalar yj = y_[j];
    for (int p = lp_[j]; p < lp_[j + 1]; ++p) yj -= lx_[p] * y_[li_[p]];
    y_[j] = yj;
  }
  for (int j = 0; j < n; ++j) rhs[old_of_new_[j]] = y_[j];
}

void SparseLdl::residual(const std::vector<Scalar>& values, const Vector& x,
                         const Vector& rhs, Vector& out,
                         Vector* row_scale) const {
  if (values.size() != slot_.size()) {
    throw DimensionError("SparseLdl: value array does not match the pattern");
  }
  std::vector<Scalar> acc(dim_);
  std::vector<Scalar> mag;
  if (row_scale) mag.assign(dim_, 0.0L);
  for (int i = 0; i < dim_; ++i) {
    acc[i] = rhs[i];
    if (row_scale) mag[i] = std::abs(rhs[i]);
  }
  std::vector<Scalar> vx(values.size());
  for (size_t t = 0; t < values.size(); ++t) vx[slot_[t]] = values[t];
  for (int col = 0; col < dim_; ++col) {
    const int oc = old_of_new_[col];
    for (int p = up_[col]; p < up_[col + 1]; ++p) {
      const int orow = old_of_new_[ui_[p]];
      const Scalar a = vx[p] * x[oc];
      acc[orow] -= a;
      if (row_scale) mag[orow] += std::abs(a);
      if (ui_[p] != col) {
        const Scalar b = vx[p] * x[orow];
        acc[oc] -= b;
        if (row_scale) mag[oc] += std::abs(b);
      }
    }
  }
  out.resize(dim_);
  for (int i = 0; i < dim_; ++i) out[i] = acc[i];
  if (row_scale) {
    row_scale->resize(dim_);
    for (int i = 0; i < dim_; ++i) (*row_scale)[i] = mag[i];
  }
}

}  // namespace eetc

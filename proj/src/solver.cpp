#include "eetc/solver.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include <Eigen/OrderingMethods>
#include <Eigen/SparseCore>

#include "eetc/errors.hpp"
#include "eetc/ldl.hpp"

namespace eetc {

namespace {

// The interior-point core runs in extended precision: the endgame scaling
// matrices span the full complementarity range, and the recovered solution
// must stand up to absolute tolerances far below what double-precision
// residual evaluation can certify on badly scaled physical data.
using LD = long double;
using VecLD = Eigen::Matrix<LD, Eigen::Dynamic, 1>;
using Vec2LD = Eigen::Matrix<LD, 2, 1>;
using Vec3LD = Eigen::Matrix<LD, 3, 1>;
using Mat3LD = Eigen::Matrix<LD, 3, 3>;
using SpMatLD = Eigen::SparseMatrix<LD>;

constexpr int kRuizIterations = 10;
constexpr int kRefinementSteps = 5;
constexpr LD kRefinementStopTol = 1e-17L;
constexpr LD kDynThreshold = 1e-17L;
constexpr LD kDynFloor = 1e-10L;
constexpr LD kSigmaMin = 1e-4L;
constexpr LD kSigmaMax = 0.9999L;
constexpr LD kStepMax = 0.9995L;
constexpr LD kSafeguardFactor = 500.0L;
// Cone-membership defect allowed in the recovered primal point, relative to
// each block's magnitude. Tighter than the residual tolerances because the
// relaxation-gap measurements downstream amplify it by the block scale.
constexpr LD kMembershipTol = 1e-11L;
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

// ---------------------------------------------------------------------------
// Cone bookkeeping over the stacked conic rows: the nonnegative part comes
// first, then the 3-dim second-order blocks.

struct ConeLayoutInt {
  int lp = 0;
  int n_soc = 0;
  int dim = 0;
  int soc_start(int k) const { return lp + 3 * k; }
  int degree() const { return lp + n_soc; }
};

struct SocScaling {
  LD eta = 1.0L;
  LD a = 1.0L;
  Vec2LD q{0.0L, 0.0L};
  Mat3LD w2 = Mat3LD::Identity();
};

struct Scalings {
  VecLD lp_v;  // s/z per nonnegative coordinate
  VecLD lp_w;  // sqrt of the above
  std::vector<SocScaling> soc;
  VecLD lambda;  // W z
};

LD cone_min_margin(const ConeLayoutInt& cones, const VecLD& u) {
  LD margin = std::numeric_limits<LD>::infinity();
  for (int i = 0; i < cones.lp; ++i) margin = std::min(margin, u[i]);
  for (int k = 0; k < cones.n_soc; ++k) {
    const int s = cones.soc_start(k);
    margin = std::min(margin, u[s] - u.segment<2>(s + 1).norm());
  }
  return margin;
}

// Shifts r along the cone identity until it is strictly interior.
VecLD bring_to_cone(const ConeLayoutInt& cones, const VecLD& r, LD gamma) {
  LD alpha = -gamma;
  const LD margin = cone_min_margin(cones, r);
  if (margin <= 0.0L && -margin > alpha) alpha = -margin;
  alpha += 1.0L;

  VecLD s = r;
  s.head(cones.lp).array() += alpha;
  for (int k = 0; k < cones.n_soc; ++k) s[cones.soc_start(k)] += alpha;
  return s;
}

bool update_scalings(const ConeLayoutInt& cones, const VecLD& s, const VecLD& z,
                     Scalings& sc) {
  sc.lp_v.resize(cones.lp);
  sc.lp_w.resize(cones.lp);
  for (int i = 0; i < cones.lp; ++i) {
    if (s[i] <= 0.0L || z[i] <= 0.0L) return false;
    sc.lp_v[i] = s[i] / z[i];
    sc.lp_w[i] = std::sqrt(sc.lp_v[i]);
  }
  sc.soc.resize(cones.n_soc);
  for (int k = 0; k < cones.n_soc; ++k) {
    const int off = cones.soc_start(k);
    const Vec3LD sk = s.segment<3>(off);
    const Vec3LD zk = z.segment<3>(off);
    const LD sres = sk[0] * sk[0] - sk.tail<2>().squaredNorm();
    const LD zres = zk[0] * zk[0] - zk.tail<2>().squaredNorm();
    if (sres <= 0.0L || zres <= 0.0L) return false;

    const LD snorm = std::sqrt(sres);
    const LD znorm = std::sqrt(zres);
    const Vec3LD sbar = sk / snorm;
    const Vec3LD zbar = zk / znorm;

    SocScaling& soc = sc.soc[k];
    soc.eta = std::sqrt(snorm / znorm);
    const LD gamma = std::sqrt(0.5L * (1.0L + sbar.dot(zbar)));
    soc.a = (0.5L / gamma) * (sbar[0] + zbar[0]);
    soc.q = (0.5L / gamma) * (sbar.tail<2>() - zbar.tail<2>());

    // W^2 = eta^2 (2 wbar wbar' - J), wbar = (a, q).
    const LD e2 = soc.eta * soc.eta;
    Vec3LD wbar;
    wbar << soc.a, soc.q[0], soc.q[1];
    Mat3LD j = Mat3LD::Identity();
    j(1, 1) = -1.0L;
    j(2, 2) = -1.0L;
    soc.w2 = e2 * (2.0L * wbar * wbar.transpose() - j);
  }

  // lambda = W z
  sc.lambda.resize(cones.dim);
  sc.lambda.head(cones.lp) = sc.lp_w.cwiseProduct(z.head(cones.lp));
  for (int k = 0; k < cones.n_soc; ++k) {
    const int off = cones.soc_start(k);
    const SocScaling& soc = sc.soc[k];
    const Vec2LD z1 = z.segment<2>(off + 1);
    const LD zeta = soc.q.dot(z1);
    const LD factor = z[off] + zeta / (1.0L + soc.a);
    sc.lambda[off] = soc.eta * (soc.a * z[off] + zeta);
    sc.lambda.segment<2>(off + 1) = soc.eta * (z1 + factor * soc.q);
  }
  return true;
}

// W u
void apply_scaling(const ConeLayoutInt& cones, const Scalings& sc,
                   const VecLD& u, VecLD& out) {
  out.resize(cones.dim);
  out.head(cones.lp) = sc.lp_w.cwiseProduct(u.head(cones.lp));
  for (int k = 0; k < cones.n_soc; ++k) {
    const int off = cones.soc_start(k);
    const SocScaling& soc = sc.soc[k];
    const Vec2LD u1 = u.segment<2>(off + 1);
    const LD zeta = soc.q.dot(u1);
    const LD factor = u[off] + zeta / (1.0L + soc.a);
    out[off] = soc.eta * (soc.a * u[off] + zeta);
    out.segment<2>(off + 1) = soc.eta * (u1 + factor * soc.q);
  }
}

// w = u o v (Jordan product).
void conic_product(const ConeLayoutInt& cones, const VecLD& u, const VecLD& v,
                   VecLD& w) {
  w.resize(cones.dim);
  w.head(cones.lp) = u.head(cones.lp).cwiseProduct(v.head(cones.lp));
  for (int k = 0; k < cones.n_soc; ++k) {
    const int off = cones.soc_start(k);
    w[off] = u.segment<3>(off).dot(v.segment<3>(off));
    w.segment<2>(off + 1) =
        u[off] * v.segment<2>(off + 1) + v[off] * u.segment<2>(off + 1);
  }
}

// v = u \ w (inverse Jordan product).
void conic_division(const ConeLayoutInt& cones, const VecLD& u, const VecLD& w,
                    VecLD& v) {
  v.resize(cones.dim);
  v.head(cones.lp) = w.head(cones.lp).cwiseQuotient(u.head(cones.lp));
  for (int k = 0; k < cones.n_soc; ++k) {
    const int off = cones.soc_start(k);
    const LD u0 = u[off];
    const LD w0 = w[off];
    const Vec2LD u1 = u.segment<2>(off + 1);
    const Vec2LD w1 = w.segment<2>(off + 1);
    const LD rho = u0 * u0 - u1.squaredNorm();
    const LD zeta = u1.dot(w1);
    const LD factor = (zeta / u0 - w0) / rho;
    v[off] = (u0 * w0 - zeta) / rho;
    v.segment<2>(off + 1) = factor * u1 + w1 / u0;
  }
}

// Largest step fraction along (ds, dz) scaled by lambda, plus tau/kappa.
LD line_search(const ConeLayoutInt& cones, const VecLD& lambda, const VecLD& ds,
               const VecLD& dz, LD tau, LD dtau, LD kap, LD dkap) {
  LD alpha = 2.0L;
  if (cones.lp > 0) {
    const LD rho_min =
        (ds.head(cones.lp).cwiseQuotient(lambda.head(cones.lp))).minCoeff();
    const LD sig_min =
        (dz.head(cones.lp).cwiseQuotient(lambda.head(cones.lp))).minCoeff();
    const LD worst = std::min(rho_min, sig_min);
    if (worst < 0.0L) alpha = std::min(alpha, 1.0L / (-worst));
  }

  const LD tau_limit = -tau / dtau;
  const LD kap_limit = -kap / dkap;
  if (tau_limit > 0.0L) alpha = std::min(alpha, tau_limit);
  if (kap_limit > 0.0L) alpha = std::min(alpha, kap_limit);

  for (int k = 0; k < cones.n_soc; ++k) {
    const int off = cones.soc_start(k);
    const LD lk2 =
        lambda[off] * lambda[off] - lambda.segment<2>(off + 1).squaredNorm();
    if (lk2 <= 0.0L) continue;
    const LD lknorm = std::sqrt(lk2);
    const Vec3LD lkbar = lambda.segment<3>(off) / lknorm;
    const LD inv = 1.0L / lknorm;

    const auto block_limit = [&](const VecLD& d) {
      const Vec2LD d1 = d.segment<2>(off + 1);
      const LD lk_d = lkbar[0] * d[off] - lkbar.tail<2>().dot(d1);
      const LD factor = (lk_d + d[off]) / (lkbar[0] + 1.0L);
      const Vec2LD vec = inv * (d1 - factor * lkbar.tail<2>());
      return vec.norm() - inv * lk_d;
    };
    const LD worst = std::max({0.0L, block_limit(ds), block_limit(dz)});
    if (worst > 0.0L) alpha = std::min(alpha, 1.0L / worst);
  }
  return std::clamp(alpha, 0.0L, kStepMax);
}

// ---------------------------------------------------------------------------
// Internal reduction: the standard form  min c'x, Ax = b, x in K  is run as
//   min c'x   s.t.  A x = b,   G x + s = 0,   s in C,
// with one conic row per nonnegative/second-order coordinate of x (G picks
// those coordinates with coefficient -1) and the whole of x kept free.

struct InternalForm {
  int n = 0, p = 0, m = 0;
  ConeLayoutInt cones;
  std::vector<int> conic_cols;  // original column of each conic row
  SpMatLD A;                    // equilibrated
  VecLD g;                      // G row coefficients (one per conic row)
  VecLD c, b, h;                // equilibrated
  VecLD e_col, e_row_a, e_row_g;
  LD scale_b = 1.0L, scale_c = 1.0L;
  // Original data for candidate evaluation.
  SpMatLD A0;
  VecLD b0, c0;
  LD b0_norm = 0.0L, c0_norm = 0.0L;
};

void validate_partition(const ConicProgram& prog) {
  std::vector<ConeBlock> blocks = prog.cones;
  std::sort(blocks.begin(), blocks.end(),
            [](const ConeBlock& a, const ConeBlock& b) { return a.start < b.start; });
  int cursor = 0;
  for (const ConeBlock& blk : blocks) {
    if (blk.start != cursor || blk.width <= 0) {
      throw Error("solver: cone partition must tile the variables exactly once");
    }
    if (blk.kind == ConeKind::soc3 && blk.width != 3) {
      throw Error("solver: second-order blocks must have width 3");
    }
    cursor += blk.width;
  }
  if (cursor != prog.cols()) {
    throw Error("solver: cone partition does not cover all variables");
  }
  if (prog.b.size() != prog.rows() || prog.c.size() != prog.cols()) {
    throw DimensionError("solver: program vectors do not match the matrix");
  }
}

InternalForm build_internal(const ConicProgram& prog) {
  validate_partition(prog);
  InternalForm f;
  f.n = prog.cols();
  f.p = prog.rows();
  for (const ConeBlock& blk : prog.cones) {
    if (blk.kind != ConeKind::nonneg) continue;
    for (int j = blk.start; j < blk.start + blk.width; ++j) {
      f.conic_cols.push_back(j);
    }
  }
  f.cones.lp = static_cast<int>(f.conic_cols.size());
  for (const ConeBlock& blk : prog.cones) {
    if (blk.kind != ConeKind::soc3) continue;
    for (int j = blk.start; j < blk.start + blk.width; ++j) {
      f.conic_cols.push_back(j);
    }
    ++f.cones.n_soc;
  }
  f.m = static_cast<int>(f.conic_cols.size());
  f.cones.dim = f.m;
  if (f.m == 0) {
    throw Error("solver: program has no conic variables");
  }

  f.A = prog.A.cast<LD>();
  f.c = prog.c.cast<LD>();
  f.b = prog.b.cast<LD>();
  f.A0 = f.A;
  f.b0 = f.b;
  f.c0 = f.c;
  f.b0_norm = f.b0.norm();
  f.c0_norm = f.c0.norm();
  f.g = VecLD::Constant(f.m, -1.0L);
  f.h = VecLD::Zero(f.m);
  f.e_col = VecLD::Ones(f.n);
  f.e_row_a = VecLD::Ones(f.p);
  f.e_row_g = VecLD::Ones(f.m);
  return f;
}

// Ruiz equilibration over the stacked [A; G], with a common factor for the
// rows of each second-order block so the cone geometry is preserved.
void equilibrate(InternalForm& f) {
  for (int pass = 0; pass < kRuizIterations; ++pass) {
    VecLD col_max = VecLD::Zero(f.n);
    VecLD row_a_max = VecLD::Zero(f.p);
    VecLD row_g_max = VecLD::Zero(f.m);

    for (int col = 0; col < f.A.outerSize(); ++col) {
      for (SpMatLD::InnerIterator it(f.A, col); it; ++it) {
        const LD a = std::abs(it.value());
        col_max[col] = std::max(col_max[col], a);
        row_a_max[it.row()] = std::max(row_a_max[it.row()], a);
      }
    }
    for (int r = 0; r < f.m; ++r) {
      const LD a = std::abs(f.g[r]);
      col_max[f.conic_cols[r]] = std::max(col_max[f.conic_cols[r]], a);
      row_g_max[r] = a;
    }
    for (int k = 0; k < f.cones.n_soc; ++k) {
      const int off = f.cones.soc_start(k);
      const LD mx = row_g_max.segment<3>(off).maxCoeff();
      row_g_max.segment<3>(off).setConstant(mx);
    }

    const auto root = [](LD a) { return a < 1e-12L ? 1.0L : std::sqrt(a); };
    col_max = col_max.unaryExpr(root);
    row_a_max = row_a_max.unaryExpr(root);
    row_g_max = row_g_max.unaryExpr(root);

    for (int col = 0; col < f.A.outerSize(); ++col) {
      for (SpMatLD::InnerIterator it(f.A, col); it; ++it) {
        it.valueRef() /= row_a_max[it.row()] * col_max[col];
      }
    }
    for (int r = 0; r < f.m; ++r) {
      f.g[r] /= row_g_max[r] * col_max[f.conic_cols[r]];
    }
    f.e_col = f.e_col.cwiseProduct(col_max);
    f.e_row_a = f.e_row_a.cwiseProduct(row_a_max);
    f.e_row_g = f.e_row_g.cwiseProduct(row_g_max);

    const LD dev =
        std::max({(col_max.array() - 1.0L).abs().maxCoeff(),
                  f.p > 0 ? (row_a_max.array() - 1.0L).abs().maxCoeff() : 0.0L,
                  (row_g_max.array() - 1.0L).abs().maxCoeff()});
    if (dev < 1e-2L) break;
  }
  f.c = f.c.cwiseQuotient(f.e_col);
  f.b = f.b.cwiseQuotient(f.e_row_a);
  // h is identically zero; no scaling needed.
}

// ---------------------------------------------------------------------------
// KKT system
//   [ dI    A'        G'     ]
//   [ A    -dI        0      ]
//   [ G     0    -W^2 - dI   ]
// stored once as its upper triangle; only the W^2 slots change between
// factorizations.

struct KktSystem {
  int n = 0, p = 0, m = 0, dim = 0;
  std::vector<std::pair<int, int>> pattern;
  std::vector<LD> values;      // unregularized
  std::vector<LD> reg_values;  // factor-time copy with static reg
  std::vector<std::int8_t> signs;
  std::vector<int> diag_slot;                // one per KKT row
  std::vector<int> lp_slot;                  // diagonal slot per LP row
  std::vector<std::array<int, 6>> soc_slot;  // upper-triangle slots per block
  SparseLdl ldl;
  int dynamic_bumps_total = 0;

  void build(const InternalForm& f) {
    n = f.n;
    p = f.p;
    m = f.m;
    dim = n + p + m;
    pattern.clear();
    values.clear();
    signs.assign(dim, 1);
    for (int i = n; i < dim; ++i) signs[i] = -1;

    diag_slot.assign(dim, -1);
    const auto push = [this](int r, int c, LD v) {
      pattern.emplace_back(r, c);
      values.push_back(v);
      return static_cast<int>(pattern.size()) - 1;
    };

    for (int j = 0; j < n; ++j) diag_slot[j] = push(j, j, 0.0L);
    for (int col = 0; col < f.A.outerSize(); ++col) {
      for (SpMatLD::InnerIterator it(f.A, col); it; ++it) {
        push(static_cast<int>(it.col()), n + static_cast<int>(it.row()),
             it.value());
      }
    }
    for (int r = 0; r < p; ++r) diag_slot[n + r] = push(n + r, n + r, 0.0L);
    for (int r = 0; r < m; ++r) {
      push(f.conic_cols[r], n + p + r, f.g[r]);
    }
    lp_slot.assign(f.cones.lp, -1);
    for (int r = 0; r < f.cones.lp; ++r) {
      lp_slot[r] = push(n + p + r, n + p + r, -1.0L);
      diag_slot[n + p + r] = lp_slot[r];
    }
    soc_slot.assign(f.cones.n_soc, {});
    for (int k = 0; k < f.cones.n_soc; ++k) {
      const int base = n + p + f.cones.soc_start(k);
      int t = 0;
      for (int col = 0; col < 3; ++col) {
        for (int row = 0; row <= col; ++row) {
          const LD init = row == col ? -1.0L : 0.0L;
          soc_slot[k][t] = push(base + row, base + col, init);
          if (row == col) diag_slot[base + row] = soc_slot[k][t];
          ++t;
        }
      }
    }

    // Fill-reducing ordering; both orientations of the AMD result are tried
    // and the one with the sparser factor kept.
    Eigen::SparseMatrix<double> pat(dim, dim);
    {
      std::vector<Eigen::Triplet<double>> tp;
      tp.reserve(pattern.size());
      for (const auto& [r, c] : pattern) tp.emplace_back(r, c, 1.0);
      pat.setFromTriplets(tp.begin(), tp.end());
    }
    Eigen::AMDOrdering<int> amd;
    Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> perm;
    amd(pat, perm);

    std::vector<int> fwd(dim), rev(dim);
    for (int i = 0; i < dim; ++i) {
      fwd[i] = perm.indices()[i];
      rev[perm.indices()[i]] = i;
    }
    ldl.analyze(dim, pattern, fwd);
    const long long fill_fwd = ldl.factor_nonzeros();
    ldl.analyze(dim, pattern, rev);
    const long long fill_rev = ldl.factor_nonzeros();
    if (fill_fwd < fill_rev) ldl.analyze(dim, pattern, fwd);
  }

  void set_scalings(const ConeLayoutInt& cones, const Scalings& sc) {
    for (int r = 0; r < cones.lp; ++r) values[lp_slot[r]] = -sc.lp_v[r];
    for (int k = 0; k < cones.n_soc; ++k) {
      int t = 0;
      for (int col = 0; col < 3; ++col) {
        for (int row = 0; row <= col; ++row) {
          values[soc_slot[k][t]] = -sc.soc[k].w2(row, col);
          ++t;
        }
      }
    }
  }

  void set_identity_scalings(const ConeLayoutInt& cones) {
    for (int r = 0; r < cones.lp; ++r) values[lp_slot[r]] = -1.0L;
    for (int k = 0; k < cones.n_soc; ++k) {
      int t = 0;
      for (int col = 0; col < 3; ++col) {
        for (int row = 0; row <= col; ++row) {
          values[soc_slot[k][t]] = (row == col) ? -1.0L : 0.0L;
          ++t;
        }
      }
    }
  }

  void factor(LD static_reg) {
    reg_values = values;
    for (int i = 0; i < dim; ++i) {
      reg_values[diag_slot[i]] += signs[i] > 0 ? static_reg : -static_reg;
    }
    ldl.factor(reg_values, signs, kDynThreshold, kDynFloor);
    dynamic_bumps_total += ldl.dynamic_bumps();
  }

  // Solves the KKT system, refining against the unregularized matrix. Each
  // row's residual is judged against that row's own magnitude.
  void solve(VecLD& rhs) const {
    VecLD sol = rhs;
    ldl.solve(sol);
    VecLD resid(dim), scale(dim);
    const auto scaled_err = [&](const VecLD& r, const VecLD& s) {
      LD worst = 0.0L;
      for (int i = 0; i < dim; ++i) {
        worst = std::max(worst, std::abs(r[i]) / (1.0L + s[i]));
      }
      return worst;
    };
    ldl.residual(values, sol, rhs, resid, &scale);
    LD err = scaled_err(resid, scale);
    for (int step = 0; step < kRefinementSteps && err > kRefinementStopTol;
         ++step) {
      VecLD corr = resid;
      ldl.solve(corr);
      const VecLD better = sol + corr;
      VecLD next_resid(dim), next_scale(dim);
      ldl.residual(values, better, rhs, next_resid, &next_scale);
      const LD next_err = scaled_err(next_resid, next_scale);
      if (next_err >= err) break;
      sol = better;
      resid.swap(next_resid);
      scale.swap(next_scale);
      err = next_err;
    }
    rhs = sol;
  }
};

// Iterate state plus derived statistics.
struct Iterate {
  VecLD x, y, z, s;
  LD tau = 1.0L, kap = 1.0L;

  // scaled residual data
  VecLD rx, ry, rz;
  LD rt = 0.0L;
  LD hresx = 0.0L, hresy = 0.0L, hresz = 0.0L;
  LD cx = 0.0L, by = 0.0L, hz = 0.0L;
  LD gap = 0.0L, mu = 0.0L;

  // candidate measures against the original data; `eff` additionally
  // normalizes by the iterate scale, which is what convergence tests use
  Residuals pub{kNan, kNan, kNan};
  Residuals eff{kNan, kNan, kNan};
  double pcost = kNan;

  LD pinfres = std::numeric_limits<LD>::quiet_NaN();
  LD dinfres = std::numeric_limits<LD>::quiet_NaN();
};

struct Candidate {
  VecLD x, y, s;
};

Candidate unscale(const InternalForm& f, const Iterate& it, LD divisor) {
  Candidate cand;
  cand.x = f.scale_b * it.x.cwiseQuotient(f.e_col) / divisor;
  cand.y = -f.scale_c * (it.y.cwiseQuotient(f.e_row_a)) / divisor;
  cand.s = VecLD::Zero(f.n);
  for (int r = 0; r < f.m; ++r) {
    cand.s[f.conic_cols[r]] = f.scale_c * it.z[r] / f.e_row_g[r] / divisor;
    // The slack copy of each conic coordinate is kept strictly inside its
    // cone by the line search, while the x copy only matches it up to the
    // duplication-row residual. Report the cone-true value; the row scale
    // is uniform within each block, so membership carries over exactly.
    cand.x[f.conic_cols[r]] = f.scale_b * f.e_row_g[r] * it.s[r] / divisor;
  }
  return cand;
}

}  // namespace

const char* to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::primal_infeasible: return "primal-infeasible";
    case SolveStatus::dual_infeasible: return "dual-infeasible";
    case SolveStatus::iteration_limit: return "iteration-limit";
    case SolveStatus::numerical_failure: return "numerical-failure";
  }
  return "unknown";
}

void SolverSettings::validate() const {
  if (max_iterations < 1) throw ValidationError("max_iterations must be >= 1");
  if (!(feas_tol > 0.0) || !(gap_tol > 0.0)) {
    throw ValidationError("solver tolerances must be positive");
  }
  if (!(step_fraction > 0.0 && step_fraction < 1.0)) {
    throw ValidationError("step_fraction must lie in (0, 1)");
  }
  if (!(static_reg >= 0.0)) {
    throw ValidationError("static_reg must be nonnegative");
  }
}

Residuals residuals(const ConicProgram& prog, const Eigen::VectorXd& x,
                    const Eigen::VectorXd& y, const Eigen::VectorXd& s) {
  if (x.size() != prog.cols() || s.size() != prog.cols() ||
      y.size() != prog.rows()) {
    throw DimensionError("residuals: vector sizes do not match the program");
  }
  Residuals r;
  r.primal = (prog.A * x - prog.b).norm() / (1.0 + prog.b.norm());
  r.dual = (prog.A.transpose() * y + s - prog.c).norm() / (1.0 + prog.c.norm());
  const double cx = prog.c.dot(x);
  r.gap = std::abs(cx - prog.b.dot(y)) / (1.0 + std::abs(cx));
  return r;
}

Eigen::VectorXd NtScaling::apply(const Eigen::VectorXd& u) const {
  if (kind_ == ConeKind::nonneg) return w_.cwiseProduct(u);
  Eigen::VectorXd out(3);
  const Eigen::Vector2d u1 = u.tail<2>();
  const double zeta = q_.dot(u1);
  const double factor = u[0] + zeta / (1.0 + a_);
  out[0] = eta_ * (a_ * u[0] + zeta);
  out.tail<2>() = eta_ * (u1 + factor * q_);
  return out;
}

Eigen::VectorXd NtScaling::apply_inverse(const Eigen::VectorXd& u) const {
  if (kind_ == ConeKind::nonneg) return u.cwiseQuotient(w_);
  Eigen::VectorXd out(3);
  const Eigen::Vector2d u1 = u.tail<2>();
  const double zeta = -q_.dot(u1);
  const double factor = u[0] + zeta / (1.0 + a_);
  out[0] = (a_ * u[0] + zeta) / eta_;
  out.tail<2>() = (u1 - factor * q_) / eta_;
  return out;
}

NtScaling nt_scaling(const Eigen::VectorXd& s_block,
                     const Eigen::VectorXd& z_block, ConeKind kind) {
  if (s_block.size() != z_block.size()) {
    throw DimensionError("nt_scaling: block sizes differ");
  }
  NtScaling out;
  out.kind_ = kind;
  if (kind == ConeKind::free_cone) {
    throw Error("nt_scaling: the free cone carries no scaling");
  }
  if (kind == ConeKind::nonneg) {
    if ((s_block.array() <= 0.0).any() || (z_block.array() <= 0.0).any()) {
      throw Error("nt_scaling: block not strictly interior");
    }
    out.w_ = (s_block.cwiseQuotient(z_block)).cwiseSqrt();
    return out;
  }
  if (s_block.size() != 3) {
    throw DimensionError("nt_scaling: soc3 blocks have dimension 3");
  }
  const double sres = s_block[0] * s_block[0] - s_block.tail<2>().squaredNorm();
  const double zres = z_block[0] * z_block[0] - z_block.tail<2>().squaredNorm();
  if (sres <= 0.0 || zres <= 0.0 || s_block[0] <= 0.0 || z_block[0] <= 0.0) {
    throw Error("nt_scaling: block not strictly interior");
  }
  const double snorm = std::sqrt(sres);
  const double znorm = std::sqrt(zres);
  const Eigen::Vector3d sbar = s_block / snorm;
  const Eigen::Vector3d zbar = z_block / znorm;
  out.eta_ = std::sqrt(snorm / znorm);
  const double gamma = std::sqrt(0.5 * (1.0 + sbar.dot(zbar)));
  out.a_ = (0.5 / gamma) * (sbar[0] + zbar[0]);
  out.q_ = (0.5 / gamma) * (sbar.tail<2>() - zbar.tail<2>());
  out.w_.resize(3);
  out.w_ << out.eta_ * out.a_, out.eta_ * out.q_[0], out.eta_ * out.q_[1];
  return out;
}

SolveResult solve(const ConicProgram& prog, const SolverSettings& settings) {
  settings.validate();
  InternalForm f = build_internal(prog);
  equilibrate(f);

  KktSystem kkt;
  kkt.build(f);

  const int n = f.n, p = f.p, m = f.m;
  const LD nu = static_cast<LD>(f.cones.degree()) + 1.0L;

  Iterate it;
  it.x.setZero(n);
  it.y.setZero(p);
  it.z.setZero(m);
  it.s.setZero(m);

  SolveResult result;
  result.stats.status = SolveStatus::numerical_failure;

  // --- initialization from two KKT solves with identity scaling ---
  kkt.set_identity_scalings(f.cones);
  kkt.factor(settings.static_reg);

  VecLD rhs(kkt.dim);
  rhs.setZero();
  rhs.segment(n, p) = f.b;
  rhs.segment(n + p, m) = f.h;
  kkt.solve(rhs);
  it.x = rhs.head(n);
  it.s = bring_to_cone(f.cones, -rhs.segment(n + p, m),
                       static_cast<LD>(settings.step_fraction));

  rhs.setZero();
  rhs.head(n) = -f.c;
  kkt.solve(rhs);
  it.y = rhs.segment(n, p);
  it.z = bring_to_cone(f.cones, rhs.segment(n + p, m),
                       static_cast<LD>(settings.step_fraction));

  it.tau = 1.0L;
  it.kap = 1.0L;

  VecLD rhs1(kkt.dim), rhs2(kkt.dim);
  rhs1.head(n) = -f.c;
  rhs1.segment(n, p) = f.b;
  rhs1.segment(n + p, m) = f.h;

  Scalings sc;
  VecLD w_dz(m), ds_by_w(m), ds_comb(m), lambda_div(m), w_lds(m), ds_final(m);

  Iterate best = it;
  double best_score = std::numeric_limits<double>::infinity();
  bool have_best = false;
  LD prev_pres = std::numeric_limits<LD>::infinity();
  LD last_step = 0.0L, last_sigma = 0.0L;

  const auto finish_with = [&](const Iterate& chosen, SolveStatus status) {
    const LD divisor = status == SolveStatus::primal_infeasible ||
                               status == SolveStatus::dual_infeasible
                           ? 1.0L
                           : chosen.tau;
    Candidate cand = unscale(f, chosen, divisor);
    result.x = cand.x.cast<double>();
    result.y = cand.y.cast<double>();
    result.s = cand.s.cast<double>();
    result.stats.status = status;
    result.stats.primal_residual = chosen.eff.primal;
    result.stats.dual_residual = chosen.eff.dual;
    result.stats.relative_gap = chosen.eff.gap;
    result.stats.objective = chosen.pcost;
    result.stats.kkt_dynamic_bumps = kkt.dynamic_bumps_total;
  };

  for (int iter = 0;; ++iter) {
    result.stats.iterations = iter;

    // Residuals of the homogeneous embedding (equilibrated data).
    it.rx = -(f.A.transpose() * it.y);
    for (int r = 0; r < m; ++r) it.rx[f.conic_cols[r]] -= f.g[r] * it.z[r];
    it.hresx = it.rx.norm();
    it.rx -= it.tau * f.c;

    it.ry = f.A * it.x;
    it.hresy = it.ry.norm();
    it.ry -= it.tau * f.b;

    it.rz = it.s;
    for (int r = 0; r < m; ++r) it.rz[r] += f.g[r] * it.x[f.conic_cols[r]];
    it.hresz = it.rz.norm();
    // h = 0: nothing to subtract.

    it.cx = f.c.dot(it.x);
    it.by = f.b.dot(it.y);
    it.hz = f.h.dot(it.z);
    it.rt = it.kap + it.cx + it.by + it.hz;

    it.gap = it.s.dot(it.z);
    it.mu = (it.gap + it.kap * it.tau) / nu;

    const LD nx = it.x.norm(), ny = it.y.norm(), nz = it.z.norm(),
             ns = it.s.norm();

    // Candidate measures against the original (unequilibrated) data.
    LD membership_defect = 0.0L;
    {
      Candidate cand = unscale(f, it, it.tau);
      const LD p_abs = (f.A0 * cand.x - f.b0).norm();
      const LD d_abs = (f.A0.transpose() * cand.y + cand.s - f.c0).norm();
      const LD cx0 = f.c0.dot(cand.x);
      const LD g_abs = std::abs(cx0 - f.b0.dot(cand.y));
      it.pub.primal = static_cast<double>(p_abs / (1.0L + f.b0_norm));
      it.pub.dual = static_cast<double>(d_abs / (1.0L + f.c0_norm));
      it.pub.gap = static_cast<double>(g_abs / (1.0L + std::abs(cx0)));
      it.eff.primal = std::min(
          it.pub.primal,
          static_cast<double>(p_abs / (1.0L + f.b0_norm + cand.x.norm())));
      it.eff.dual = std::min(
          it.pub.dual, static_cast<double>(d_abs / (1.0L + f.c0_norm +
                                                    cand.y.norm() +
                                                    cand.s.norm())));
      it.eff.gap = it.pub.gap;
      it.pcost = static_cast<double>(cx0);

      // Worst relative cone-membership defect of the candidate's conic
      // coordinates (the x copy, which carries the duplication residual).
      for (const ConeBlock& blk : prog.cones) {
        if (blk.kind == ConeKind::free_cone) continue;
        VecLD seg(blk.width);
        for (int j = 0; j < blk.width; ++j) {
          seg[j] = f.scale_b * it.x[blk.start + j] /
                   (f.e_col[blk.start + j] * it.tau);
        }
        LD margin;
        if (blk.kind == ConeKind::nonneg) {
          margin = seg.minCoeff();
        } else {
          margin = seg[0] - seg.tail(blk.width - 1).norm();
        }
        const LD scale = 1.0L + seg.cwiseAbs().maxCoeff();
        membership_defect = std::max(membership_defect, -margin / scale);
      }
    }

    // Infeasibility measures (scaled data, certificate form).
    it.pinfres = std::numeric_limits<LD>::quiet_NaN();
    it.dinfres = std::numeric_limits<LD>::quiet_NaN();
    if ((it.hz + it.by) / std::max(ny + nz, 1.0L) <
        -static_cast<LD>(settings.gap_tol)) {
      it.pinfres = it.hresx / std::max(ny + nz, 1.0L);
    }
    if (it.cx / std::max(nx, 1.0L) < -static_cast<LD>(settings.gap_tol)) {
      it.dinfres = std::max(it.hresy / std::max(nx, 1.0L),
                            it.hresz / std::max(nx + ns, 1.0L));
    }

    if (settings.trace) {
      IterationTrace trace;
      trace.iteration = iter;
      trace.primal_residual = it.eff.primal;
      trace.dual_residual = it.eff.dual;
      trace.relative_gap = it.eff.gap;
      trace.absolute_gap = static_cast<double>(it.gap);
      trace.mu = static_cast<double>(it.mu);
      trace.step = static_cast<double>(last_step);
      trace.sigma = static_cast<double>(last_sigma);
      trace.tau = static_cast<double>(it.tau);
      trace.kappa = static_cast<double>(it.kap);
      settings.trace(trace);
    }

    // --- exit tests ---
    if (it.eff.primal <= settings.feas_tol &&
        it.eff.dual <= settings.feas_tol && it.eff.gap <= settings.gap_tol &&
        membership_defect <= kMembershipTol) {
      finish_with(it, SolveStatus::optimal);
      return result;
    }
    if (std::isfinite(static_cast<double>(it.pinfres)) &&
        it.pinfres < static_cast<LD>(settings.feas_tol) && it.tau < it.kap) {
      finish_with(it, SolveStatus::primal_infeasible);
      return result;
    }
    if (std::isfinite(static_cast<double>(it.dinfres)) &&
        it.dinfres < static_cast<LD>(settings.feas_tol) && it.tau < it.kap) {
      finish_with(it, SolveStatus::dual_infeasible);
      return result;
    }

    // --- safeguards --- (a primal-residual blowup is expected while an
    // infeasibility certificate forms, since tau drives toward zero)
    const bool certificate_forming =
        std::isfinite(static_cast<double>(it.pinfres)) ||
        std::isfinite(static_cast<double>(it.dinfres));
    const bool went_bad =
        iter > 0 &&
        ((static_cast<LD>(it.eff.primal) > kSafeguardFactor * prev_pres &&
          !certificate_forming) ||
         it.gap < 0.0L || !std::isfinite(it.pcost));
    if (went_bad || (iter > 0 && last_step <= 1e-8L)) {
      finish_with(have_best ? best : it, SolveStatus::numerical_failure);
      return result;
    }
    if (iter >= settings.max_iterations) {
      finish_with(have_best ? best : it, SolveStatus::iteration_limit);
      return result;
    }
    prev_pres = static_cast<LD>(it.eff.primal);

    const double score =
        std::max({it.eff.primal, it.eff.dual, it.eff.gap,
                  static_cast<double>(membership_defect)});
    if (!have_best || score < best_score) {
      best = it;
      best_score = score;
      have_best = true;
    }

    // --- Nesterov-Todd scaling and factorization ---
    if (!update_scalings(f.cones, it.s, it.z, sc)) {
      finish_with(have_best ? best : it, SolveStatus::numerical_failure);
      return result;
    }
    kkt.set_scalings(f.cones, sc);
    kkt.factor(settings.static_reg);

    kkt.solve(rhs1);
    const VecLD x1 = rhs1.head(n);
    const VecLD y1 = rhs1.segment(n, p);
    const VecLD z1 = rhs1.segment(n + p, m);
    // rhs1 is reused every iteration; restore it after the solve.
    rhs1.head(n) = -f.c;
    rhs1.segment(n, p) = f.b;
    rhs1.segment(n + p, m) = f.h;

    const LD dtau_denom =
        it.kap / it.tau - f.c.dot(x1) - f.b.dot(y1) - f.h.dot(z1);

    // Affine (predictor) direction.
    rhs2.head(n) = it.rx;
    rhs2.segment(n, p) = -it.ry;
    rhs2.segment(n + p, m) = it.s - it.rz;
    kkt.solve(rhs2);
    VecLD dx = rhs2.head(n);
    VecLD dy = rhs2.segment(n, p);
    VecLD dz = rhs2.segment(n + p, m);

    const LD dtau_aff =
        (it.rt - it.kap + f.c.dot(dx) + f.b.dot(dy) + f.h.dot(dz)) / dtau_denom;
    dz += dtau_aff * z1;
    apply_scaling(f.cones, sc, dz, w_dz);
    ds_by_w = -w_dz - sc.lambda;
    const LD dkap_aff = -it.kap - it.kap / it.tau * dtau_aff;

    const LD step_aff = line_search(f.cones, sc.lambda, ds_by_w, w_dz, it.tau,
                                    dtau_aff, it.kap, dkap_aff);

    const LD sigma =
        std::clamp(static_cast<LD>(std::pow(1.0L - step_aff, 3)), kSigmaMin,
                   kSigmaMax);

    // Combined (corrector) direction.
    conic_product(f.cones, sc.lambda, sc.lambda, ds_comb);
    {
      VecLD mehrotra(m);
      conic_product(f.cones, ds_by_w, w_dz, mehrotra);
      ds_comb += mehrotra;
    }
    const LD sigma_mu = sigma * it.mu;
    ds_comb.head(f.cones.lp).array() -= sigma_mu;
    for (int k = 0; k < f.cones.n_soc; ++k) {
      ds_comb[f.cones.soc_start(k)] -= sigma_mu;
    }
    conic_division(f.cones, sc.lambda, ds_comb, lambda_div);
    apply_scaling(f.cones, sc, lambda_div, w_lds);

    const LD one_minus_sigma = 1.0L - sigma;
    rhs2.head(n) = one_minus_sigma * it.rx;
    rhs2.segment(n, p) = -one_minus_sigma * it.ry;
    rhs2.segment(n + p, m) = -one_minus_sigma * it.rz + w_lds;
    kkt.solve(rhs2);
    dx = rhs2.head(n);
    dy = rhs2.segment(n, p);
    dz = rhs2.segment(n + p, m);

    const LD bkap = it.kap * it.tau + dkap_aff * dtau_aff - sigma_mu;
    const LD dtau = (one_minus_sigma * it.rt - bkap / it.tau + f.c.dot(dx) +
                     f.b.dot(dy) + f.h.dot(dz)) /
                    dtau_denom;
    dx += dtau * x1;
    dy += dtau * y1;
    dz += dtau * z1;

    apply_scaling(f.cones, sc, dz, w_dz);
    ds_by_w = -(lambda_div + w_dz);
    const LD dkap = -(bkap + it.kap * dtau) / it.tau;

    const LD step = static_cast<LD>(settings.step_fraction) *
                    line_search(f.cones, sc.lambda, ds_by_w, w_dz, it.tau, dtau,
                                it.kap, dkap);
    apply_scaling(f.cones, sc, ds_by_w, ds_final);

    it.x += step * dx;
    it.y += step * dy;
    it.z += step * dz;
    it.s += step * ds_final;
    it.kap += step * dkap;
    it.tau += step * dtau;
    last_step = step;
    last_sigma = sigma;

    // The embedding is invariant under positive scaling of the whole
    // iterate; renormalizing to tau = 1 keeps the recovered solution and
    // the working iterate on the same scale, which protects the accuracy
    // of the KKT solves near convergence.
    if (it.tau > 0.0L && std::isfinite(static_cast<double>(it.tau))) {
      const LD inv = 1.0L / it.tau;
      it.x *= inv;
      it.y *= inv;
      it.z *= inv;
      it.s *= inv;
      it.kap *= inv;
      it.tau = 1.0L;
    }
  }
}

}  // namespace eetc

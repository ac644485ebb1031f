#pragma once

// Plain-double reference implementations used as independent oracles by the
// unit tests and the acceptance suite. Everything here is written with naive
// loops and stays deliberately separate from the library's tape-based path.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace oracle {

using Mat = std::vector<std::vector<double>>;
using Vec = std::vector<double>;

inline Mat zeros(int r, int c) { return Mat(static_cast<size_t>(r), Vec(static_cast<size_t>(c), 0.0)); }

inline Mat eye(int n) {
  Mat m = zeros(n, n);
  for (int i = 0; i < n; ++i) m[static_cast<size_t>(i)][static_cast<size_t>(i)] = 1.0;
  return m;
}

inline Mat matmul(const Mat& a, const Mat& b) {
  const int m = static_cast<int>(a.size());
  const int k = static_cast<int>(b.size());
  const int n = static_cast<int>(b[0].size());
  Mat c = zeros(m, n);
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p)
      for (int j = 0; j < n; ++j)
        c[static_cast<size_t>(i)][static_cast<size_t>(j)] +=
            a[static_cast<size_t>(i)][static_cast<size_t>(p)] *
            b[static_cast<size_t>(p)][static_cast<size_t>(j)];
  return c;
}

inline Mat transpose(const Mat& a) {
  const int m = static_cast<int>(a.size()), n = static_cast<int>(a[0].size());
  Mat t = zeros(n, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      t[static_cast<size_t>(j)][static_cast<size_t>(i)] = a[static_cast<size_t>(i)][static_cast<size_t>(j)];
  return t;
}

inline Mat add(const Mat& a, const Mat& b) {
  Mat c = a;
  for (size_t i = 0; i < c.size(); ++i)
    for (size_t j = 0; j < c[i].size(); ++j) c[i][j] += b[i][j];
  return c;
}

inline Mat scale(const Mat& a, double f) {
  Mat c = a;
  for (auto& row : c)
    for (double& x : row) x *= f;
  return c;
}

// Chebyshev polynomial of a matrix by explicit matrix powers: the coefficient
// table comes from the scalar recursion, then T_k(A) = sum_j coeff_j A^j.
inline Mat cheb_explicit(const Mat& a, int k) {
  std::vector<Vec> coeff;            // coeff[k][j] = coefficient of x^j in T_k
  coeff.push_back(Vec{1.0});         // T_0 = 1
  if (k >= 1) coeff.push_back(Vec{0.0, 1.0});  // T_1 = x
  for (int q = 2; q <= k; ++q) {
    Vec c(static_cast<size_t>(q + 1), 0.0);
    for (size_t j = 0; j < coeff[static_cast<size_t>(q - 1)].size(); ++j)
      c[j + 1] += 2.0 * coeff[static_cast<size_t>(q - 1)][j];
    for (size_t j = 0; j < coeff[static_cast<size_t>(q - 2)].size(); ++j)
      c[j] -= coeff[static_cast<size_t>(q - 2)][j];
    coeff.push_back(c);
  }
  const int n = static_cast<int>(a.size());
  Mat pow = eye(n);
  Mat out = zeros(n, n);
  for (size_t j = 0; j < coeff[static_cast<size_t>(k)].size(); ++j) {
    const double cj = coeff[static_cast<size_t>(k)][j];
    if (cj != 0.0)
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c)
          out[static_cast<size_t>(r)][static_cast<size_t>(c)] +=
              cj * pow[static_cast<size_t>(r)][static_cast<size_t>(c)];
    if (j + 1 < coeff[static_cast<size_t>(k)].size()) pow = matmul(pow, a);
  }
  return out;
}

// Adjacency normalization reimplemented with naive loops: symmetrize, 100
// power iterations from a constant unit start vector, divide by rho + 1e-6.
inline Mat normalize_adjacency_ref(const Mat& a) {
  const int n = static_cast<int>(a.size());
  Mat s = scale(add(a, transpose(a)), 0.5);
  Vec v(static_cast<size_t>(n), 1.0 / std::sqrt(static_cast<double>(n)));
  double rho = 0.0;
  for (int it = 0; it < 100; ++it) {
    Vec w(static_cast<size_t>(n), 0.0);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        w[static_cast<size_t>(i)] += s[static_cast<size_t>(i)][static_cast<size_t>(j)] * v[static_cast<size_t>(j)];
    double ss = 1e-60;
    for (double x : w) ss += x * x;
    rho = std::sqrt(ss);
    for (int i = 0; i < n; ++i) v[static_cast<size_t>(i)] = w[static_cast<size_t>(i)] / (rho + 1e-30);
  }
  return scale(s, 1.0 / (rho + 1e-6));
}

// Straight-line spatial SLC step: explicit polynomials, no tape, no shared
// code with the library implementation.
inline Mat slc_spatial_ref(const Mat& x, const Mat& w_s, const Mat& w_phi,
                           const std::vector<Mat>& theta_s,
                           const std::vector<Mat>& theta_d) {
  const int n = static_cast<int>(x.size());
  const int c_out = static_cast<int>(theta_s[0][0].size());
  const Mat ws_hat = normalize_adjacency_ref(w_s);
  const Mat wd = matmul(matmul(x, w_phi), transpose(x));
  const Mat wd_hat = normalize_adjacency_ref(wd);

  Mat fs = zeros(n, c_out), fd = zeros(n, c_out);
  for (size_t k = 0; k < theta_s.size(); ++k) {
    fs = add(fs, matmul(matmul(cheb_explicit(ws_hat, static_cast<int>(k)), x), theta_s[k]));
    fd = add(fd, matmul(matmul(cheb_explicit(wd_hat, static_cast<int>(k)), x), theta_d[k]));
  }
  Mat h = zeros(n, c_out);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c_out; ++j)
      h[static_cast<size_t>(i)][static_cast<size_t>(j)] =
          std::max(0.0, fs[static_cast<size_t>(i)][static_cast<size_t>(j)]) +
          std::max(0.0, fd[static_cast<size_t>(i)][static_cast<size_t>(j)]);
  return h;
}

// Baseline spatial step with the fixed 1/N adjacency.
inline Mat gcn_baseline_spatial_ref(const Mat& x, const std::vector<Mat>& theta_s) {
  const int n = static_cast<int>(x.size());
  const int c_out = static_cast<int>(theta_s[0][0].size());
  Mat a = Mat(static_cast<size_t>(n), Vec(static_cast<size_t>(n), 1.0 / n));
  const Mat a_hat = normalize_adjacency_ref(a);
  Mat f = zeros(n, c_out);
  for (size_t k = 0; k < theta_s.size(); ++k)
    f = add(f, matmul(matmul(cheb_explicit(a_hat, static_cast<int>(k)), x), theta_s[k]));
  for (auto& row : f)
    for (double& v : row) v = std::max(0.0, v);
  return f;
}

// One GRU step, scalar loops over every entry of the four gate equations.
inline Vec gru_cell_ref(const Vec& x, const Vec& h_prev, const Mat& w_z, const Mat& w_r,
                        const Mat& w_h, const Mat& u_z, const Mat& u_r, const Mat& u_h,
                        const Vec& b_z, const Vec& b_r, const Vec& b_h) {
  const int hd = static_cast<int>(h_prev.size());
  const int ci = static_cast<int>(x.size());
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  Vec h(static_cast<size_t>(hd), 0.0);
  for (int i = 0; i < hd; ++i) {
    double az = b_z[static_cast<size_t>(i)];
    for (int j = 0; j < ci; ++j)
      az += w_z[static_cast<size_t>(i)][static_cast<size_t>(j)] * x[static_cast<size_t>(j)];
    for (int j = 0; j < hd; ++j)
      az += u_z[static_cast<size_t>(i)][static_cast<size_t>(j)] * h_prev[static_cast<size_t>(j)];
    const double z = sig(az);
    double ah = b_h[static_cast<size_t>(i)];
    for (int j = 0; j < ci; ++j)
      ah += w_h[static_cast<size_t>(i)][static_cast<size_t>(j)] * x[static_cast<size_t>(j)];
    for (int j = 0; j < hd; ++j) {
      double arj = b_r[static_cast<size_t>(j)];
      for (int q = 0; q < ci; ++q)
        arj += w_r[static_cast<size_t>(j)][static_cast<size_t>(q)] * x[static_cast<size_t>(q)];
      for (int q = 0; q < hd; ++q)
        arj += u_r[static_cast<size_t>(j)][static_cast<size_t>(q)] * h_prev[static_cast<size_t>(q)];
      ah += u_h[static_cast<size_t>(i)][static_cast<size_t>(j)] * sig(arj) * h_prev[static_cast<size_t>(j)];
    }
    const double htilde = std::tanh(ah);
    h[static_cast<size_t>(i)] = (1.0 - z) * h_prev[static_cast<size_t>(i)] + z * htilde;
  }
  return h;
}

// AUC by brute-force pairwise counting: P(score_pos > score_neg) + tie/2.
inline double auc_pairwise(const Vec& scores, const std::vector<int>& labels) {
  int64_t pairs = 0;
  double wins = 0.0;
  for (size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j])
        wins += 1.0;
      else if (scores[i] == scores[j])
        wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

// Eigenvalues of a small symmetric matrix by cyclic Jacobi rotations.
inline Vec symmetric_eigenvalues(Mat a) {
  const int n = static_cast<int>(a.size());
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += a[static_cast<size_t>(p)][static_cast<size_t>(q)] * a[static_cast<size_t>(p)][static_cast<size_t>(q)];
    if (off < 1e-26) break;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) {
        const double apq = a[static_cast<size_t>(p)][static_cast<size_t>(q)];
        if (std::abs(apq) < 1e-30) continue;
        const double app = a[static_cast<size_t>(p)][static_cast<size_t>(p)];
        const double aqq = a[static_cast<size_t>(q)][static_cast<size_t>(q)];
        const double theta = 0.5 * std::atan2(2.0 * apq, aqq - app);
        const double c = std::cos(theta), s = std::sin(theta);
        for (int i = 0; i < n; ++i) {
          const double aip = a[static_cast<size_t>(i)][static_cast<size_t>(p)];
          const double aiq = a[static_cast<size_t>(i)][static_cast<size_t>(q)];
          a[static_cast<size_t>(i)][static_cast<size_t>(p)] = c * aip - s * aiq;
          a[static_cast<size_t>(i)][static_cast<size_t>(q)] = s * aip + c * aiq;
        }
        for (int j = 0; j < n; ++j) {
          const double apj = a[static_cast<size_t>(p)][static_cast<size_t>(j)];
          const double aqj = a[static_cast<size_t>(q)][static_cast<size_t>(j)];
          a[static_cast<size_t>(p)][static_cast<size_t>(j)] = c * apj - s * aqj;
          a[static_cast<size_t>(q)][static_cast<size_t>(j)] = s * apj + c * aqj;
        }
      }
  }
  Vec ev(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) ev[static_cast<size_t>(i)] = a[static_cast<size_t>(i)][static_cast<size_t>(i)];
  std::sort(ev.begin(), ev.end());
  return ev;
}

inline double spectral_radius_ref(const Mat& sym) {
  Vec ev = symmetric_eigenvalues(sym);
  return std::max(std::abs(ev.front()), std::abs(ev.back()));
}

}  // namespace oracle

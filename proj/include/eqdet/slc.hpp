#pragma once

#include <vector>

#include "eqdet/autodiff.hpp"
#include "eqdet/rng.hpp"

namespace eqdet {

// Learnable pieces of one spatial SLC step. For the conventional-GCN
// baseline only theta_s is populated; the static adjacency is fixed and the
// dynamic path is absent.
struct SlcLayerParams {
  Tensor W_s;                    // N x N learnable static adjacency
  Tensor W_phi;                  // C_in x C_in bilinear form for the dynamic adjacency
  std::vector<Tensor> theta_s;   // K filters, each C_in x C_out
  std::vector<Tensor> theta_d;   // K filters, each C_in x C_out
};

struct SlcLayerVars {
  Var W_s;
  Var W_phi;
  std::vector<Var> theta_s;
  std::vector<Var> theta_d;
};

inline SlcLayerParams init_slc_params(int n_stations, int c_in, int c_out, int k_order,
                                      Rng& rng, bool baseline = false) {
  check_arg(k_order >= 1, "init_slc_params: K must be >= 1");
  SlcLayerParams p;
  auto fan_in_uniform = [&rng](int rows, int cols, int fan_in) {
    Tensor t = Tensor::zeros({rows, cols});
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& x : t.v) x = rng.uniform(-bound, bound);
    return t;
  };
  if (!baseline) {
    // uninformative fully connected prior with a little jitter
    p.W_s = Tensor::full({n_stations, n_stations}, 1.0 / n_stations);
    for (double& x : p.W_s.v) x += rng.normal(0.0, 0.01);
    p.W_phi = fan_in_uniform(c_in, c_in, c_in);
  }
  for (int k = 0; k < k_order; ++k) {
    p.theta_s.push_back(fan_in_uniform(c_in, c_out, c_in));
    if (!baseline) p.theta_d.push_back(fan_in_uniform(c_in, c_out, c_in));
  }
  return p;
}

// Chebyshev basis [T_0(A) ... T_{K-1}(A)] by the three-term recursion,
// T_0 = I, T_1 = A, T_k = 2 A T_{k-1} - T_{k-2}.
inline std::vector<Var> cheb_basis(Tape& t, Var A, int K) {
  const Tensor& a = t.value(A);
  check_arg(a.rank() == 2 && a.dim(0) == a.dim(1),
            "cheb_basis: A must be square, got " + a.shape_str());
  check_arg(K >= 1, "cheb_basis: K must be >= 1");
  std::vector<Var> basis;
  basis.push_back(t.constant(Tensor::eye(a.dim(0))));
  if (K >= 2) basis.push_back(A);
  for (int k = 2; k < K; ++k)
    basis.push_back(sub(scale(matmul(A, basis[static_cast<size_t>(k - 1)]), 2.0),
                        basis[static_cast<size_t>(k - 2)]));
  return basis;
}

// Input-driven adjacency W^d = X W_phi X^T, node space. Accepts a single
// N x C feature matrix or a P x N x C sequence (one adjacency per step).
inline Var dynamic_adjacency(Tape& t, Var X, Var W_phi) {
  const Tensor& x = t.value(X);
  const Tensor& w = t.value(W_phi);
  check_arg(w.rank() == 2 && w.dim(0) == w.dim(1), "dynamic_adjacency: W_phi must be square");
  check_arg((x.rank() == 2 || x.rank() == 3) && x.shape.back() == w.dim(0),
            "dynamic_adjacency: shape mismatch " + shapes_str(x, w));
  return matmul(matmul(X, W_phi), transpose(X));
}

constexpr int kPowerIterations = 100;

namespace detail {

// Spectral-radius estimates for a batch of symmetric matrices: 100 power
// iterations from a constant unit start vector, n_k = sqrt(|S v|^2 + 1e-60),
// v_k = w_k / (n_k + 1e-30). Fused into one tape node (the loop would
// otherwise dominate the tape); the backward replays the iterations in
// reverse using the saved v_k, n_k.
inline Var power_iteration_rho(Tape& t, Var s_var, int iters) {
  const Tensor& S = t.value(s_var);
  check_arg(S.rank() == 3 && S.dim(1) == S.dim(2),
            "power_iteration_rho: need B x N x N, got " + S.shape_str());
  const int nb = S.dim(0), n = S.dim(1);
  constexpr double eps_sq = 1e-60, eps_div = 1e-30;

  auto vs = std::make_shared<std::vector<double>>(
      static_cast<size_t>(iters + 1) * nb * n);
  auto ns = std::make_shared<std::vector<double>>(static_cast<size_t>(iters) * nb);
  const double v0 = 1.0 / std::sqrt(static_cast<double>(n));
  for (int64_t i = 0; i < static_cast<int64_t>(nb) * n; ++i) (*vs)[static_cast<size_t>(i)] = v0;

  Tensor rho = Tensor::zeros({nb});
  std::vector<double> w(static_cast<size_t>(n));
  for (int b = 0; b < nb; ++b) {
    const double* sm = S.v.data() + static_cast<int64_t>(b) * n * n;
    for (int k = 1; k <= iters; ++k) {
      const double* vprev = vs->data() + (static_cast<int64_t>(k - 1) * nb + b) * n;
      double* vcur = vs->data() + (static_cast<int64_t>(k) * nb + b) * n;
      for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        const double* row = sm + static_cast<int64_t>(i) * n;
        for (int j = 0; j < n; ++j) acc += row[j] * vprev[j];
        w[static_cast<size_t>(i)] = acc;
      }
      double sumsq = eps_sq;
      for (int i = 0; i < n; ++i) sumsq += w[static_cast<size_t>(i)] * w[static_cast<size_t>(i)];
      const double nk = std::sqrt(sumsq);
      (*ns)[static_cast<size_t>((k - 1) * nb + b)] = nk;
      const double inv = 1.0 / (nk + eps_div);
      for (int i = 0; i < n; ++i) vcur[i] = w[static_cast<size_t>(i)] * inv;
    }
    rho.v[static_cast<size_t>(b)] = (*ns)[static_cast<size_t>((iters - 1) * nb + b)];
  }

  const bool rg = t.requires_grad(s_var);
  const int is = s_var.index();
  Var out = t.push(std::move(rho), rg);
  if (rg)
    t.set_backward(out, [is, vs, ns, iters, nb, n](Tape& tp, const Tensor& g) {
      const Tensor& S2 = tp.node_value(is);
      Tensor& gs = tp.grad_buf(is);
      std::vector<double> dv(static_cast<size_t>(n)), dw(static_cast<size_t>(n)),
          dv_prev(static_cast<size_t>(n));
      for (int b = 0; b < nb; ++b) {
        const double* sm = S2.v.data() + static_cast<int64_t>(b) * n * n;
        double* gm = gs.v.data() + static_cast<int64_t>(b) * n * n;
        std::fill(dv.begin(), dv.end(), 0.0);
        for (int k = iters; k >= 1; --k) {
          const double nk = (*ns)[static_cast<size_t>((k - 1) * nb + b)];
          const double* vk = vs->data() + (static_cast<int64_t>(k) * nb + b) * n;
          const double* vkm1 = vs->data() + (static_cast<int64_t>(k - 1) * nb + b) * n;
          // n_k receives the output gradient at the last step, plus the
          // normalization contribution from v_k = w_k / (n_k + eps)
          double dn = k == iters ? g.v[static_cast<size_t>(b)] : 0.0;
          double dv_dot_v = 0.0;
          for (int i = 0; i < n; ++i) dv_dot_v += dv[static_cast<size_t>(i)] * vk[i];
          dn -= dv_dot_v / (nk + eps_div);
          // w_k = v_k (n_k + eps); dw from both the division and the norm
          const double norm_coeff = dn * (nk + eps_div) / nk;
          const double inv = 1.0 / (nk + eps_div);
          for (int i = 0; i < n; ++i)
            dw[static_cast<size_t>(i)] = dv[static_cast<size_t>(i)] * inv + norm_coeff * vk[i];
          // w_k = S v_{k-1}
          for (int i = 0; i < n; ++i) {
            const double dwi = dw[static_cast<size_t>(i)];
            double* grow = gm + static_cast<int64_t>(i) * n;
            for (int j = 0; j < n; ++j) grow[j] += dwi * vkm1[j];
          }
          for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int i = 0; i < n; ++i)
              acc += sm[static_cast<int64_t>(i) * n + j] * dw[static_cast<size_t>(i)];
            dv_prev[static_cast<size_t>(j)] = acc;
          }
          std::swap(dv, dv_prev);
        }
      }
    });
  return out;
}

}  // namespace detail

// Symmetrizes and rescales an adjacency so the Chebyshev recursion stays
// bounded: A -> (A + A^T)/2 / (rho_hat + 1e-6), rho_hat estimated with 100
// power iterations from a constant start vector. Accepts N x N or B x N x N.
// The constant start keeps the whole op permutation-equivariant.
inline Var normalize_adjacency(Tape& t, Var A) {
  const Tensor& a = t.value(A);
  check_arg((a.rank() == 2 && a.dim(0) == a.dim(1)) ||
                (a.rank() == 3 && a.dim(1) == a.dim(2)),
            "normalize_adjacency: need square matrix or batch of them, got " +
                a.shape_str());
  const bool batched = a.rank() == 3;
  const int n = batched ? a.dim(1) : a.dim(0);
  Var S = scale(add(A, transpose(A)), 0.5);

  if (batched) {
    Var rho = detail::power_iteration_rho(t, S, kPowerIterations);
    return scale_rows(S, reciprocal(affine(rho, 1.0, 1e-6)));
  }

  const double v0 = 1.0 / std::sqrt(static_cast<double>(n));
  Var v = t.constant(Tensor::full({n}, v0));
  Var norm;
  for (int it = 0; it < kPowerIterations; ++it) {
    Var w = matmul(S, v);
    norm = rows_l2norm(w);  // sqrt(sum^2 + 1e-60): zero matrix stays harmless
    Var inv = reciprocal(affine(norm, 1.0, 1e-30));
    v = scale_by(w, inv);
  }
  Var scale_inv = reciprocal(affine(norm, 1.0, 1e-6));
  return scale_by(S, scale_inv);
}

namespace detail {

// sum_k T_k(W) X theta_k via the recursion on Y_k = T_k(W) X, which avoids
// materializing the matrix polynomials. W may be 2-D (shared across a
// sequence) or 3-D (per-step); X matches accordingly.
inline Var cheb_filter(Tape& t, Var W_hat, Var X, const std::vector<Var>& theta) {
  check_arg(!theta.empty(), "cheb_filter: need at least one theta");
  Var acc = matmul(X, theta[0]);
  if (theta.size() == 1) return acc;
  Var y_prev2 = X;
  Var y_prev1 = matmul(W_hat, X);
  acc = add(acc, matmul(y_prev1, theta[1]));
  for (size_t k = 2; k < theta.size(); ++k) {
    Var y = sub(scale(matmul(W_hat, y_prev1), 2.0), y_prev2);
    acc = add(acc, matmul(y, theta[k]));
    y_prev2 = y_prev1;
    y_prev1 = y;
  }
  return acc;
}

}  // namespace detail

// Spatial SLC step on one N x C_in feature matrix:
//   H = ReLU(sum_k T_k(Ws_hat) X theta_s_k) + ReLU(sum_k T_k(Wd_hat) X theta_d_k)
// with Ws_hat/Wd_hat the normalized static and input-driven adjacencies.
inline Var slc_spatial_forward(Tape& t, Var X, const SlcLayerVars& p) {
  const Tensor& x = t.value(X);
  check_arg(x.rank() == 2, "slc_spatial_forward: X must be N x C_in");
  check_arg(!p.theta_s.empty() && p.theta_s.size() == p.theta_d.size(),
            "slc_spatial_forward: theta lists must be non-empty and same length");
  check_arg(t.value(p.W_s).rank() == 2 && t.value(p.W_s).dim(0) == x.dim(0),
            "slc_spatial_forward: W_s does not match station count");
  Var ws_hat = normalize_adjacency(t, p.W_s);
  Var wd_hat = normalize_adjacency(t, dynamic_adjacency(t, X, p.W_phi));
  Var fs = detail::cheb_filter(t, ws_hat, X, p.theta_s);
  Var fd = detail::cheb_filter(t, wd_hat, X, p.theta_d);
  return add(relu(fs), relu(fd));
}

// Same step applied across a whole P x N x C_in sequence. The static basis is
// shared across steps; the dynamic adjacency is per step.
inline Var slc_spatial_forward_seq(Tape& t, Var X_seq, const SlcLayerVars& p) {
  const Tensor& x = t.value(X_seq);
  check_arg(x.rank() == 3, "slc_spatial_forward_seq: X must be P x N x C_in");
  check_arg(!p.theta_s.empty() && p.theta_s.size() == p.theta_d.size(),
            "slc_spatial_forward_seq: theta lists must be non-empty and same length");
  Var ws_hat = normalize_adjacency(t, p.W_s);
  Var wd_hat = normalize_adjacency(t, dynamic_adjacency(t, X_seq, p.W_phi));
  Var fs = detail::cheb_filter(t, ws_hat, X_seq, p.theta_s);
  Var fd = detail::cheb_filter(t, wd_hat, X_seq, p.theta_d);
  return add(relu(fs), relu(fd));
}

// Conventional-GCN spatial step: fixed fully connected adjacency (1/N
// everywhere), static path only.
inline Var gcn_baseline_spatial_seq(Tape& t, Var X_seq, Var a_fixed_hat,
                                    const std::vector<Var>& theta_s) {
  return relu(detail::cheb_filter(t, a_fixed_hat, X_seq, theta_s));
}

// Value-level normalization used to precompute the baseline's fixed
// adjacency once per forward.
inline Tensor normalize_adjacency_plain(const Tensor& a) {
  Tape t(false);
  return t.value(normalize_adjacency(t, t.constant(a)));
}

}  // namespace eqdet

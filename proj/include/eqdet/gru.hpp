#pragma once

#include <vector>

#include "eqdet/autodiff.hpp"
#include "eqdet/rng.hpp"

namespace eqdet {

// Gated recurrent unit, shared across stations within a layer.
// Convention: h_t = (1-z) .* h_prev + z .* h_tilde, reset gate applied to
// h_prev inside the candidate.
struct GruParams {
  Tensor W_z, W_r, W_h;  // H x C_in input projections
  Tensor U_z, U_r, U_h;  // H x H recurrent projections
  Tensor b_z, b_r, b_h;  // H biases
};

struct GruVars {
  Var W_z, W_r, W_h, U_z, U_r, U_h, b_z, b_r, b_h;
};

inline GruParams init_gru_params(int c_in, int h_dim, Rng& rng) {
  auto fan_in_uniform = [&rng](int rows, int cols, int fan_in) {
    Tensor t = Tensor::zeros({rows, cols});
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& x : t.v) x = rng.uniform(-bound, bound);
    return t;
  };
  GruParams p;
  p.W_z = fan_in_uniform(h_dim, c_in, c_in);
  p.W_r = fan_in_uniform(h_dim, c_in, c_in);
  p.W_h = fan_in_uniform(h_dim, c_in, c_in);
  p.U_z = fan_in_uniform(h_dim, h_dim, h_dim);
  p.U_r = fan_in_uniform(h_dim, h_dim, h_dim);
  p.U_h = fan_in_uniform(h_dim, h_dim, h_dim);
  p.b_z = Tensor::zeros({h_dim});
  p.b_r = Tensor::zeros({h_dim});
  p.b_h = Tensor::zeros({h_dim});
  return p;
}

namespace detail {

// Projections pre-transposed once per sequence so each step is X * W^T.
struct GruBound {
  Var WzT, WrT, WhT, UzT, UrT, UhT, b_z, b_r, b_h;
};

inline GruBound bind_gru(Tape& t, const GruVars& p) {
  return {transpose(p.W_z), transpose(p.W_r), transpose(p.W_h),
          transpose(p.U_z), transpose(p.U_r), transpose(p.U_h),
          p.b_z,            p.b_r,            p.b_h};
}

// One step over an N x C_in station batch; h_prev is N x H. Tape-op version,
// kept as the readable reference; gru_sequence uses the fused step below.
inline Var gru_step(Tape& t, Var x, Var h_prev, const GruBound& g) {
  Var z = sigmoid(add(add(matmul(x, g.WzT), matmul(h_prev, g.UzT)), g.b_z));
  Var r = sigmoid(add(add(matmul(x, g.WrT), matmul(h_prev, g.UrT)), g.b_r));
  Var h_tilde =
      tanh_op(add(add(matmul(x, g.WhT), matmul(mul(r, h_prev), g.UhT)), g.b_h));
  // (1-z) .* h_prev + z .* h_tilde
  return add(mul(affine(z, -1.0, 1.0), h_prev), mul(z, h_tilde));
}

// xW^T + b with the same rounding order as matmul + broadcast add.
inline void project(const double* x, const double* w, const double* b, double* out,
                    int n, int c, int h) {
  for (int i = 0; i < n; ++i) {
    const double* xi = x + static_cast<int64_t>(i) * c;
    double* oi = out + static_cast<int64_t>(i) * h;
    for (int j = 0; j < h; ++j) {
      const double* wj = w + static_cast<int64_t>(j) * c;
      double acc = 0.0;
      for (int p = 0; p < c; ++p) acc += xi[p] * wj[p];
      oi[j] = acc + (b ? b[j] : 0.0);
    }
  }
}

// A whole GRU step as one tape node. The 18 elementwise/matmul nodes per
// step otherwise dominate long unrolls; the closure implements standard
// backpropagation through the gate equations using the saved z, r, h_tilde.
inline Var gru_step_fused(Tape& t, Var x, Var h_prev, const GruVars& p) {
  const Tensor& X = t.value(x);
  const Tensor& H = t.value(h_prev);
  const int n = X.dim(0), c = X.dim(1), h = H.dim(1);
  const Tensor& Wz = t.value(p.W_z);
  const Tensor& Uz = t.value(p.U_z);
  check_arg(Wz.dim(1) == c, "gru: input size mismatch " + shapes_str(Wz, X));
  check_arg(Uz.dim(1) == h && H.dim(0) == n,
            "gru: hidden size mismatch " + shapes_str(Uz, H));

  auto z = std::make_shared<Tensor>(Tensor::zeros({n, h}));
  auto r = std::make_shared<Tensor>(Tensor::zeros({n, h}));
  auto cand = std::make_shared<Tensor>(Tensor::zeros({n, h}));
  std::vector<double> tmp(static_cast<size_t>(n) * h), rh(static_cast<size_t>(n) * h);

  project(X.v.data(), Wz.v.data(), nullptr, z->v.data(), n, c, h);
  project(H.v.data(), Uz.v.data(), nullptr, tmp.data(), n, h, h);
  for (size_t i = 0; i < z->v.size(); ++i)
    z->v[i] = sigmoid_scalar(z->v[i] + tmp[i] + t.value(p.b_z).v[i % static_cast<size_t>(h)]);

  project(X.v.data(), t.value(p.W_r).v.data(), nullptr, r->v.data(), n, c, h);
  project(H.v.data(), t.value(p.U_r).v.data(), nullptr, tmp.data(), n, h, h);
  for (size_t i = 0; i < r->v.size(); ++i)
    r->v[i] = sigmoid_scalar(r->v[i] + tmp[i] + t.value(p.b_r).v[i % static_cast<size_t>(h)]);

  for (size_t i = 0; i < rh.size(); ++i) rh[i] = r->v[i] * H.v[i];
  project(X.v.data(), t.value(p.W_h).v.data(), nullptr, cand->v.data(), n, c, h);
  project(rh.data(), t.value(p.U_h).v.data(), nullptr, tmp.data(), n, h, h);
  for (size_t i = 0; i < cand->v.size(); ++i)
    cand->v[i] =
        std::tanh(cand->v[i] + tmp[i] + t.value(p.b_h).v[i % static_cast<size_t>(h)]);

  Tensor out = Tensor::zeros({n, h});
  for (size_t i = 0; i < out.v.size(); ++i)
    out.v[i] = (1.0 - z->v[i]) * H.v[i] + z->v[i] * cand->v[i];

  const bool rg = t.grad_enabled();
  const int ix = x.index(), ih = h_prev.index();
  const int iwz = p.W_z.index(), iwr = p.W_r.index(), iwh = p.W_h.index();
  const int iuz = p.U_z.index(), iur = p.U_r.index(), iuh = p.U_h.index();
  const int ibz = p.b_z.index(), ibr = p.b_r.index(), ibh = p.b_h.index();
  const bool gx = t.requires_grad(x), gh = t.requires_grad(h_prev);
  // per-tensor gating: any mix of leaves and constants is legal
  const bool gwz = t.requires_grad(p.W_z), gwr = t.requires_grad(p.W_r),
             gwh = t.requires_grad(p.W_h), guz = t.requires_grad(p.U_z),
             gur = t.requires_grad(p.U_r), guh = t.requires_grad(p.U_h),
             gbz = t.requires_grad(p.b_z), gbr = t.requires_grad(p.b_r),
             gbh = t.requires_grad(p.b_h);
  const bool gp = gwz || gwr || gwh || guz || gur || guh || gbz || gbr || gbh;
  Var out_var = t.push(std::move(out), rg && (gx || gh || gp));
  if (rg && (gx || gh || gp))
    t.set_backward(out_var, [=](Tape& tp, const Tensor& g) {
      const Tensor& X2 = tp.node_value(ix);
      const Tensor& H2 = tp.node_value(ih);
      const int64_t nh = static_cast<int64_t>(n) * h;
      std::vector<double> daz(static_cast<size_t>(nh)), dar(static_cast<size_t>(nh)),
          dah(static_cast<size_t>(nh)), drh(static_cast<size_t>(nh));
      // gate pre-activation gradients
      for (int64_t i = 0; i < nh; ++i) {
        const size_t ii = static_cast<size_t>(i);
        const double zi = z->v[ii], ci = cand->v[ii], hi = H2.v[ii];
        const double dz = g.v[ii] * (ci - hi);
        const double dc = g.v[ii] * zi;
        daz[ii] = dz * zi * (1.0 - zi);
        dah[ii] = dc * (1.0 - ci * ci);
      }
      // d(r .* h_prev) = dah * U_h
      const Tensor& Uh2 = tp.node_value(iuh);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < h; ++j) {
          double acc = 0.0;
          for (int q = 0; q < h; ++q)
            acc += dah[static_cast<size_t>(i) * h + q] * Uh2.v[static_cast<size_t>(q) * h + j];
          drh[static_cast<size_t>(i) * h + j] = acc;
        }
      for (int64_t i = 0; i < nh; ++i) {
        const size_t ii = static_cast<size_t>(i);
        const double ri = r->v[ii];
        dar[ii] = drh[ii] * H2.v[ii] * ri * (1.0 - ri);
      }

      auto acc_weight = [&](int iw, const std::vector<double>& da, const Tensor& inp,
                            int cols) {
        Tensor& gw = tp.grad_buf(iw);
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < h; ++j) {
            const double d = da[static_cast<size_t>(i) * h + j];
            if (d == 0.0) continue;
            double* grow = gw.v.data() + static_cast<int64_t>(j) * cols;
            const double* irow = inp.v.data() + static_cast<int64_t>(i) * cols;
            for (int q = 0; q < cols; ++q) grow[q] += d * irow[q];
          }
      };
      auto acc_bias = [&](int ib, const std::vector<double>& da) {
        Tensor& gb = tp.grad_buf(ib);
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < h; ++j) gb.v[static_cast<size_t>(j)] += da[static_cast<size_t>(i) * h + j];
      };
      auto acc_input = [&](Tensor& gdst, const std::vector<double>& da, int iw, int cols) {
        const Tensor& W2 = tp.node_value(iw);
        for (int i = 0; i < n; ++i)
          for (int q = 0; q < cols; ++q) {
            double acc = 0.0;
            for (int j = 0; j < h; ++j)
              acc += da[static_cast<size_t>(i) * h + j] * W2.v[static_cast<size_t>(j) * cols + q];
            gdst.v[static_cast<size_t>(i) * cols + q] += acc;
          }
      };

      if (gwz) acc_weight(iwz, daz, X2, c);
      if (gwr) acc_weight(iwr, dar, X2, c);
      if (gwh) acc_weight(iwh, dah, X2, c);
      if (guz) acc_weight(iuz, daz, H2, h);
      if (gur) acc_weight(iur, dar, H2, h);
      if (guh) {
        // U_h sees r .* h_prev as its input
        Tensor rh2 = Tensor::zeros({n, h});
        for (int64_t i = 0; i < nh; ++i)
          rh2.v[static_cast<size_t>(i)] = r->v[static_cast<size_t>(i)] * H2.v[static_cast<size_t>(i)];
        acc_weight(iuh, dah, rh2, h);
      }
      if (gbz) acc_bias(ibz, daz);
      if (gbr) acc_bias(ibr, dar);
      if (gbh) acc_bias(ibh, dah);
      if (gx) {
        Tensor& gx_buf = tp.grad_buf(ix);
        acc_input(gx_buf, daz, iwz, c);
        acc_input(gx_buf, dar, iwr, c);
        acc_input(gx_buf, dah, iwh, c);
      }
      if (gh) {
        Tensor& gh_buf = tp.grad_buf(ih);
        for (int64_t i = 0; i < nh; ++i) {
          const size_t ii = static_cast<size_t>(i);
          gh_buf.v[ii] += g.v[ii] * (1.0 - z->v[ii]) + drh[ii] * r->v[ii];
        }
        acc_input(gh_buf, daz, iuz, h);
        acc_input(gh_buf, dar, iur, h);
      }
    });
  return out_var;
}

}  // namespace detail

// Single cell update for one station: x is a C_in vector, h_prev an H vector.
inline Var gru_cell(Tape& t, Var x, Var h_prev, const GruVars& p) {
  const Tensor& xv = t.value(x);
  const Tensor& hv = t.value(h_prev);
  check_arg(xv.rank() == 1 && hv.rank() == 1, "gru_cell: x and h_prev must be vectors");
  check_arg(t.value(p.W_z).dim(1) == xv.dim(0),
            "gru_cell: input size mismatch " + shapes_str(t.value(p.W_z), xv));
  check_arg(t.value(p.U_z).dim(1) == hv.dim(0),
            "gru_cell: hidden size mismatch " + shapes_str(t.value(p.U_z), hv));
  detail::GruBound g = detail::bind_gru(t, p);
  Var xm = reshape(x, {1, xv.dim(0)});
  Var hm = reshape(h_prev, {1, hv.dim(0)});
  return reshape(detail::gru_step(t, xm, hm, g), {hv.dim(0)});
}

// Runs the GRU over a P x N x C_in sequence with h_0 = 0, independently per
// station with shared parameters. Output is P x N x H.
inline Var gru_sequence(Tape& t, Var x_seq, const GruVars& p) {
  const Tensor& xv = t.value(x_seq);
  check_arg(xv.rank() == 3, "gru_sequence: input must be P x N x C_in");
  check_arg(t.value(p.W_z).dim(1) == xv.dim(2),
            "gru_sequence: input size mismatch " + shapes_str(t.value(p.W_z), xv));
  const int steps = xv.dim(0), n = xv.dim(1);
  const int h_dim = t.value(p.U_z).dim(0);
  Var h = t.constant(Tensor::zeros({n, h_dim}));
  std::vector<Var> outputs;
  outputs.reserve(static_cast<size_t>(steps));
  for (int step = 0; step < steps; ++step) {
    h = detail::gru_step_fused(t, slice0(x_seq, step), h, p);
    outputs.push_back(h);
  }
  return stack0(outputs);
}

}  // namespace eqdet

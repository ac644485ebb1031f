#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "eqdet/gradcheck.hpp"
#include "eqdet/gru.hpp"
#include "oracles.hpp"

using namespace eqdet;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& x : t.v) x = rng.normal(0.0, scale);
  return t;
}

GruParams zero_gru(int c_in, int h_dim) {
  GruParams p;
  p.W_z = Tensor::zeros({h_dim, c_in});
  p.W_r = Tensor::zeros({h_dim, c_in});
  p.W_h = Tensor::zeros({h_dim, c_in});
  p.U_z = Tensor::zeros({h_dim, h_dim});
  p.U_r = Tensor::zeros({h_dim, h_dim});
  p.U_h = Tensor::zeros({h_dim, h_dim});
  p.b_z = Tensor::zeros({h_dim});
  p.b_r = Tensor::zeros({h_dim});
  p.b_h = Tensor::zeros({h_dim});
  return p;
}

GruVars bind(Tape& t, const GruParams& p) {
  return {t.leaf(p.W_z), t.leaf(p.W_r), t.leaf(p.W_h), t.leaf(p.U_z), t.leaf(p.U_r),
          t.leaf(p.U_h), t.leaf(p.b_z), t.leaf(p.b_r), t.leaf(p.b_h)};
}

oracle::Mat to_mat(const Tensor& t) {
  oracle::Mat m = oracle::zeros(t.dim(0), t.dim(1));
  for (int i = 0; i < t.dim(0); ++i)
    for (int j = 0; j < t.dim(1); ++j) m[static_cast<size_t>(i)][static_cast<size_t>(j)] = t.at(i, j);
  return m;
}

oracle::Vec gru_ref(const oracle::Vec& x, const oracle::Vec& h, const GruParams& p) {
  return oracle::gru_cell_ref(x, h, to_mat(p.W_z), to_mat(p.W_r), to_mat(p.W_h),
                              to_mat(p.U_z), to_mat(p.U_r), to_mat(p.U_h), p.b_z.v,
                              p.b_r.v, p.b_h.v);
}

}  // namespace

TEST_CASE("gru_cell fixed points with zero parameters") {
  GruParams p = zero_gru(3, 4);

  SECTION("origin stays at origin") {
    Tape t;
    Var h = gru_cell(t, t.leaf(Tensor::zeros({3})), t.leaf(Tensor::zeros({4})), bind(t, p));
    for (double v : t.value(h).v) CHECK(v == 0.0);
  }

  SECTION("ones state halves (z = 0.5, h_tilde = 0)") {
    Tape t;
    Var h = gru_cell(t, t.leaf(Tensor::zeros({3})), t.leaf(Tensor::full({4}, 1.0)), bind(t, p));
    for (double v : t.value(h).v) CHECK(v == Catch::Approx(0.5).margin(1e-15));
  }
}

TEST_CASE("gru_cell matches the scalar-loop oracle") {
  Rng rng(51);
  GruParams p = init_gru_params(3, 4, rng);
  Tensor x = random_tensor({3}, rng);
  Tensor h0 = random_tensor({4}, rng, 0.5);

  Tape t;
  const Tensor& got = t.value(gru_cell(t, t.leaf(x), t.leaf(h0), bind(t, p)));
  oracle::Vec want = gru_ref(x.v, h0.v, p);
  for (int i = 0; i < 4; ++i)
    CHECK(got.v[static_cast<size_t>(i)] == Catch::Approx(want[static_cast<size_t>(i)]).margin(1e-13));
}

TEST_CASE("gru_cell rejects shape mismatches") {
  Rng rng(5);
  GruParams p = init_gru_params(3, 4, rng);
  Tape t;
  CHECK_THROWS_AS(gru_cell(t, t.leaf(Tensor::zeros({2})), t.leaf(Tensor::zeros({4})), bind(t, p)),
                  std::invalid_argument);
  CHECK_THROWS_AS(gru_cell(t, t.leaf(Tensor::zeros({3})), t.leaf(Tensor::zeros({5})), bind(t, p)),
                  std::invalid_argument);
}

TEST_CASE("gru_sequence single step equals gru_cell with zero initial state") {
  Rng rng(53);
  GruParams p = init_gru_params(3, 4, rng);
  Tensor x = random_tensor({1, 2, 3}, rng);

  Tape t;
  const Tensor& seq = t.value(gru_sequence(t, t.leaf(x), bind(t, p)));
  REQUIRE(seq.shape == std::vector<int>{1, 2, 4});
  for (int s = 0; s < 2; ++s) {
    Tensor xe = Tensor::zeros({3});
    for (int j = 0; j < 3; ++j) xe.v[static_cast<size_t>(j)] = x.at(0, s, j);
    Tape t2;
    const Tensor& want =
        t2.value(gru_cell(t2, t2.leaf(xe), t2.leaf(Tensor::zeros({4})), bind(t2, p)));
    for (int j = 0; j < 4; ++j)
      CHECK(seq.at(0, s, j) == Catch::Approx(want.v[static_cast<size_t>(j)]).margin(1e-14));
  }
}

TEST_CASE("gru_sequence zero input with zero params stays zero") {
  GruParams p = zero_gru(2, 3);
  Tape t;
  const Tensor& got = t.value(gru_sequence(t, t.leaf(Tensor::zeros({5, 2, 2})), bind(t, p)));
  for (double v : got.v) CHECK(v == 0.0);
}

TEST_CASE("gru_sequence matches step-by-step oracle unrolling") {
  Rng rng(57);
  const int P = 5, N = 2, C = 3, H = 4;
  GruParams p = init_gru_params(C, H, rng);
  Tensor xs = random_tensor({P, N, C}, rng);

  Tape t;
  const Tensor& got = t.value(gru_sequence(t, t.leaf(xs), bind(t, p)));

  for (int s = 0; s < N; ++s) {
    oracle::Vec h(static_cast<size_t>(H), 0.0);
    for (int step = 0; step < P; ++step) {
      oracle::Vec x(static_cast<size_t>(C));
      for (int j = 0; j < C; ++j) x[static_cast<size_t>(j)] = xs.at(step, s, j);
      h = gru_ref(x, h, p);
      for (int j = 0; j < H; ++j)
        CHECK(got.at(step, s, j) == Catch::Approx(h[static_cast<size_t>(j)]).margin(1e-12));
    }
  }
}

TEST_CASE("hidden state stays in (-1,1) when the previous state does") {
  Rng rng(59);
  GruParams p = init_gru_params(3, 6, rng);
  Tensor h = random_tensor({6}, rng, 0.3);
  for (double& v : h.v) v = std::max(-0.99, std::min(0.99, v));
  for (int step = 0; step < 50; ++step) {
    Tape t;
    Tensor x = random_tensor({3}, rng, 2.0);
    h = t.value(gru_cell(t, t.leaf(x), t.leaf(h), bind(t, p)));
    for (double v : h.v) {
      CHECK(v > -1.0);
      CHECK(v < 1.0);
    }
  }
}

TEST_CASE("station permutation permutes outputs identically") {
  Rng rng(61);
  const int P = 4, N = 5, C = 3, H = 4;
  GruParams p = init_gru_params(C, H, rng);
  Tensor xs = random_tensor({P, N, C}, rng);
  Tensor xp = xs;
  std::vector<int> perm = {3, 0, 4, 1, 2};
  for (int step = 0; step < P; ++step)
    for (int s = 0; s < N; ++s)
      for (int j = 0; j < C; ++j) xp.at(step, s, j) = xs.at(step, perm[static_cast<size_t>(s)], j);

  Tape ta, tb;
  const Tensor& ya = ta.value(gru_sequence(ta, ta.leaf(xs), bind(ta, p)));
  const Tensor& yb = tb.value(gru_sequence(tb, tb.leaf(xp), bind(tb, p)));
  for (int step = 0; step < P; ++step)
    for (int s = 0; s < N; ++s)
      for (int j = 0; j < H; ++j)
        CHECK(yb.at(step, s, j) == ya.at(step, perm[static_cast<size_t>(s)], j));
}

TEST_CASE("backpropagation through a 5-step unroll passes grad_check") {
  Rng rng(63);
  const int P = 5, N = 2, C = 2, H = 3;
  GruParams p = init_gru_params(C, H, rng);
  Tensor xs = random_tensor({P, N, C}, rng);

  // every parameter tensor, plus the input
  struct Target {
    const char* name;
    const Tensor* tensor;
  };
  std::vector<Target> targets = {
      {"W_z", &p.W_z}, {"W_r", &p.W_r}, {"W_h", &p.W_h},
      {"U_z", &p.U_z}, {"U_r", &p.U_r}, {"U_h", &p.U_h},
      {"b_z", &p.b_z}, {"b_r", &p.b_r}, {"b_h", &p.b_h},
      {"x", &xs},
  };
  for (const auto& target : targets) {
    auto f = [&](Tape& t, Var v) {
      auto pick = [&](const Tensor& which) {
        return &which == target.tensor ? v : t.constant(which);
      };
      GruVars gv{pick(p.W_z), pick(p.W_r), pick(p.W_h), pick(p.U_z), pick(p.U_r),
                 pick(p.U_h), pick(p.b_z), pick(p.b_r), pick(p.b_h)};
      Var y = gru_sequence(t, pick(xs), gv);
      return mean_all(mul(y, y));
    };
    GradCheckReport rep = grad_check(f, *target.tensor, 1e-5, 1e-4);
    INFO(target.name << ": worst=" << rep.worst_rel << " coord=" << rep.worst_coord);
    CHECK(rep.pass);
  }
}

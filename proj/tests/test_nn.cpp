#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "hep/error.hpp"
#include "hep/nn/gradcheck.hpp"
#include "hep/nn/graph.hpp"
#include "hep/nn/layers.hpp"
#include "hep/nn/param.hpp"
#include "test_util.hpp"

using namespace hep;
using namespace hep::nn;
using hep::testing::random_vec;

namespace {

template <typename T>
Tensor<T> random_tensor(Rng& rng, std::vector<int> shape) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data) v = static_cast<T>(rng.uniform(-1.0, 1.0));
  return t;
}

/// rho(g) applied to every row of an [N, C] tensor.
template <typename T>
Tensor<T> act_rows(const RepSpec& rep, int m, const Tensor<T>& x) {
  Tensor<T> y = x;
  const int n = x.dim(0), c = x.dim(1);
  for (int r = 0; r < n; ++r) apply_rep_strided<T>(rep, m, x.data.data() + r * c, y.data.data() + r * c, 1);
  return y;
}

/// Group action on a [C, n, n, n] grid, rotating about the grid center.
template <typename T>
Tensor<T> act_grid(const RepSpec& rep, int m, const Tensor<T>& x) {
  VoxelGrid grid(VoxelGridSpec::cube(1.0, x.dim(1)), rep);
  std::copy(x.data.begin(), x.data.end(), grid.data().begin());
  const VoxelGrid out = act_voxelmap(GroupElement::rotation(m, rep.u), grid);
  Tensor<T> y(x.shape);
  std::copy(out.data().begin(), out.data().end(), y.data.begin());
  return y;
}

template <typename T>
double max_diff(const Tensor<T>& a, const Tensor<T>& b) {
  REQUIRE(a.size() == b.size());
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(double(a.data[i]) - double(b.data[i])));
  return d;
}

}  // namespace

TEST_CASE("backward basics") {
  Graph<double> g;
  const Var x = g.leaf(Tensor<double>({1}, {3.0}));
  const Var y = g.sum_squares(x);
  g.backward(y);
  CHECK(g.grad(x).data[0] == 6.0);

  Graph<double> h;
  const Var v = h.leaf(Tensor<double>({2}, {1.0, 2.0}));
  CHECK_THROWS_AS(h.backward(v), InvalidArgument);
}

TEST_CASE("EqLinear") {
  Rng rng(1);
  SUBCASE("zero input gives the bias") {
    ParamStore store;
    EqLinear lin(store, "l", RepSpec::trivial(3), RepSpec::trivial(2), true, rng);
    lin.bias()->value = {0.5, -1.5};
    Graph<double> g;
    const Var y = lin.forward(g, g.constant(Tensor<double>({1, 3})));
    CHECK(g.value(y).data == std::vector<double>{0.5, -1.5});
  }
  SUBCASE("trivial reps give a plain linear map") {
    ParamStore store;
    EqLinear lin(store, "l", RepSpec::trivial(3), RepSpec::trivial(2), true, rng);
    CHECK(project(lin.weight()->tying, lin.weight()->shape, lin.weight()->value) == lin.weight()->value);
    Graph<double> g;
    const Tensor<double> x({1, 3}, {1.0, 2.0, 3.0});
    const Var y = lin.forward(g, g.constant(x));
    const auto& w = lin.weight()->value;
    for (int o = 0; o < 2; ++o)
      CHECK(g.value(y).data[o] == doctest::Approx(w[o * 3] + 2 * w[o * 3 + 1] + 3 * w[o * 3 + 2]));
  }
  SUBCASE("exhaustive C_4 equivariance") {
    const RepSpec in{4, 2, 2, 2}, out{4, 1, 3, 2};
    ParamStore store;
    EqLinear lin(store, "l", in, out, true, rng);
    lin.bias()->value = std::vector<double>(out.dim(), 0.3);
    const auto x = random_tensor<float>(rng, {5, in.dim()});
    double err = 0.0;
    for (int m = 0; m < 4; ++m) {
      Graph<float> g;
      const Var a = lin.forward(g, g.constant(act_rows(in, m, x)));
      const Var b = lin.forward(g, g.constant(x));
      err = std::max(err, max_diff(g.value(a), act_rows(out, m, g.value(b))));
    }
    CHECK(err <= 1e-6);

    // Untied layers are not equivariant.
    ParamStore loose;
    EqLinear free(loose, "l", in, out, false, rng);
    Graph<double> g;
    const auto xd = random_tensor<double>(rng, {1, in.dim()});
    const Var a = free.forward(g, g.constant(act_rows(in, 1, xd)));
    const Var b = free.forward(g, g.constant(xd));
    CHECK(max_diff(g.value(a), act_rows(out, 1, g.value(b))) > 1e-3);
  }
  SUBCASE("u = 8") {
    const RepSpec in{8, 1, 1, 1}, out{8, 0, 2, 1};
    ParamStore store;
    EqLinear lin(store, "l", in, out, true, rng);
    const auto x = random_tensor<double>(rng, {3, in.dim()});
    for (int m = 0; m < 8; ++m) {
      Graph<double> g;
      const Var a = lin.forward(g, g.constant(act_rows(in, m, x)));
      const Var b = lin.forward(g, g.constant(x));
      CHECK(max_diff(g.value(a), act_rows(out, m, g.value(b))) <= 1e-12);
    }
  }
  SUBCASE("type mismatch") {
    ParamStore store;
    EqLinear lin(store, "l", RepSpec::regular(1), RepSpec::regular(1), true, rng);
    Graph<double> g;
    CHECK_THROWS_AS(lin.forward(g, g.constant(Tensor<double>({1, 5}))), InvalidArgument);
  }
}

TEST_CASE("tying projections") {
  Rng rng(2);
  const RepSpec in{4, 1, 1, 2}, out{4, 2, 1, 1};
  for (TyingKind kind : {TyingKind::Linear, TyingKind::Bias, TyingKind::Conv}) {
    std::vector<int> shape;
    if (kind == TyingKind::Linear) shape = {out.dim(), in.dim()};
    if (kind == TyingKind::Bias) shape = {out.dim()};
    if (kind == TyingKind::Conv) shape = {out.dim(), in.dim(), 3, 3, 3};
    const Tying t{kind, in, out};
    std::vector<double> raw(Tensor<double>::numel(shape));
    for (auto& v : raw) v = rng.normal();
    const auto once = project(t, shape, raw);
    const auto twice = project(t, shape, once);
    double d = 0.0;
    for (std::size_t i = 0; i < raw.size(); ++i) d = std::max(d, std::abs(once[i] - twice[i]));
    CHECK(d <= 1e-12);
  }

  // Commutation with dense rep matrices: rho_out W == W rho_in.
  const Tying t{TyingKind::Linear, in, out};
  std::vector<double> raw(static_cast<std::size_t>(out.dim() * in.dim()));
  for (auto& v : raw) v = rng.normal();
  const auto eff = project(t, {out.dim(), in.dim()}, raw);
  const Eigen::MatrixXd w = Eigen::Map<const Eigen::Matrix<double, -1, -1, Eigen::RowMajor>>(eff.data(), out.dim(), in.dim());
  for (int m = 0; m < 4; ++m) {
    const GroupElement g = GroupElement::rotation(m);
    CHECK((rep_matrix(out, g) * w - w * rep_matrix(in, g)).cwiseAbs().maxCoeff() <= 1e-12);
  }
  // Regular-to-rho1 bias is forced to zero, trivial bias survives.
  const auto b = project(Tying{TyingKind::Bias, in, out}, {out.dim()}, std::vector<double>(out.dim(), 1.0));
  CHECK(b[0] == 1.0);
  CHECK(b[2] == 0.0);
  CHECK(b[3] == 0.0);
}

TEST_CASE("EqConv3d") {
  Rng rng(3);
  SUBCASE("1x1x1 kernel is a per-voxel linear map") {
    const RepSpec in{4, 1, 0, 1}, out{4, 0, 0, 2};
    ParamStore store;
    EqConv3d conv(store, "c", in, out, 1, Padding::Zero, true, rng);
    const auto x = random_tensor<double>(rng, {in.dim(), 4, 4, 4});
    Graph<double> g;
    const Var y = conv.forward(g, g.constant(x));
    const auto w = project(conv.weight()->tying, conv.weight()->shape, conv.weight()->value);
    double err = 0.0;
    for (int v = 0; v < 64; ++v)
      for (int o = 0; o < out.dim(); ++o) {
        double s = 0.0;
        for (int i = 0; i < in.dim(); ++i) s += w[o * in.dim() + i] * x.data[i * 64 + v];
        err = std::max(err, std::abs(s - g.value(y).data[o * 64 + v]));
      }
    CHECK(err <= 1e-12);
  }
  SUBCASE("delta impulse reproduces the kernel") {
    ParamStore store;
    EqConv3d conv(store, "c", RepSpec::trivial(1), RepSpec::trivial(1), 3, Padding::Zero, false, rng);
    Tensor<double> x({1, 5, 5, 5});
    x.data[(2 * 5 + 2) * 5 + 2] = 1.0;
    Graph<double> g;
    const Var y = conv.forward(g, g.constant(x));
    const auto& k = conv.weight()->value;
    // out(v) = sum_d K(d) in(v + d): the impulse at c shows K(d) at c - d.
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int tap = ((dz + 1) * 3 + (dy + 1)) * 3 + (dx + 1);
          const int v = ((2 - dz) * 5 + (2 - dy)) * 5 + (2 - dx);
          CHECK(g.value(y).data[v] == k[tap]);
        }
  }
  SUBCASE("exhaustive C_4 equivariance with circular padding") {
    const RepSpec in{4, 1, 1, 1}, out{4, 1, 0, 2};
    ParamStore store;
    EqConv3d conv(store, "c", in, out, 3, Padding::Circular, true, rng);
    const auto x = random_tensor<float>(rng, {in.dim(), 8, 8, 8});
    double err = 0.0;
    for (int m = 0; m < 4; ++m) {
      Graph<float> g;
      const Var a = conv.forward(g, g.constant(act_grid(in, m, x)));
      const Var b = conv.forward(g, g.constant(x));
      err = std::max(err, max_diff(g.value(a), act_grid(out, m, g.value(b))));
    }
    CHECK(err <= 1e-5);
  }
  SUBCASE("zero padding is still exact for rotations about the grid center") {
    const RepSpec in = RepSpec::regular(1), out = RepSpec::regular(1);
    ParamStore store;
    EqConv3d conv(store, "c", in, out, 3, Padding::Zero, true, rng);
    const auto x = random_tensor<double>(rng, {4, 6, 6, 6});
    Graph<double> g;
    const Var a = conv.forward(g, g.constant(act_grid(in, 1, x)));
    const Var b = conv.forward(g, g.constant(x));
    CHECK(max_diff(g.value(a), act_grid(out, 1, g.value(b))) <= 1e-12);
  }
  SUBCASE("rejections") {
    ParamStore store;
    CHECK_THROWS_AS(EqConv3d(store, "c", RepSpec::regular(1), RepSpec::regular(1), 2, Padding::Zero, true, rng),
                    InvalidArgument);
    CHECK_THROWS_AS(EqConv3d(store, "d", RepSpec::regular(1, 8), RepSpec::regular(1, 8), 3, Padding::Zero, true, rng),
                    InexactTransform);
  }
}

TEST_CASE("nonlinearity typing") {
  Graph<double> g;
  const Var x = g.constant(Tensor<double>({1, 2}));
  CHECK_THROWS_AS(typed_silu(g, x, RepSpec{4, 0, 1, 0}), InvalidArgument);
  const Var y = typed_silu(g, x, RepSpec::trivial(2));
  CHECK(g.value(y).data[0] == 0.0);
  Rng rng(4);
  ParamStore store;
  CHECK_THROWS_AS(EqMLP(store, "m", {RepSpec::regular(1), RepSpec{4, 0, 1, 0}, RepSpec::regular(1)}, true, rng),
                  InvalidArgument);

  // A tied MLP with SiLU stays equivariant.
  const RepSpec in{4, 2, 2, 1}, out{4, 1, 2, 1};
  EqMLP mlp(store, "n", {in, RepSpec::regular(3), RepSpec{4, 2, 0, 2}, out}, true, rng);
  const auto xs = random_tensor<float>(rng, {4, in.dim()});
  double err = 0.0;
  for (int m = 0; m < 4; ++m) {
    Graph<float> h;
    const Var a = mlp.forward(h, h.constant(act_rows(in, m, xs)));
    const Var b = mlp.forward(h, h.constant(xs));
    err = std::max(err, max_diff(h.value(a), act_rows(out, m, h.value(b))));
  }
  CHECK(err <= 1e-6);
}

TEST_CASE("EqPointNet") {
  Rng rng(5);
  ParamStore store;
  PointNetConfig cfg;
  cfg.out = {4, 2, 1, 2};
  cfg.scale = 0.05;
  EqPointNet net(store, "pn", cfg, rng);

  VoxelCell empty;
  CHECK(net(Vec3::Zero(), empty) == std::vector<double>(cfg.out.dim(), 0.0));

  auto make_cell = [&](int n, const Vec3& center) {
    VoxelCell c;
    for (int i = 0; i < n; ++i) {
      c.positions.push_back(center + random_vec(rng, -0.025, 0.025));
      for (int k = 0; k < 3; ++k) c.features.push_back(rng.uniform());
    }
    return c;
  };

  const Vec3 center(0.1, -0.2, 0.3);
  VoxelCell c = make_cell(4, center);
  VoxelCell dup = c;
  dup.positions.push_back(c.positions[1]);
  dup.features.insert(dup.features.end(), c.features.begin() + 3, c.features.begin() + 6);
  CHECK(net(center, dup) == net(center, c));

  double err = 0.0, terr = 0.0;
  for (int t = 0; t < 20; ++t) {
    const VoxelCell cell = make_cell(1 + t % 6, center);
    const auto base = net(center, cell);
    for (int m = 0; m < 4; ++m) {
      // rotate the set about its voxel center
      VoxelCell rot = cell;
      const GroupElement g = GroupElement::rotation(m);
      for (auto& p : rot.positions) p = center + rotate_vector(g, p - center);
      auto expect = base;
      apply_rep<double>(cfg.out, m, expect);
      const auto got = net(center, rot);
      for (std::size_t i = 0; i < got.size(); ++i) err = std::max(err, std::abs(got[i] - expect[i]));
    }
    VoxelCell moved = cell;
    const Vec3 d(0.5, -0.25, 1.0);
    for (auto& p : moved.positions) p += d;
    const auto tr = net(center + d, moved);
    for (std::size_t i = 0; i < tr.size(); ++i) terr = std::max(terr, std::abs(tr[i] - base[i]));
  }
  CHECK(err <= 1e-6);
  CHECK(terr <= 1e-12);
}

TEST_CASE("EqUNet") {
  Rng rng(6);
  UNetConfig cfg;
  cfg.in = {4, 1, 0, 1};
  cfg.widths = {1, 2, 2};
  ParamStore store;
  EqUNet net(store, "u", cfg, rng);

  SUBCASE("zero input gives spatially constant logits") {
    // nonzero biases so the constant is not trivially zero
    for (auto& p : store.params())
      if (p.name.ends_with(".b"))
        for (auto& v : p.value) v = rng.normal();
    Graph<double> g;
    const Var y = net.forward(g, g.constant(Tensor<double>({5, 8, 8, 8})));
    const auto& d = g.value(y).data;
    double spread = 0.0;
    for (double v : d) spread = std::max(spread, std::abs(v - d[0]));
    CHECK(spread <= 1e-12);
  }
  SUBCASE("16^3 exhaustive C_4 equivariance") {
    const auto x = random_tensor<float>(rng, {5, 16, 16, 16});
    double err = 0.0;
    for (int m = 0; m < 4; ++m) {
      Graph<float> g;
      const Var a = net.forward(g, g.constant(act_grid(cfg.in, m, x)));
      const Var b = net.forward(g, g.constant(x));
      err = std::max(err, max_diff(g.value(a), act_grid(RepSpec::trivial(1), m, g.value(b))));
    }
    CHECK(err <= 1e-4);
  }
  SUBCASE("depth 1 equals the explicit layer composition") {
    UNetConfig c1 = cfg;
    c1.widths = {1, 2};
    ParamStore s1;
    EqUNet n1(s1, "v", c1, rng);
    const auto x = random_tensor<double>(rng, {5, 4, 4, 4});
    Graph<double> g;
    const Var y = n1.forward(g, g.constant(x));
    auto conv = [&](const std::string& name, Var in) {
      return g.conv3d(in, g.param(*s1.find(name + ".w")), g.param(*s1.find(name + ".b")), c1.padding);
    };
    const Var xin = g.constant(x);
    const Var e0 = g.silu(conv("v.enc0", xin));
    const Var e1 = g.silu(conv("v.enc1", g.avgpool2(e0)));
    const Var d0 = g.silu(conv("v.dec0", g.concat0({g.upsample2(e1), e0})));
    const Var ref = conv("v.head", d0);
    CHECK(max_diff(g.value(y), g.value(ref)) == 0.0);
  }
  SUBCASE("indivisible dims") {
    Graph<double> g;
    CHECK_THROWS_AS(net.forward(g, g.constant(Tensor<double>({5, 6, 6, 6}))), InvalidArgument);
  }
}

TEST_CASE("gradients match finite differences") {
  Rng rng(7);
  ParamStore store;
  const RepSpec in{4, 2, 1, 1};
  EqMLP mlp(store, "mlp", {in, RepSpec::regular(2), RepSpec{4, 1, 1, 0}}, true, rng);
  PointNetConfig pc;
  pc.hidden_reg = {2};
  pc.out = {4, 1, 0, 1};
  pc.scale = 0.5;
  EqPointNet pn(store, "pn", pc, rng);
  UNetConfig uc;
  uc.in = pc.out;
  uc.widths = {1, 1};
  EqUNet unet(store, "u", uc, rng);
  for (auto& p : store.params())
    if (p.name.ends_with(".b"))
      for (auto& v : p.value) v = 0.1 * rng.normal();

  const auto x = random_tensor<double>(rng, {3, in.dim()});
  const auto target = random_tensor<double>(rng, {3, 3});
  PointCloud cloud = hep::testing::random_cloud(rng, 60, -0.45, 0.45);
  const VoxelGridSpec spec = VoxelGridSpec::cube(0.25, 4);
  const PointPartition part = partition(cloud, spec);

  auto loss = [&](bool with_grad) {
    Graph<double> g;
    const Var a = g.mse(mlp.forward(g, g.constant(x)), target);
    const Var logits = unet.forward(g, pn.encode_grid(g, part));
    const Var b = g.cross_entropy(logits, 17);
    const Var l = g.sum({a, b});
    if (with_grad) {
      g.backward(l);
      g.accumulate_param_grads();
    }
    return g.value(l).data[0];
  };
  const GradCheckResult r = grad_check(store, loss, rng, {});
  INFO("worst " << r.worst << " rel " << r.max_rel_error);
  CHECK(r.checked == 200);
  CHECK(r.ok());

  SUBCASE("tied gradient is the group average of the untied one") {
    // Same effective weight through an untied copy: its gradient G, averaged
    // over the group with dense rep matrices, must equal the tied gradient.
    Parameter& w = *mlp.layers()[0].weight();
    const RepSpec out = mlp.layers()[0].out();
    store.zero_grad();
    loss(true);
    const auto tied_grad = w.grad;

    const auto eff = project(w.tying, w.shape, w.value);
    const Tying saved = w.tying;
    const auto saved_value = w.value;
    w.tying = Tying{};
    w.value = eff;
    store.zero_grad();
    loss(true);
    const Eigen::MatrixXd gmat =
        Eigen::Map<const Eigen::Matrix<double, -1, -1, Eigen::RowMajor>>(w.grad.data(), out.dim(), in.dim());
    Eigen::MatrixXd avg = Eigen::MatrixXd::Zero(out.dim(), in.dim());
    for (int m = 0; m < 4; ++m) {
      const GroupElement g = GroupElement::rotation(m);
      avg += rep_matrix(out, g) * gmat * rep_matrix(in, g).transpose();
    }
    avg /= 4.0;
    double err = 0.0;
    for (int o = 0; o < out.dim(); ++o)
      for (int i = 0; i < in.dim(); ++i) err = std::max(err, std::abs(avg(o, i) - tied_grad[o * in.dim() + i]));
    CHECK(err <= 1e-12);
    w.tying = saved;
    w.value = saved_value;
  }
}

TEST_CASE("AdamW") {
  ParamStore store;
  Parameter& p = store.add_zeros("p", {1}, Tying{});
  p.value = {1.0};
  AdamState st;

  AdamWConfig zero{0.1, 0.0};
  adamw_step(store, st, zero);
  CHECK(p.value[0] == 1.0);

  // f(p) = p^2 at p = 1: g = 2, m_hat = 2, v_hat = 4, step = lr * 2 / (2 + eps)
  AdamState st2;
  p.grad = {2.0};
  AdamWConfig cfg{0.1, 0.0};
  adamw_step(store, st2, cfg);
  CHECK(p.value[0] == doctest::Approx(1.0 - 0.1 * 2.0 / (2.0 + 1e-8)).epsilon(1e-15));

  AdamState st3;
  p.value = {1.0};
  p.grad = {0.0};
  adamw_step(store, st3, AdamWConfig{0.1, 0.5});
  CHECK(p.value[0] == doctest::Approx(0.95).epsilon(1e-15));

  store.add_zeros("q", {2}, Tying{});
  CHECK_THROWS_AS(adamw_step(store, st3, cfg), InvalidArgument);
}

TEST_CASE("determinism") {
  auto run = [] {
    Rng rng(8);
    ParamStore store;
    UNetConfig cfg;
    cfg.widths = {1, 1};
    cfg.in = RepSpec::regular(1);
    EqUNet net(store, "u", cfg, rng);
    const auto x = random_tensor<float>(rng, {4, 8, 8, 8});
    Graph<float> g;
    const Var l = g.cross_entropy(net.forward(g, g.constant(x)), 3);
    g.backward(l);
    g.accumulate_param_grads();
    std::vector<double> out{g.value(l).data[0]};
    for (const auto& p : store.params()) out.insert(out.end(), p.grad.begin(), p.grad.end());
    return out;
  };
  CHECK(run() == run());
}

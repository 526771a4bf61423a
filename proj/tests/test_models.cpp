#include "fd/losses.hpp"
#include "fd/models.hpp"
#include "fd/optim.hpp"

#include "gradcheck.hpp"

#include <doctest.h>

#include <map>

using namespace fd;
using fd::test::numeric_gradient;
using fd::test::random_map;
using fd::test::random_matrix;
using fd::test::relative_error;

namespace {

template <typename Net>
std::map<std::string, Param<double>*> by_name(Net& net) {
  std::map<std::string, Param<double>*> out;
  for (auto* p : net.params()) out[p->name] = p;
  return out;
}

void check_layer_gradients(Layer<double>& layer, FeatureMap<double> x, std::mt19937_64& rng) {
  const FeatureMap<double> probe = layer.forward(x, true);
  const auto w = random_matrix(probe.channels(), probe.data.cols(), rng);
  auto loss = [&] { return (layer.forward(x, true).data.array() * w.array()).sum(); };
  ParamList<double> params;
  layer.collect(params);
  for (auto* p : params) p->zero_grad();
  layer.forward(x, true);
  FeatureMap<double> g = probe;
  g.data = w;
  const auto dx = layer.backward(g).data;
  CHECK(relative_error(dx, numeric_gradient(loss, x.data)) <= 1e-4);
  for (auto* p : params) {
    if (!p->trainable) continue;
    const Matrix<double> analytic = p->grad;
    CAPTURE(p->name);
    CHECK(relative_error(analytic, numeric_gradient(loss, p->value)) <= 1e-4);
  }
}

}  // namespace

TEST_CASE("layer gradients match finite differences") {
  std::mt19937_64 rng(21);
  Rng init(1);
  SUBCASE("strided padded conv") {
    Conv2d<double> conv("c", 3, 4, 3, 2, 1, true, init);
    check_layer_gradients(conv, random_map(2, 3, 5, 4, rng), rng);
  }
  SUBCASE("pointwise conv") {
    Conv2d<double> conv("c", 3, 2, 1, 1, 0, false, init);
    check_layer_gradients(conv, random_map(2, 3, 3, 3, rng), rng);
  }
  SUBCASE("batch norm") {
    BatchNorm2d<double> bn("bn", 3);
    check_layer_gradients(bn, random_map(2, 3, 3, 2, rng), rng);
  }
  SUBCASE("max pool") {
    MaxPool2d<double> pool(3, 2, 1);
    check_layer_gradients(pool, random_map(2, 2, 5, 6, rng), rng);
  }
  SUBCASE("bottleneck residual") {
    auto body = std::make_unique<Sequential<double>>();
    body->add(conv_bn<double>("a", 3, 2, 1, 1, 0, true, init));
    body->add(conv_bn<double>("b", 2, 2, 3, 2, 1, true, init));
    body->add(conv_bn<double>("c", 2, 4, 1, 1, 0, false, init));
    Residual<double> block(std::move(body), conv_bn<double>("d", 3, 4, 1, 2, 0, false, init));
    check_layer_gradients(block, random_map(2, 3, 4, 4, rng), rng);
  }
  SUBCASE("fire") {
    Fire<double> fire("f", 3, 2, 2, init);
    check_layer_gradients(fire, random_map(2, 3, 3, 3, rng), rng);
  }
}

TEST_CASE("backbones honour the stride-16 contract") {
  for (const std::string kind :
       {"reference", "resnet18", "resnet34", "resnet50", "resnet101", "squeezenet"}) {
    BackboneSpec spec;
    spec.kind = kind;
    spec.base_width = 4;
    spec.widths = {4, 4, 4, 6};
    Rng rng(2);
    auto net = make_backbone<float>(spec, "b.", rng);
    for (auto [h, w] : {std::pair<Index, Index>{64, 32}, {50, 20}, {33, 17}}) {
      FeatureMap<float> x(1, 3, h, w);
      x.data.setRandom();
      const auto f = net->forward(x, false);
      CAPTURE(kind);
      CHECK(f.height == backbone_extent(h));
      CHECK(f.width == backbone_extent(w));
      CHECK(f.channels() == spec.out_channels());
    }
  }
}

namespace {

StudentSpec tiny_student() {
  StudentSpec s;
  s.base.backbone.widths = {3, 4, 4, 5};
  s.base.embedding_dim = 6;
  s.base.num_classes = 4;
  s.base.pool_m = 2;
  s.branches = {{"Holistic", 5, true}, {"Up1", 3, false}, {"Dn2", 3, false}};
  s.feat_sel_channels = 4;
  s.fmfb_m = 2;
  return s;
}

}  // namespace

TEST_CASE("student network gradient matches finite differences end to end") {
  std::mt19937_64 rng(8);
  StudentModel<double> net(tiny_student(), 3);
  auto x = random_map(4, 3, 48, 32, rng);
  const std::vector<int> labels = {0, 2, 3, 1};
  std::vector<Matrix<double>> targets;
  for (const auto& b : net.spec().branches) targets.push_back(random_matrix(b.target_dim, 4, rng));
  const std::vector<std::uint8_t> keep = {1, 0, 1, 1};
  const LossWeights w{4.0, 2.0};
  const Index K = 3;

  auto objective = [&](bool backprop) {
    auto o = net.forward(x, true);
    const auto cls = cls_loss<double>(o.z, labels);
    std::vector<double> attr, metric;
    std::vector<Matrix<double>> ga, gm;
    for (Index k = 0; k < K; ++k) {
      const auto a = regression_loss<double>(targets[k], o.attr[k], keep);
      const auto m = regression_loss<double>(targets[k], o.metric[k], keep);
      attr.push_back(a.value);
      metric.push_back(m.value);
      ga.push_back(w.alpha / K * a.grad);
      gm.push_back(w.beta / K * m.grad);
    }
    const auto total = total_loss<double>(cls.value, attr, metric, w, K);
    if (backprop) net.backward(cls.grad, ga, gm);
    return total.total;
  };

  auto params = net.params();
  zero_grad(params);
  objective(true);
  int checked = 0;
  for (auto* p : params) {
    if (!p->trainable) continue;
    const Matrix<double> analytic = p->grad;
    // Running stats drift with every forward; they do not enter training-mode outputs.
    const auto numeric = numeric_gradient([&] { return objective(false); }, p->value);
    CAPTURE(p->name);
    CAPTURE(relative_error(analytic, numeric));
    CHECK(fd::test::gradients_agree(analytic, numeric));
    ++checked;
  }
  CHECK(checked > 30);
}

TEST_CASE("zero-weight student emits the batch-norm shifts") {
  StudentModel<double> net(tiny_student(), 4);
  std::mt19937_64 rng(9);
  auto params = by_name(net);
  for (auto& [name, p] : params) {
    if (name.ends_with(".bn.bias")) p->value = random_matrix(p->value.rows(), 1, rng);
    else if (p->decay) p->value.setZero();
  }
  const auto x = random_map(3, 3, 32, 16, rng);
  for (bool training : {true, false}) {
    const auto o = net.forward(x, training);
    for (Index i = 0; i < 3; ++i) {
      CHECK(o.r.col(i).isApprox(params["embedding.bn.bias"]->value.col(0)));
      for (std::size_t k = 0; k < net.branches(); ++k) {
        const auto& v = net.spec().branches[k].view;
        CHECK(o.attr[k].col(i).isApprox(params["fmfb." + v + ".embedding.bn.bias"]->value.col(0)));
        CHECK(o.metric[k].col(i).isApprox(params["rfb." + v + ".mapping.bn.bias"]->value.col(0)));
      }
    }
  }
}

TEST_CASE("holistic RFB maps the representation directly") {
  StudentModel<double> net(tiny_student(), 5);
  const auto names = by_name(net);
  CHECK(names.count("rfb.Holistic.featsel.fc.weight") == 0);
  CHECK(names.at("rfb.Holistic.mapping.fc.weight")->value.cols() == 6);
  CHECK(names.count("rfb.Up1.featsel.fc.weight") == 1);
  CHECK(names.at("rfb.Up1.mapping.fc.weight")->value.cols() == 4);
}

TEST_CASE("branch output dims follow the targets") {
  StudentModel<float> net(tiny_student(), 6);
  FeatureMap<float> x(2, 3, 64, 32);
  x.data.setRandom();
  const auto o = net.forward(x, true);
  CHECK(o.f.height == 4);
  CHECK(o.f.width == 2);
  CHECK(o.r.rows() == 6);
  CHECK(o.z.rows() == 4);
  REQUIRE(o.attr.size() == 3);
  CHECK(o.attr[0].rows() == 5);
  CHECK(o.attr[1].rows() == 3);
  CHECK(o.metric[2].rows() == 3);
  const auto only_cls = net.forward(x, true, {false, false});
  CHECK(only_cls.attr.empty());
  CHECK(only_cls.metric.empty());
}

#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "../support.hpp"
#include "projsynth/error.hpp"
#include "projsynth/generators.hpp"

using namespace projsynth;
using testsupport::random_tensor;

namespace {

bool all_finite(const Tensor<float>& t) {
  return std::all_of(t.data().begin(), t.data().end(), [](float v) { return std::isfinite(v); });
}

ResNetGenConfig small_resnet(int blocks) {
  ResNetGenConfig c;
  c.n_residual_blocks = blocks;
  c.stem_channels = 4;
  c.down1_channels = 6;
  c.down2_channels = 8;
  return c;
}

}  // namespace

TEST_SUITE("generators") {
  TEST_CASE("unet shape contract and channel arithmetic") {
    UNetConfig c;
    c.base_channels = 16;
    auto net = build_unet<float>(c, 1);
    const auto y = net->forward(random_tensor<float>({1, 1, 64, 64}, 2), false);
    CHECK(y.shape() == Shape{1, 1, 64, 64});
    for (int i = 0; i < 4; ++i) CHECK(net->level_channels(i) == 16 << i);
    CHECK(net->parameters().at("enc2.weight").dim(0) == 64);
    CHECK(net->active_dropout_levels() == 3);
  }

  TEST_CASE("unet inference is deterministic, training applies dropout") {
    UNetConfig c;
    c.base_channels = 4;
    c.depth = 3;
    auto net = build_unet<float>(c, 3);
    const auto x = random_tensor<float>({1, 1, 16, 16}, 4);
    const auto a = net->forward(x, false), b = net->forward(x, false);
    CHECK(std::ranges::equal(a.data(), b.data()));
    const auto t1 = net->forward(x, true), t2 = net->forward(x, true);
    CHECK(!std::ranges::equal(t1.data(), t2.data()));
    CHECK(net->dropout_counter() == 2);
  }

  TEST_CASE("unet rejects indivisible resolutions") {
    auto net = build_unet<float>(UNetConfig{}, 0);
    CHECK_THROWS_AS(net->forward(Tensor<float>({1, 1, 60, 60}), false), DimensionError);
    UNetConfig bad;
    bad.dropout_levels = 5;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
  }

  TEST_CASE("resnet default reports nine residual blocks and keeps shape") {
    CHECK(ResNetGenConfig{}.n_residual_blocks == 9);
    auto net = build_resnet_generator<float>(small_resnet(9), 5);
    CHECK(net->num_residual_blocks() == 9);
    const auto y = net->forward(random_tensor<float>({1, 1, 128, 128}, 6), false);
    CHECK(y.shape() == Shape{1, 1, 128, 128});
    CHECK(all_finite(y));
  }

  TEST_CASE("resnet with zeroed second convolutions reduces to the resampling path") {
    auto deep = build_resnet_generator<float>(small_resnet(9), 7);
    auto shallow = build_resnet_generator<float>(small_resnet(1), 7);
    for (auto* net : {deep.get(), shallow.get()})
      for (int i = 0; i < net->num_residual_blocks(); ++i) {
        const auto prefix = ResNetGenerator<float>::residual_second_conv(i);
        for (auto& v : net->parameters().find(prefix + ".weight")->mutable_data()) v = 0.0f;
      }
    const auto x = random_tensor<float>({1, 1, 32, 32}, 8);
    const auto a = deep->forward(x, false), b = shallow->forward(x, false);
    CHECK(std::ranges::equal(a.data(), b.data()));
  }

  TEST_CASE("crn defaults and scale chain") {
    CHECK(CRNConfig{}.n_modules == 8);
    CHECK(CRNConfig{}.finest_h() == 512);
    CHECK(CRNConfig{}.finest_w() == 512);

    CRNConfig c;
    c.n_modules = 7;
    c.coarse_h = c.coarse_w = 1;
    c.widths = {16, 16, 12, 12, 8, 8, 4};
    auto net = build_crn<float>(c, 9);
    CHECK(net->num_modules() == 7);
    CHECK(net->output_channels() == 1);
    const auto y = net->forward(random_tensor<float>({1, 1, 64, 64}, 10), false);
    CHECK(y.shape() == Shape{1, 1, 64, 64});
    const auto& shapes = net->last_feature_shapes();
    REQUIRE(shapes.size() == 7);
    for (std::size_t m = 0; m < 7; ++m) {
      CHECK(shapes[m][2] == (std::size_t(1) << m));
      CHECK(shapes[m][3] == (std::size_t(1) << m));
    }
    CHECK_THROWS_AS(net->forward(Tensor<float>({1, 1, 32, 32}), false), ConfigError);
  }

  TEST_CASE("crn widths must not increase") {
    CRNConfig c;
    c.n_modules = 3;
    c.widths = {8, 16, 4};
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }

  TEST_CASE("fresh models map zero input to finite output") {
    UNetConfig u;
    u.base_channels = 4;
    CRNConfig c;
    c.n_modules = 5;
    c.widths = {16, 16, 8, 8, 4};
    std::vector<std::unique_ptr<Generator<float>>> nets;
    nets.push_back(build_generator<float>(u, 1));
    nets.push_back(build_generator<float>(small_resnet(2), 1));
    nets.push_back(build_generator<float>(c, 1));
    for (auto& n : nets) {
      const auto y = n->forward(Tensor<float>::zeros({1, 1, 64, 64}), false);
      CHECK(y.shape() == Shape{1, 1, 64, 64});
      CHECK(all_finite(y));
    }
  }

  TEST_CASE("same config and seed give identical parameters") {
    UNetConfig u;
    u.base_channels = 4;
    auto a = build_unet<float>(u, 42), b = build_unet<float>(u, 42), c = build_unet<float>(u, 43);
    auto ia = a->parameters().begin(), ib = b->parameters().begin(), ic = c->parameters().begin();
    bool any_diff = false;
    for (; ia != a->parameters().end(); ++ia, ++ib, ++ic) {
      CHECK(ia->first == ib->first);
      CHECK(std::ranges::equal(ia->second.data(), ib->second.data()));
      any_diff |= !std::ranges::equal(ia->second.data(), ic->second.data());
    }
    CHECK(any_diff);
  }

  TEST_CASE("every parameter is reachable from the output") {
    UNetConfig u;
    u.base_channels = 2;
    u.depth = 3;
    CRNConfig c;
    c.n_modules = 3;
    c.widths = {4, 4, 2};
    std::vector<std::unique_ptr<Generator<double>>> nets;
    nets.push_back(build_generator<double>(u, 1));
    nets.push_back(build_generator<double>(c, 1));
    auto r = small_resnet(2);
    nets.push_back(build_generator<double>(r, 1));
    for (auto& n : nets) {
      const auto x = random_tensor<double>({1, 1, 16, 16}, 2);
      testsupport::random_functional(n->forward(x, false), 3).backward();
      for (const auto& [name, p] : n->parameters()) {
        const auto g = p.grad();
        INFO(name);
        CHECK(std::any_of(g.begin(), g.end(), [](double v) { return v != 0.0; }));
      }
    }
  }

  TEST_CASE("synthesize tags the output and keeps resolution") {
    UNetConfig u;
    u.base_channels = 2;
    u.depth = 2;
    u.dropout_levels = 1;
    auto net = build_unet<float>(u, 0);
    const auto img = testsupport::random_image(16, 8, 1);
    const auto out = synthesize(*net, img);
    CHECK(out.modality == Modality::synth);
    CHECK(out.nu == 16);
    CHECK(out.nv == 8);
  }

  TEST_CASE("model config JSON") {
    for (auto arch : {Architecture::unet, Architecture::resnet, Architecture::crn}) {
      const auto j = to_json(default_model_config(arch));
      CHECK(architecture_of(model_config_from_json(j)) == arch);
      CHECK(to_json(model_config_from_json(j)) == j);
    }
    auto j = to_json(default_model_config(Architecture::unet));
    j["wings"] = 2;
    CHECK_THROWS_AS(model_config_from_json(j), ConfigError);
    try {
      architecture_from_string("foo");
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      const std::string m = e.what();
      CHECK(m.find("unet") != std::string::npos);
      CHECK(m.find("resnet") != std::string::npos);
      CHECK(m.find("crn") != std::string::npos);
    }
  }
}

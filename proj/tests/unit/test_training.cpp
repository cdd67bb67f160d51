#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "../support.hpp"
#include "projsynth/error.hpp"
#include "projsynth/training.hpp"

using namespace projsynth;
namespace fs = std::filesystem;

namespace {

// Scalar theta with loss theta^2 built from a 1x1 convolution of theta with itself.
Tensor<double> square(const Tensor<double>& theta) {
  const auto t = theta.reshape({1, 1, 1, 1});
  return sum(conv2d(t, t, Tensor<double>(), 1, 0));
}

std::vector<DatasetPair> toy_pairs(std::size_t n, std::size_t side) {
  std::vector<DatasetPair> pairs;
  for (std::size_t i = 0; i < n; ++i) {
    auto mr = testsupport::random_image(side, side, 100 + i);
    auto xr = mr;
    for (std::size_t k = 0; k < xr.data.size(); ++k) xr.data[k] = -xr.data[k] * xr.data[k];
    pairs.push_back(make_dataset_pair(mr, xr, "v" + std::to_string(i)));
  }
  return pairs;
}

UNetConfig toy_unet() {
  UNetConfig c;
  c.depth = 3;
  c.base_channels = 2;
  return c;
}

std::vector<float> flat_params(const Generator<float>& m) {
  std::vector<float> out;
  for (const auto& [name, p] : m.parameters()) out.insert(out.end(), p.data().begin(), p.data().end());
  return out;
}

}  // namespace

TEST_SUITE("training") {
  TEST_CASE("split sizes, disjointness and determinism") {
    const auto [tr, te] = split_indices(3200, 3000, 200, 9);
    CHECK(tr.size() == 3000);
    CHECK(te.size() == 200);
    std::set<std::size_t> a(tr.begin(), tr.end());
    for (auto i : te) CHECK(!a.count(i));
    CHECK(split_indices(3200, 3000, 200, 9) == std::pair{tr, te});
    CHECK(split_indices(3200, 3000, 200, 10).first != tr);
    CHECK_THROWS_AS(split_indices(10, 8, 3, 0), ParameterError);

    const std::vector<int> items{0, 1, 2, 3, 4, 5};
    const auto [x, y] = split_dataset(items, 4, 2, 1);
    CHECK(x.size() == 4);
    CHECK(y.size() == 2);
  }

  TEST_CASE("dataset pairs are scaled and dimension checked") {
    const auto p = make_dataset_pair(testsupport::random_image(8, 8, 1, 0, 9), testsupport::random_image(8, 8, 2, 3, 4),
                                     "a");
    CHECK(*std::min_element(p.mr.data.begin(), p.mr.data.end()) == -1.0f);
    CHECK(*std::max_element(p.xray.data.begin(), p.xray.data.end()) == 1.0f);
    CHECK_THROWS_AS(make_dataset_pair(testsupport::random_image(8, 8, 1), testsupport::random_image(8, 7, 2), "b"),
                    DimensionError);
  }

  TEST_CASE("first adam step has magnitude lr") {
    ParameterSet<double> ps;
    ps.add("theta", Tensor<double>({1}, 0.5, true));
    AdamState<double> st;
    // d(theta^2)/d theta at 0.5 is 1.
    square(ps.at("theta")).backward();
    adam_step(ps, st);
    CHECK(ps.at("theta").item() == doctest::Approx(0.5 - 0.004 / (1 + 1e-8)).epsilon(1e-14));
    CHECK(st.t == 1);
  }

  TEST_CASE("zero gradient leaves parameters unchanged") {
    ParameterSet<float> ps;
    ps.add("w", testsupport::random_tensor<float>({5}, 1, -1, 1, true));
    const std::vector<float> before(ps.at("w").data().begin(), ps.at("w").data().end());
    AdamState<float> st;
    adam_step(ps, st);
    CHECK(std::ranges::equal(ps.at("w").data(), before));
  }

  TEST_CASE("five steps on theta squared match a hand-rolled reference") {
    long double th = 1, m = 0, v = 0;
    std::vector<long double> ref;
    for (int t = 1; t <= 5; ++t) {
      const long double g = 2 * th;
      m = 0.9L * m + 0.1L * g;
      v = 0.999L * v + 0.001L * g * g;
      const long double mh = m / (1 - std::pow(0.9L, t)), vh = v / (1 - std::pow(0.999L, t));
      th -= 0.004L * mh / (std::sqrt(vh) + 1e-8L);
      ref.push_back(th);
    }
    ParameterSet<double> ps;
    ps.add("theta", Tensor<double>({1}, 1.0, true));
    AdamState<double> st;
    for (int t = 0; t < 5; ++t) {
      ps.zero_grad();
      square(ps.at("theta")).backward();
      adam_step(ps, st);
      CHECK(std::abs(ps.at("theta").item() - double(ref[std::size_t(t)])) < 1e-10);
    }
  }

  TEST_CASE("step size stays within twice the learning rate") {
    ParameterSet<double> ps;
    ps.add("w", testsupport::random_tensor<double>({1, 1, 4, 4}, 3, -1, 1, true));
    const auto target = testsupport::random_tensor<double>({1, 1, 4, 4}, 4);
    AdamState<double> st;
    for (int t = 0; t < 50; ++t) {
      const std::vector<double> before(ps.at("w").data().begin(), ps.at("w").data().end());
      ps.zero_grad();
      sum(abs(sub(ps.at("w"), target))).backward();
      adam_step(ps, st);
      for (std::size_t i = 0; i < before.size(); ++i) CHECK(std::abs(ps.at("w").data()[i] - before[i]) <= 2 * 0.004);
      for (const auto& vb : st.v)
        for (double x : vb) CHECK(x >= 0.0);
    }
  }

  TEST_CASE("non-finite gradients abort before any update") {
    ParameterSet<double> ps;
    ps.add("a", Tensor<double>({1}, 1.0, true));
    ps.add("b", Tensor<double>({1}, std::numeric_limits<double>::infinity(), true));
    square(ps.at("a")).backward();
    square(ps.at("b")).backward();
    AdamState<double> st;
    CHECK_THROWS_AS(adam_step(ps, st), NumericalError);
    CHECK(ps.at("a").item() == 1.0);
    CHECK(st.t == 0);
  }

  TEST_CASE("zero epochs leave the model untouched") {
    auto model = build_unet<float>(toy_unet(), 1);
    const auto before = flat_params(*model);
    const auto hist = train(*model, toy_pairs(3, 16), TrainConfig{0, 1, 0.004, 0, 0, {}}, LossConfig{});
    CHECK(hist.empty());
    CHECK(flat_params(*model) == before);
  }

  TEST_CASE("history length, loss decrease and determinism") {
    const auto pairs = toy_pairs(4, 16);
    const TrainConfig cfg{6, 2, 0.004, 5, 0, {}};
    auto a = build_unet<float>(toy_unet(), 2), b = build_unet<float>(toy_unet(), 2);
    const auto ha = train(*a, pairs, cfg, LossConfig{});
    const auto hb = train(*b, pairs, cfg, LossConfig{});
    CHECK(ha.size() == 6);
    CHECK(ha == hb);
    CHECK(flat_params(*a) == flat_params(*b));
    CHECK(ha.back() < ha.front());
  }

  TEST_CASE("checkpoint resume matches uninterrupted training") {
    const auto pairs = toy_pairs(3, 16);
    const fs::path dir = fs::temp_directory_path() / "projsynth_unit_ckpt";
    fs::remove_all(dir);

    auto straight = build_unet<float>(toy_unet(), 3);
    Trainer ts(*straight, TrainConfig{4, 1, 0.004, 8, 0, {}}, LossConfig{});
    ts.fit(pairs);

    auto first = build_unet<float>(toy_unet(), 3);
    Trainer t1(*first, TrainConfig{2, 1, 0.004, 8, 0, {}}, LossConfig{});
    t1.fit(pairs);
    t1.save_checkpoint(dir);
    for (const char* f : {"model.json", "weights.json", "weights.bin", "adam_moments.json", "adam_moments.bin",
                          "training_state.json", "history.csv"})
      CHECK(fs::exists(dir / f));

    auto resumed = build_unet<float>(toy_unet(), 99);
    Trainer t2(*resumed, TrainConfig{4, 1, 0.004, 8, 0, {}}, LossConfig{});
    t2.load_checkpoint(dir);
    CHECK(t2.epoch() == 2);
    t2.fit(pairs);
    CHECK(t2.history() == ts.history());
    CHECK(flat_params(*resumed) == flat_params(*straight));
  }

  TEST_CASE("saved models reload bit-identically and mismatches are load errors") {
    const fs::path dir = fs::temp_directory_path() / "projsynth_unit_model";
    fs::remove_all(dir);
    auto m = build_unet<float>(toy_unet(), 4);
    save_model(dir, *m);
    auto r = load_model(dir);
    CHECK(r->architecture() == Architecture::unet);
    CHECK(flat_params(*r) == flat_params(*m));

    UNetConfig other = toy_unet();
    other.base_channels = 3;
    auto wrong = build_unet<float>(other, 0);
    CHECK_THROWS_AS(load_model_weights(dir, *wrong), LoadError);
    auto crn = build_generator<float>(default_model_config(Architecture::crn), 0);
    CHECK_THROWS_AS(load_model_weights(dir, *crn), LoadError);
  }

  TEST_CASE("train config validation and JSON") {
    CHECK_THROWS_AS((TrainConfig{-1, 1, 0.004, 0, 0, {}}.validate()), ConfigError);
    CHECK_THROWS_AS((TrainConfig{1, 0, 0.004, 0, 0, {}}.validate()), ConfigError);
    CHECK_THROWS_AS((TrainConfig{1, 1, 0.0, 0, 0, {}}.validate()), ConfigError);
    const TrainConfig d;
    CHECK(d.epochs == 100);
    CHECK(d.lr == 0.004);
    const auto j = to_json(TrainConfig{7, 2, 0.01, 3, 1, {}});
    CHECK(to_json(train_config_from_json(j)) == j);
    auto bad = j;
    bad["momentum"] = 0.9;
    CHECK_THROWS_AS(train_config_from_json(bad), ConfigError);
  }

  TEST_CASE("empty training set is rejected") {
    auto m = build_unet<float>(toy_unet(), 0);
    CHECK_THROWS_AS(train(*m, {}, TrainConfig{}, LossConfig{}), ParameterError);
  }

  TEST_CASE("history csv") {
    CHECK(history_csv({1.5, 0.25}) == "epoch,mean_loss\n1,1.5\n2,0.25\n");
  }
}

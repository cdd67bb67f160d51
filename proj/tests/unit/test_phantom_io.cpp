#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <algorithm>
#include <cstring>
#include <iterator>

#include "../support.hpp"
#include "projsynth/containers.hpp"
#include "projsynth/error.hpp"
#include "projsynth/phantom.hpp"
#include "projsynth/weights.hpp"

using namespace projsynth;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("projsynth_unit_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_SUITE("phantom") {
  TEST_CASE("centre voxel takes the innermost material") {
    const PhantomSpec spec = default_head_spec(3);
    // Odd dims put a voxel centre exactly at the origin; the ventricles are
    // off-centre, so brain wins there.
    const auto v = generate_head_phantom({33, 33, 33}, {6, 6, 6}, spec);
    const Material& brain = spec.materials.at(3);
    CHECK(v.mr.at(16, 16, 16) == float(brain.mr_intensity));
    CHECK(v.xray.at(16, 16, 16) == float(brain.xray_mu));
  }

  TEST_CASE("same seed gives bit-identical volumes, different seed differs") {
    const auto a = generate_head_phantom({24, 24, 24}, {8, 8, 8}, default_head_spec(7));
    const auto b = generate_head_phantom({24, 24, 24}, {8, 8, 8}, default_head_spec(7));
    const auto c = generate_head_phantom({24, 24, 24}, {8, 8, 8}, default_head_spec(8));
    CHECK(a.mr.data == b.mr.data);
    CHECK(a.xray.data == b.xray.data);
    CHECK(a.xray.data != c.xray.data);
  }

  TEST_CASE("modalities share support and differ in contrast") {
    const auto v = generate_head_phantom({32, 32, 32}, {6, 6, 6}, default_head_spec(1));
    for (std::size_t i = 0; i < v.mr.data.size(); ++i) CHECK((v.mr.data[i] != 0) == (v.xray.data[i] != 0));
    const auto spec = default_head_spec(1);
    // Bone: bright in X-ray, dark in MR relative to brain.
    CHECK(spec.materials.at(2).xray_mu > spec.materials.at(3).xray_mu);
    CHECK(spec.materials.at(2).mr_intensity < spec.materials.at(3).mr_intensity);
  }

  TEST_CASE("projections of both modalities share support") {
    const auto v = generate_head_phantom({32, 32, 32}, {6, 6, 6}, default_head_spec(2));
    for (const auto& g : make_circular_trajectory(3, 360, 750, 1200, {24, 24, 12, 12})) {
      const auto a = forward_project(v.mr, g), b = forward_project(v.xray, g);
      for (std::size_t i = 0; i < a.size(); ++i) CHECK((a.data[i] > 0) == (b.data[i] > 0));
    }
  }

  TEST_CASE("doubling resolution changes integrated attenuation by under 1%") {
    const auto spec = default_head_spec(4);
    auto total = [&](std::size_t n) {
      const double s = 200.0 / double(n);
      const auto v = generate_head_phantom({n, n, n}, {s, s, s}, spec);
      double t = 0;
      for (float x : v.xray.data) t += x;
      return t * s * s * s;
    };
    const double coarse = total(48), fine = total(96);
    CHECK(std::abs(coarse - fine) / fine < 0.01);
  }

  TEST_CASE("invalid specs are rejected") {
    PhantomSpec empty;
    CHECK_THROWS_AS(generate_head_phantom({4, 4, 4}, {1, 1, 1}, empty), ConfigError);
    PhantomSpec bad = default_head_spec(0);
    bad.ellipsoids[0].semi_axes.y = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    PhantomSpec missing = default_head_spec(0);
    missing.ellipsoids[0].material = 99;
    CHECK_THROWS_AS(missing.validate(), ConfigError);
  }

  TEST_CASE("spec JSON round trip and unknown keys") {
    const PhantomSpec s = default_head_spec(11);
    const auto j = to_json(s);
    const PhantomSpec r = phantom_spec_from_json(j);
    CHECK(to_json(r) == j);
    auto extra = j;
    extra["colour"] = "red";
    CHECK_THROWS_AS(phantom_spec_from_json(extra), ConfigError);
  }

  TEST_CASE("ellipsoid chord matches the quadratic oracle for rotated ellipsoids") {
    Ellipsoid e{{1, 2, 3}, {10, 6, 4}, {0, 0, 0}, 1, 0};
    const Vec3 o{-50, 1, 2}, d{1, 0.1, 0.05};
    const Vec3 du = d * (1.0 / norm(d));
    CHECK(e.chord_length(o, du) == doctest::Approx(testsupport::ellipsoid_chord(e.center, e.semi_axes, o, d)));
    // A 90 degree z rotation swaps the x and y semi-axes.
    Ellipsoid r{{0, 0, 0}, {10, 6, 4}, {0, 0, 90}, 1, 0};
    CHECK(r.chord_length({-50, 0, 0}, {1, 0, 0}) == doctest::Approx(12.0));
    CHECK(r.contains({0, 9.9, 0}));
    CHECK(!r.contains({9.9, 0, 0}));
  }
}

TEST_SUITE("containers") {
  TEST_CASE("volume round trip") {
    const auto d = fresh_dir("vol");
    Volume3D v({3, 4, 5}, {0.5, 0.75, 1.25}, {-1, 2, 3}, Modality::xray);
    for (std::size_t i = 0; i < v.data.size(); ++i) v.data[i] = float(i) * 0.1f;
    save_volume(d / "v.json", v);
    CHECK(fs::exists(d / "v.raw"));
    const Volume3D r = load_volume(d / "v.json");
    CHECK(r.dims == v.dims);
    CHECK(r.spacing == v.spacing);
    CHECK(r.origin == v.origin);
    CHECK(r.modality == Modality::xray);
    CHECK(r.data == v.data);
  }

  TEST_CASE("projection round trip and PGM export") {
    const auto d = fresh_dir("proj");
    ProjectionImage p = testsupport::random_image(7, 5, 3, 0, 10);
    p.modality = Modality::synth;
    save_projection(d / "p.json", p);
    const ProjectionImage r = load_projection(d / "p.json");
    CHECK(r.nu == 7);
    CHECK(r.nv == 5);
    CHECK(r.modality == Modality::synth);
    CHECK(r.data == p.data);

    export_pgm(d / "p.pgm", p);
    const std::string pgm = slurp(d / "p.pgm");
    CHECK(pgm.rfind("P5\n7 5\n65535\n", 0) == 0);
    CHECK(pgm.size() == std::string("P5\n7 5\n65535\n").size() + 7 * 5 * 2);
    CHECK(fs::exists(d / "p.pgm.json"));
  }

  TEST_CASE("corrupt containers raise load errors") {
    const auto d = fresh_dir("bad");
    CHECK_THROWS_AS(load_volume(d / "missing.json"), LoadError);
    Volume3D v({2, 2, 2}, {1, 1, 1}, {});
    save_volume(d / "v.json", v);
    fs::resize_file(d / "v.raw", 12);
    CHECK_THROWS_AS(load_volume(d / "v.json"), LoadError);
  }
}

TEST_SUITE("weights") {
  std::vector<float> values(std::size_t n, std::uint64_t seed) {
    const auto t = testsupport::random_tensor<float>({n}, seed);
    return {t.data().begin(), t.data().end()};
  }

  TEST_CASE("save then load is bit-identical") {
    const auto d = fresh_dir("w");
    WeightsArchive a;
    a.add("conv.weight", {2, 1, 3, 3}, values(18, 1));
    a.add("conv.bias", {2}, values(2, 2));
    save_weights(d / "w.json", a);
    CHECK(fs::exists(d / "w.bin"));
    const WeightsArchive r = load_weights(d / "w.json");
    REQUIRE(r.size() == 2);
    for (const auto& t : a.tensors()) {
      const auto& u = r.get(t.name);
      CHECK(u.shape == t.shape);
      CHECK(std::memcmp(u.data.data(), t.data.data(), t.data.size() * sizeof(float)) == 0);
    }
  }

  TEST_CASE("missing tensor names the tensor") {
    WeightsArchive a;
    a.add("x", {1}, {1.0f});
    try {
      a.get("conv3_1.weight");
      FAIL("expected LoadError");
    } catch (const LoadError& e) {
      CHECK(std::string(e.what()).find("conv3_1.weight") != std::string::npos);
    }
  }

  TEST_CASE("declared shape 3x3 against 8 values is a shape error") {
    const auto d = fresh_dir("wshape");
    WeightsArchive a;
    a.add("k", {8}, values(8, 3));
    save_weights(d / "w.json", a);
    auto j = nlohmann::json::parse(slurp(d / "w.json"));
    j["tensors"][0]["shape"] = {3, 3};
    std::ofstream(d / "w.json") << j.dump();
    CHECK_THROWS_AS(load_weights(d / "w.json"), LoadError);
  }

  TEST_CASE("checksum mismatch is an integrity error") {
    const auto d = fresh_dir("wcrc");
    WeightsArchive a;
    a.add("k", {4}, values(4, 4));
    save_weights(d / "w.json", a);
    {
      std::fstream f(d / "w.bin", std::ios::in | std::ios::out | std::ios::binary);
      f.seekp(3);
      f.put(char(0x5a));
    }
    CHECK_THROWS_AS(load_weights(d / "w.json"), IntegrityError);
  }

  TEST_CASE("crc32 of a known string") {
    // Standard CRC-32 check value.
    CHECK(crc32_hex("123456789", 9) == "crc32:cbf43926");
  }

  TEST_CASE("parameter sets round trip through archives") {
    ParameterSet<float> p, q;
    p.add("a", testsupport::random_tensor<float>({2, 3}, 5, -1, 1, true));
    p.add("b", testsupport::random_tensor<float>({4}, 6, -1, 1, true));
    q.add("a", Tensor<float>({2, 3}, 0.0f, true));
    q.add("b", Tensor<float>({4}, 0.0f, true));
    assign_from_archive(q, to_archive(p));
    CHECK(std::ranges::equal(q.at("a").data(), p.at("a").data()));
    CHECK(std::ranges::equal(q.at("b").data(), p.at("b").data()));

    ParameterSet<float> wrong;
    wrong.add("a", Tensor<float>({3, 2}, 0.0f, true));
    CHECK_THROWS_AS(assign_from_archive(wrong, to_archive(p)), LoadError);
    ParameterSet<float> extra;
    extra.add("c", Tensor<float>({1}, 0.0f, true));
    CHECK_THROWS_AS(assign_from_archive(extra, to_archive(p)), LoadError);
  }
}

#include "projsynth/containers.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <json.hpp>

#include "projsynth/error.hpp"

namespace projsynth {

static_assert(std::endian::native == std::endian::little, "raw containers assume a little-endian host");

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_raw(const fs::path& path, const std::vector<float>& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(data.data()), std::streamsize(data.size() * sizeof(float)));
  if (!out) throw LoadError("failed writing " + path.string());
}

std::vector<float> read_raw(const fs::path& path, std::size_t count) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  std::vector<float> data(count);
  in.read(reinterpret_cast<char*>(data.data()), std::streamsize(count * sizeof(float)));
  if (std::size_t(in.gcount()) != count * sizeof(float))
    throw LoadError(path.string() + ": payload shorter than declared dims");
  in.peek();
  if (!in.eof()) throw LoadError(path.string() + ": payload longer than declared dims");
  return data;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw LoadError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
}

fs::path payload_path(const fs::path& sidecar) {
  fs::path p = sidecar;
  return p.replace_extension(".raw");
}

template <typename Fn>
auto with_schema(const fs::path& path, Fn&& fn) {
  try {
    return fn();
  } catch (const json::exception& e) {
    throw LoadError(path.string() + ": malformed sidecar: " + e.what());
  }
}

}  // namespace

void save_volume(const fs::path& sidecar, const Volume3D& v) {
  v.validate();
  const fs::path raw = payload_path(sidecar);
  json j{{"dims", v.dims},
         {"spacing_mm", v.spacing},
         {"origin_mm", {v.origin.x, v.origin.y, v.origin.z}},
         {"dtype", "f32le"},
         {"modality", to_string(v.modality)},
         {"data", raw.filename().string()}};
  write_raw(raw, v.data);
  write_json(sidecar, j);
}

Volume3D load_volume(const fs::path& sidecar) {
  const json j = read_json(sidecar);
  return with_schema(sidecar, [&] {
    if (j.at("dtype").get<std::string>() != "f32le") throw LoadError(sidecar.string() + ": unsupported dtype");
    const auto dims = j.at("dims").get<std::array<std::size_t, 3>>();
    const auto spacing = j.at("spacing_mm").get<std::array<double, 3>>();
    const auto o = j.at("origin_mm").get<std::array<double, 3>>();
    Volume3D v(dims, spacing, {o[0], o[1], o[2]}, modality_from_string(j.at("modality").get<std::string>()));
    v.data = read_raw(sidecar.parent_path() / j.at("data").get<std::string>(), v.size());
    return v;
  });
}

void save_projection(const fs::path& sidecar, const ProjectionImage& img) {
  if (img.data.size() != img.size()) throw DimensionError("projection data length does not match dims");
  const fs::path raw = payload_path(sidecar);
  json j{{"dims", {img.nu, img.nv}},
         {"spacing_mm", {img.du, img.dv}},
         {"dtype", "f32le"},
         {"modality", to_string(img.modality)},
         {"data", raw.filename().string()}};
  write_raw(raw, img.data);
  write_json(sidecar, j);
}

ProjectionImage load_projection(const fs::path& sidecar) {
  const json j = read_json(sidecar);
  return with_schema(sidecar, [&] {
    if (j.at("dtype").get<std::string>() != "f32le") throw LoadError(sidecar.string() + ": unsupported dtype");
    const auto dims = j.at("dims").get<std::array<std::size_t, 2>>();
    const auto sp = j.at("spacing_mm").get<std::array<double, 2>>();
    if (dims[0] < 1 || dims[1] < 1) throw LoadError(sidecar.string() + ": empty projection");
    ProjectionImage img(dims[0], dims[1], sp[0], sp[1], modality_from_string(j.at("modality").get<std::string>()));
    img.data = read_raw(sidecar.parent_path() / j.at("data").get<std::string>(), img.size());
    return img;
  });
}

void export_pgm(const fs::path& pgm, const ProjectionImage& img) {
  if (img.data.empty()) throw DimensionError("cannot export an empty image");
  const auto [lo_it, hi_it] = std::minmax_element(img.data.begin(), img.data.end());
  const double lo = *lo_it, hi = *hi_it;
  const double range = hi > lo ? hi - lo : 1.0;

  std::ofstream out(pgm, std::ios::binary);
  if (!out) throw LoadError("cannot open " + pgm.string() + " for writing");
  out << "P5\n" << img.nu << ' ' << img.nv << "\n65535\n";
  std::vector<unsigned char> bytes;
  bytes.reserve(img.size() * 2);
  for (float v : img.data) {
    const auto q = static_cast<unsigned>(std::lround((double(v) - lo) / range * 65535.0));
    bytes.push_back(static_cast<unsigned char>(q >> 8));  // PGM is big-endian
    bytes.push_back(static_cast<unsigned char>(q & 0xff));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw LoadError("failed writing " + pgm.string());

  fs::path meta = pgm;
  meta += ".json";
  write_json(meta, json{{"mapping", "linear"}, {"min", lo}, {"max", hi}, {"maxval", 65535}});
}

}  // namespace projsynth

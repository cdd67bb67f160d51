#include "projsynth/weights.hpp"

#include <zlib.h>

#include <cstdio>
#include <fstream>
#include <json.hpp>

#include "projsynth/error.hpp"

namespace projsynth {

namespace fs = std::filesystem;
using nlohmann::json;

void WeightsArchive::add(std::string name, Shape shape, std::vector<float> data) {
  if (find(name)) throw ConfigError("duplicate tensor name '" + name + "' in weights archive");
  if (shape_numel(shape) != data.size())
    throw DimensionError("tensor '" + name + "': shape " + shape_to_string(shape) + " does not match " +
                         std::to_string(data.size()) + " values");
  tensors_.push_back({std::move(name), std::move(shape), std::move(data)});
}

const StoredTensor* WeightsArchive::find(const std::string& name) const {
  for (const auto& t : tensors_)
    if (t.name == name) return &t;
  return nullptr;
}

const StoredTensor& WeightsArchive::get(const std::string& name) const {
  if (auto* t = find(name)) return *t;
  throw LoadError("weights archive has no tensor named '" + name + "'");
}

std::string crc32_hex(const void* bytes, std::size_t size) {
  uLong crc = crc32(0L, Z_NULL, 0);
  const auto* p = static_cast<const Bytef*>(bytes);
  while (size > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(size, 1u << 30));
    crc = crc32(crc, p, chunk);
    p += chunk;
    size -= chunk;
  }
  char buf[16];
  std::snprintf(buf, sizeof buf, "%08lx", static_cast<unsigned long>(crc));
  return std::string("crc32:") + buf;
}

void save_weights(const fs::path& manifest, const WeightsArchive& archive) {
  fs::path blob_path = manifest;
  blob_path.replace_extension(".bin");

  std::vector<float> blob;
  json entries = json::array();
  for (const auto& t : archive.tensors()) {
    entries.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", blob.size()}, {"length", t.data.size()}});
    blob.insert(blob.end(), t.data.begin(), t.data.end());
  }

  std::ofstream bout(blob_path, std::ios::binary);
  if (!bout) throw LoadError("cannot open " + blob_path.string() + " for writing");
  bout.write(reinterpret_cast<const char*>(blob.data()), std::streamsize(blob.size() * sizeof(float)));
  if (!bout) throw LoadError("failed writing " + blob_path.string());

  json j{{"format_version", kWeightsFormatVersion},
         {"dtype", "f32le"},
         {"blob", blob_path.filename().string()},
         {"tensors", entries},
         {"checksum", crc32_hex(blob.data(), blob.size() * sizeof(float))}};
  std::ofstream mout(manifest);
  if (!mout) throw LoadError("cannot open " + manifest.string() + " for writing");
  mout << j.dump(2) << '\n';
}

WeightsArchive load_weights(const fs::path& manifest) {
  std::ifstream min(manifest);
  if (!min) throw LoadError("cannot open weights manifest " + manifest.string());
  json j;
  try {
    j = json::parse(min);
  } catch (const json::exception& e) {
    throw LoadError(manifest.string() + ": " + e.what());
  }

  try {
    if (j.at("format_version").get<int>() != kWeightsFormatVersion)
      throw LoadError(manifest.string() + ": unsupported format_version");
    if (j.value("dtype", "f32le") != "f32le") throw LoadError(manifest.string() + ": unsupported dtype");

    const fs::path blob_path = manifest.parent_path() / j.at("blob").get<std::string>();
    std::ifstream bin(blob_path, std::ios::binary | std::ios::ate);
    if (!bin) throw LoadError("cannot open weights blob " + blob_path.string());
    const auto bytes = static_cast<std::size_t>(bin.tellg());
    if (bytes % sizeof(float) != 0) throw LoadError(blob_path.string() + ": size is not a multiple of 4 bytes");
    std::vector<float> blob(bytes / sizeof(float));
    bin.seekg(0);
    bin.read(reinterpret_cast<char*>(blob.data()), std::streamsize(bytes));

    const std::string expected = j.at("checksum").get<std::string>();
    const std::string actual = crc32_hex(blob.data(), bytes);
    if (expected != actual)
      throw IntegrityError(manifest.string() + ": checksum mismatch (manifest " + expected + ", blob " + actual + ")");

    WeightsArchive archive;
    for (const auto& e : j.at("tensors")) {
      const auto name = e.at("name").get<std::string>();
      const auto shape = e.at("shape").get<Shape>();
      const auto offset = e.at("offset").get<std::size_t>();
      const auto length = e.at("length").get<std::size_t>();
      if (shape.empty() || shape_numel(shape) != length)
        throw LoadError("tensor '" + name + "': declared shape " + shape_to_string(shape) + " does not match length " +
                        std::to_string(length));
      if (offset > blob.size() || length > blob.size() - offset)
        throw LoadError("tensor '" + name + "': range exceeds blob");
      archive.add(name, shape, std::vector<float>(blob.begin() + long(offset), blob.begin() + long(offset + length)));
    }
    return archive;
  } catch (const json::exception& e) {
    throw LoadError(manifest.string() + ": malformed manifest: " + e.what());
  }
}

template <typename T>
WeightsArchive to_archive(const ParameterSet<T>& params, const std::string& prefix) {
  WeightsArchive a;
  for (const auto& [name, t] : params)
    a.add(prefix + name, t.shape(), std::vector<float>(t.data().begin(), t.data().end()));
  return a;
}

template <typename T>
void assign_from_archive(ParameterSet<T>& params, const WeightsArchive& archive, const std::string& prefix) {
  // Validate everything before touching any parameter.
  for (const auto& [name, t] : params) {
    const StoredTensor& s = archive.get(prefix + name);
    if (s.shape != t.shape())
      throw LoadError("tensor '" + prefix + name + "': stored shape " + shape_to_string(s.shape) +
                      " does not match expected " + shape_to_string(t.shape()));
  }
  for (auto& [name, t] : params) {
    const StoredTensor& s = archive.get(prefix + name);
    auto dst = t.mutable_data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = T(s.data[i]);
  }
}

template WeightsArchive to_archive(const ParameterSet<float>&, const std::string&);
template WeightsArchive to_archive(const ParameterSet<double>&, const std::string&);
template void assign_from_archive(ParameterSet<float>&, const WeightsArchive&, const std::string&);
template void assign_from_archive(ParameterSet<double>&, const WeightsArchive&, const std::string&);

}  // namespace projsynth

#pragma once

// Weights container shared by generator checkpoints, optimizer moments and
// evaluation networks: a JSON manifest plus one raw little-endian float32 blob.
//
//   {"format_version": 1, "dtype": "f32le", "blob": "<stem>.bin",
//    "tensors": [{"name": ..., "shape": [...], "offset": o, "length": n}, ...],
//    "checksum": "crc32:xxxxxxxx"}
//
// offset and length count float32 elements; the checksum covers the blob bytes.

#include <filesystem>
#include <string>
#include <vector>

#include "projsynth/parameters.hpp"
#include "projsynth/tensor.hpp"

namespace projsynth {

struct StoredTensor {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

class WeightsArchive {
 public:
  void add(std::string name, Shape shape, std::vector<float> data);
  const StoredTensor* find(const std::string& name) const;
  /// Throws LoadError naming the missing tensor.
  const StoredTensor& get(const std::string& name) const;
  const std::vector<StoredTensor>& tensors() const { return tensors_; }
  std::size_t size() const { return tensors_.size(); }

 private:
  std::vector<StoredTensor> tensors_;
};

inline constexpr int kWeightsFormatVersion = 1;

void save_weights(const std::filesystem::path& manifest, const WeightsArchive& archive);
WeightsArchive load_weights(const std::filesystem::path& manifest);

std::string crc32_hex(const void* bytes, std::size_t size);

/// Snapshot of every parameter, names prefixed.
template <typename T>
WeightsArchive to_archive(const ParameterSet<T>& params, const std::string& prefix = "");

/// Copies archive entries into existing parameters (same names and shapes).
/// Missing names and shape mismatches throw LoadError.
template <typename T>
void assign_from_archive(ParameterSet<T>& params, const WeightsArchive& archive, const std::string& prefix = "");

}  // namespace projsynth

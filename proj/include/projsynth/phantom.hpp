#pragma once

// Ellipsoid-composite head phantom rasterized into co-registered MR-intensity
// and X-ray-attenuation volumes.

#include <cstdint>
#include <map>
#include <vector>

#include <json.hpp>

#include "projsynth/projector.hpp"

namespace projsynth {

struct Material {
  double mr_intensity = 0.0;  // arbitrary units
  double xray_mu = 0.0;       // per mm
};

struct Ellipsoid {
  Vec3 center;        // mm
  Vec3 semi_axes;     // mm
  Vec3 rotation_deg;  // applied as Rz * Ry * Rx
  int material = 0;
  int priority = 0;

  /// sum_i (local_i / a_i)^2; the point is inside iff this is <= 1.
  double quadratic_form(const Vec3& p) const;
  bool contains(const Vec3& p) const { return quadratic_form(p) <= 1.0; }
  /// Length of the ray segment (origin + t * unit direction) inside the ellipsoid.
  double chord_length(const Vec3& origin, const Vec3& direction) const;
};

struct PhantomSpec {
  std::vector<Ellipsoid> ellipsoids;
  std::map<int, Material> materials;
  std::uint64_t seed = 0;

  /// Throws ConfigError: empty, non-positive semi-axes, unknown material.
  void validate() const;
};

/// Head, two-ellipsoid skull shell, brain, two ventricles and ten seeded
/// inclusions. Bone is bright in X-ray and dark in MR, soft tissue and CSF the
/// reverse.
PhantomSpec default_head_spec(std::uint64_t seed);

struct PhantomVolumes {
  Volume3D mr;
  Volume3D xray;
};

/// Rasterizes both modalities from the same material map. Each voxel takes the
/// material of the highest-priority ellipsoid containing its centre (later
/// entries win ties); supersample > 1 averages an s^3 sub-grid instead.
PhantomVolumes generate_head_phantom(std::array<std::size_t, 3> dims, std::array<double, 3> spacing,
                                     const PhantomSpec& spec, int supersample = 1);

nlohmann::json to_json(const PhantomSpec& spec);
/// Rejects unknown keys.
PhantomSpec phantom_spec_from_json(const nlohmann::json& j);

}  // namespace projsynth

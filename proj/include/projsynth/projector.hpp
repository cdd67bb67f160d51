#pragma once

// Cone-beam forward projection of scalar volumes onto a flat detector.

#include <array>
#include <cstddef>
#include <string>
#include <vector>

namespace projsynth {

struct Vec3 {
  double x = 0, y = 0, z = 0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
  bool operator==(const Vec3&) const = default;
};

double dot(const Vec3& a, const Vec3& b);
Vec3 cross(const Vec3& a, const Vec3& b);
double norm(const Vec3& v);

enum class Modality { mr, xray, synth };

std::string to_string(Modality m);
Modality modality_from_string(const std::string& s);

/// Scalar field on a regular grid, x-fastest storage. origin is the world
/// position (mm) of the centre of voxel (0,0,0).
struct Volume3D {
  std::array<std::size_t, 3> dims{1, 1, 1};
  std::array<double, 3> spacing{1, 1, 1};
  Vec3 origin;
  Modality modality = Modality::mr;
  std::vector<float> data;

  Volume3D() = default;
  Volume3D(std::array<std::size_t, 3> dims, std::array<double, 3> spacing, Vec3 origin,
           Modality modality = Modality::mr);

  /// Volume whose grid is centred on the world origin.
  static Volume3D centered(std::array<std::size_t, 3> dims, std::array<double, 3> spacing,
                           Modality modality = Modality::mr);

  std::size_t size() const { return dims[0] * dims[1] * dims[2]; }
  std::size_t index(std::size_t i, std::size_t j, std::size_t k) const { return (k * dims[1] + j) * dims[0] + i; }
  float& at(std::size_t i, std::size_t j, std::size_t k) { return data[index(i, j, k)]; }
  float at(std::size_t i, std::size_t j, std::size_t k) const { return data[index(i, j, k)]; }
  Vec3 voxel_center(std::size_t i, std::size_t j, std::size_t k) const;
  /// Axis-aligned box spanned by the outer voxel faces.
  std::pair<Vec3, Vec3> bounding_box() const;

  /// Throws DimensionError/ParameterError on a broken invariant.
  void validate() const;
};

/// One cone-beam view: point source and flat detector.
struct ProjectionGeometry {
  Vec3 source;
  Vec3 detector_center;
  Vec3 detector_u{1, 0, 0};  // pixel columns advance along u
  Vec3 detector_v{0, 0, 1};  // pixel rows advance along v
  std::size_t nu = 1, nv = 1;
  double du = 1.0, dv = 1.0;
  Vec3 isocenter;
  double angle_deg = 0.0;

  /// Source to detector plane, measured along the detector normal.
  double sdd() const;
  double sid() const;
  Vec3 pixel_center(std::size_t iu, std::size_t iv) const;

  /// Throws GeometryError on non-orthonormal axes or SDD <= SID.
  void validate() const;
};

struct ProjectionImage {
  std::size_t nu = 0, nv = 0;
  double du = 1.0, dv = 1.0;
  Modality modality = Modality::xray;
  std::vector<float> data;  // row-major, u fastest; pixel i in [0, nu*nv)

  ProjectionImage() = default;
  ProjectionImage(std::size_t nu, std::size_t nv, double du = 1.0, double dv = 1.0,
                  Modality modality = Modality::xray);

  std::size_t size() const { return nu * nv; }
  float& at(std::size_t iu, std::size_t iv) { return data[iv * nu + iu]; }
  float at(std::size_t iu, std::size_t iv) const { return data[iv * nu + iu]; }
};

/// Trilinear interpolation of the eight neighbouring voxel centres. Inside the
/// bounding box the grid is clamped at its edges; outside it the volume is 0.
double sample_trilinear(const Volume3D& volume, const Vec3& point_mm);

struct DetectorSpec {
  std::size_t nu = 512, nv = 512;
  double du = 0.62, dv = 0.62;
};

/// Views equally spaced by angular_range/n_views about the z axis through the
/// isocenter, the first at angle 0 with the source on +x.
std::vector<ProjectionGeometry> make_circular_trajectory(std::size_t n_views, double angular_range_deg, double sid,
                                                         double sdd, const DetectorSpec& detector,
                                                         const Vec3& isocenter = {});

/// Half the smallest voxel spacing.
double default_step(const Volume3D& volume);

/// Line integral of the volume along the ray from the source through every
/// detector pixel centre, sampled with the midpoint rule at (at most) step_mm.
/// Units are volume value times mm; rays that miss the volume give 0.
ProjectionImage forward_project(const Volume3D& volume, const ProjectionGeometry& geometry, double step_mm);

inline ProjectionImage forward_project(const Volume3D& volume, const ProjectionGeometry& geometry) {
  return forward_project(volume, geometry, default_step(volume));
}

/// Integral along one ray (origin, unit direction) through the bounding box.
double integrate_ray(const Volume3D& volume, const Vec3& origin, const Vec3& direction, double step_mm);

}  // namespace projsynth

#include "projsynth/projector.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "projsynth/error.hpp"

namespace projsynth {

double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
double norm(const Vec3& v) { return std::sqrt(dot(v, v)); }

std::string to_string(Modality m) {
  switch (m) {
    case Modality::mr: return "MR";
    case Modality::xray: return "XRAY";
    case Modality::synth: return "SYNTH";
  }
  return "?";
}

Modality modality_from_string(const std::string& s) {
  if (s == "MR") return Modality::mr;
  if (s == "XRAY") return Modality::xray;
  if (s == "SYNTH") return Modality::synth;
  throw LoadError("unknown modality tag '" + s + "'");
}

// --- Volume3D --------------------------------------------------------------

Volume3D::Volume3D(std::array<std::size_t, 3> d, std::array<double, 3> s, Vec3 o, Modality m)
    : dims(d), spacing(s), origin(o), modality(m) {
  for (auto n : dims)
    if (n < 1) throw DimensionError("volume dims must be >= 1");
  for (auto sp : spacing)
    if (!(sp > 0)) throw ParameterError("volume spacing must be > 0");
  data.assign(size(), 0.0f);
}

Volume3D Volume3D::centered(std::array<std::size_t, 3> d, std::array<double, 3> s, Modality m) {
  const Vec3 o{-0.5 * double(d[0] - 1) * s[0], -0.5 * double(d[1] - 1) * s[1], -0.5 * double(d[2] - 1) * s[2]};
  return Volume3D(d, s, o, m);
}

Vec3 Volume3D::voxel_center(std::size_t i, std::size_t j, std::size_t k) const {
  return {origin.x + double(i) * spacing[0], origin.y + double(j) * spacing[1], origin.z + double(k) * spacing[2]};
}

std::pair<Vec3, Vec3> Volume3D::bounding_box() const {
  const Vec3 half{0.5 * spacing[0], 0.5 * spacing[1], 0.5 * spacing[2]};
  const Vec3 far{double(dims[0] - 1) * spacing[0], double(dims[1] - 1) * spacing[1],
                 double(dims[2] - 1) * spacing[2]};
  return {origin - half, origin + far + half};
}

void Volume3D::validate() const {
  for (auto n : dims)
    if (n < 1) throw DimensionError("volume dims must be >= 1");
  for (auto sp : spacing)
    if (!(sp > 0)) throw ParameterError("volume spacing must be > 0");
  if (data.size() != size()) throw DimensionError("volume data length does not match dims");
}

// --- ProjectionGeometry ----------------------------------------------------

double ProjectionGeometry::sdd() const {
  return std::abs(dot(detector_center - source, cross(detector_u, detector_v)));
}

double ProjectionGeometry::sid() const { return norm(isocenter - source); }

Vec3 ProjectionGeometry::pixel_center(std::size_t iu, std::size_t iv) const {
  const double ou = (double(iu) - 0.5 * double(nu - 1)) * du;
  const double ov = (double(iv) - 0.5 * double(nv - 1)) * dv;
  return detector_center + detector_u * ou + detector_v * ov;
}

void ProjectionGeometry::validate() const {
  constexpr double tol = 1e-9;
  if (std::abs(norm(detector_u) - 1) > tol || std::abs(norm(detector_v) - 1) > tol ||
      std::abs(dot(detector_u, detector_v)) > tol)
    throw GeometryError("detector axes must be orthonormal");
  if (nu < 1 || nv < 1) throw GeometryError("detector must have at least one pixel");
  if (!(du > 0 && dv > 0)) throw GeometryError("detector spacing must be > 0");
  const double sid_ = sid(), sdd_ = sdd();
  if (!(sid_ > 0 && sdd_ > sid_)) throw GeometryError("geometry requires SDD > SID > 0");
}

// --- ProjectionImage -------------------------------------------------------

ProjectionImage::ProjectionImage(std::size_t u, std::size_t v, double su, double sv, Modality m)
    : nu(u), nv(v), du(su), dv(sv), modality(m), data(u * v, 0.0f) {}

// --- sampling --------------------------------------------------------------

double sample_trilinear(const Volume3D& vol, const Vec3& p) {
  double idx[3];
  std::size_t i0[3], i1[3];
  double f[3];
  for (int a = 0; a < 3; ++a) {
    idx[a] = (p[a] - vol.origin[a]) / vol.spacing[a];
    const double hi = double(vol.dims[a]) - 0.5;
    if (idx[a] < -0.5 || idx[a] > hi) return 0.0;
    const double c = std::clamp(idx[a], 0.0, double(vol.dims[a] - 1));
    i0[a] = std::min(std::size_t(c), vol.dims[a] - 1);
    i1[a] = std::min(i0[a] + 1, vol.dims[a] - 1);
    f[a] = c - double(i0[a]);
  }
  auto v = [&](std::size_t x, std::size_t y, std::size_t z) { return double(vol.at(x, y, z)); };
  const double c00 = v(i0[0], i0[1], i0[2]) + f[0] * (v(i1[0], i0[1], i0[2]) - v(i0[0], i0[1], i0[2]));
  const double c10 = v(i0[0], i1[1], i0[2]) + f[0] * (v(i1[0], i1[1], i0[2]) - v(i0[0], i1[1], i0[2]));
  const double c01 = v(i0[0], i0[1], i1[2]) + f[0] * (v(i1[0], i0[1], i1[2]) - v(i0[0], i0[1], i1[2]));
  const double c11 = v(i0[0], i1[1], i1[2]) + f[0] * (v(i1[0], i1[1], i1[2]) - v(i0[0], i1[1], i1[2]));
  const double c0 = c00 + f[1] * (c10 - c00);
  const double c1 = c01 + f[1] * (c11 - c01);
  return c0 + f[2] * (c1 - c0);
}

// --- trajectory ------------------------------------------------------------

std::vector<ProjectionGeometry> make_circular_trajectory(std::size_t n_views, double angular_range_deg, double sid,
                                                         double sdd, const DetectorSpec& det, const Vec3& iso) {
  if (n_views < 1) throw ParameterError("trajectory needs at least one view");
  if (!(sid > 0)) throw ParameterError("SID must be > 0");
  if (!(sdd > sid)) throw ParameterError("SDD must exceed SID");
  std::vector<ProjectionGeometry> views;
  views.reserve(n_views);
  const double step = angular_range_deg / double(n_views);
  for (std::size_t k = 0; k < n_views; ++k) {
    const double deg = step * double(k);
    const double rad = deg * std::numbers::pi / 180.0;
    const Vec3 dir{std::cos(rad), std::sin(rad), 0.0};  // isocenter -> source
    ProjectionGeometry g;
    g.isocenter = iso;
    g.source = iso + dir * sid;
    g.detector_center = iso - dir * (sdd - sid);
    g.detector_u = {-std::sin(rad), std::cos(rad), 0.0};
    g.detector_v = {0.0, 0.0, 1.0};
    g.nu = det.nu;
    g.nv = det.nv;
    g.du = det.du;
    g.dv = det.dv;
    g.angle_deg = deg;
    views.push_back(g);
  }
  return views;
}

// --- projection ------------------------------------------------------------

double default_step(const Volume3D& volume) {
  return 0.5 * *std::min_element(volume.spacing.begin(), volume.spacing.end());
}

namespace {

// Slab test; returns false when the ray misses the box.
bool clip_ray(const Vec3& o, const Vec3& d, const Vec3& lo, const Vec3& hi, double& t0, double& t1) {
  t0 = 0.0;
  t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d[a]) < 1e-15) {
      if (o[a] < lo[a] || o[a] > hi[a]) return false;
      continue;
    }
    double ta = (lo[a] - o[a]) / d[a], tb = (hi[a] - o[a]) / d[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  return t1 > t0;
}

bool inside(const Vec3& p, const Vec3& lo, const Vec3& hi) {
  return p.x > lo.x && p.x < hi.x && p.y > lo.y && p.y < hi.y && p.z > lo.z && p.z < hi.z;
}

}  // namespace

double integrate_ray(const Volume3D& volume, const Vec3& origin, const Vec3& direction, double step_mm) {
  if (!(step_mm > 0)) throw ParameterError("step_mm must be > 0");
  const auto [lo, hi] = volume.bounding_box();
  double t0, t1;
  if (!clip_ray(origin, direction, lo, hi, t0, t1)) return 0.0;
  const double length = t1 - t0;
  const auto steps = std::max<std::size_t>(1, std::size_t(std::ceil(length / step_mm)));
  const double h = length / double(steps);
  double acc = 0.0;
  for (std::size_t s = 0; s < steps; ++s) acc += sample_trilinear(volume, origin + direction * (t0 + (double(s) + 0.5) * h));
  return acc * h;
}

ProjectionImage forward_project(const Volume3D& volume, const ProjectionGeometry& geometry, double step_mm) {
  volume.validate();
  geometry.validate();
  if (!(step_mm > 0)) throw ParameterError("step_mm must be > 0");
  const auto [lo, hi] = volume.bounding_box();
  if (inside(geometry.source, lo, hi)) throw GeometryError("source lies inside the volume bounding box");

  ProjectionImage img(geometry.nu, geometry.nv, geometry.du, geometry.dv, volume.modality);
  for (std::size_t iv = 0; iv < geometry.nv; ++iv)
    for (std::size_t iu = 0; iu < geometry.nu; ++iu) {
      const Vec3 ray = geometry.pixel_center(iu, iv) - geometry.source;
      const Vec3 dir = ray * (1.0 / norm(ray));
      img.at(iu, iv) = float(integrate_ray(volume, geometry.source, dir, step_mm));
    }
  return img;
}

}  // namespace projsynth

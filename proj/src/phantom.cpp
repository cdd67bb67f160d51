#include "projsynth/phantom.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "projsynth/error.hpp"

namespace projsynth {

using nlohmann::json;

namespace {

// Rotates world offsets into the ellipsoid frame: local = R^T * d, R = Rz Ry Rx.
Vec3 to_local(const Vec3& d, const Vec3& rot_deg) {
  const double k = std::numbers::pi / 180.0;
  const double cx = std::cos(rot_deg.x * k), sx = std::sin(rot_deg.x * k);
  const double cy = std::cos(rot_deg.y * k), sy = std::sin(rot_deg.y * k);
  const double cz = std::cos(rot_deg.z * k), sz = std::sin(rot_deg.z * k);
  // R^T = Rx^T Ry^T Rz^T
  Vec3 a{cz * d.x + sz * d.y, -sz * d.x + cz * d.y, d.z};
  Vec3 b{cy * a.x - sy * a.z, a.y, sy * a.x + cy * a.z};
  return {b.x, cx * b.y + sx * b.z, -sx * b.y + cx * b.z};
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * (double(rng() >> 11) * 0x1.0p-53);
}

}  // namespace

double Ellipsoid::quadratic_form(const Vec3& p) const {
  const Vec3 l = to_local(p - center, rotation_deg);
  return (l.x / semi_axes.x) * (l.x / semi_axes.x) + (l.y / semi_axes.y) * (l.y / semi_axes.y) +
         (l.z / semi_axes.z) * (l.z / semi_axes.z);
}

double Ellipsoid::chord_length(const Vec3& origin, const Vec3& direction) const {
  const Vec3 o = to_local(origin - center, rotation_deg);
  const Vec3 d = to_local(direction, rotation_deg);
  const Vec3 os{o.x / semi_axes.x, o.y / semi_axes.y, o.z / semi_axes.z};
  const Vec3 ds{d.x / semi_axes.x, d.y / semi_axes.y, d.z / semi_axes.z};
  const double a = dot(ds, ds), b = dot(os, ds), c = dot(os, os) - 1.0;
  const double disc = b * b - a * c;
  if (disc <= 0) return 0.0;
  return 2.0 * std::sqrt(disc) / a * norm(direction);
}

void PhantomSpec::validate() const {
  if (ellipsoids.empty()) throw ConfigError("phantom spec contains no ellipsoids");
  for (const auto& e : ellipsoids) {
    if (!(e.semi_axes.x > 0 && e.semi_axes.y > 0 && e.semi_axes.z > 0))
      throw ConfigError("ellipsoid semi-axes must be > 0");
    if (!materials.count(e.material))
      throw ConfigError("ellipsoid references unknown material " + std::to_string(e.material));
  }
}

PhantomSpec default_head_spec(std::uint64_t seed) {
  enum : int { scalp = 1, bone, brain, csf, calcification, lesion };
  PhantomSpec s;
  s.seed = seed;
  s.materials = {
      {scalp, {0.55, 0.0200}},         {bone, {0.10, 0.0480}},   {brain, {0.80, 0.0210}},
      {csf, {1.00, 0.0195}},           {calcification, {0.05, 0.0600}}, {lesion, {0.95, 0.0235}},
  };
  s.ellipsoids = {
      {{0, 0, 0}, {70, 88, 82}, {0, 0, 0}, scalp, 0},
      {{0, 0, 2}, {66, 84, 78}, {0, 0, 0}, bone, 1},
      {{0, 0, 3}, {61, 79, 72}, {0, 0, 0}, brain, 2},
      {{-12, 5, 10}, {6, 22, 12}, {0, 0, 18}, csf, 3},
      {{12, 5, 10}, {6, 22, 12}, {0, 0, -18}, csf, 3},
  };
  std::mt19937_64 rng(seed);
  for (int i = 0; i < 10; ++i) {
    Ellipsoid e;
    e.center = {uniform(rng, -35, 35), uniform(rng, -50, 50), uniform(rng, -40, 45)};
    e.semi_axes = {uniform(rng, 3, 9), uniform(rng, 3, 9), uniform(rng, 3, 9)};
    e.rotation_deg = {uniform(rng, 0, 180), uniform(rng, 0, 180), uniform(rng, 0, 180)};
    e.material = (rng() & 1) ? calcification : lesion;
    e.priority = 4;
    s.ellipsoids.push_back(e);
  }
  return s;
}

PhantomVolumes generate_head_phantom(std::array<std::size_t, 3> dims, std::array<double, 3> spacing,
                                     const PhantomSpec& spec, int supersample) {
  spec.validate();
  if (supersample < 1) throw ParameterError("supersample must be >= 1");
  PhantomVolumes out{Volume3D::centered(dims, spacing, Modality::mr), Volume3D::centered(dims, spacing, Modality::xray)};

  // Resolve the winning ellipsoid for a point: highest priority, later entries on ties.
  auto material_at = [&](const Vec3& p) -> const Material* {
    const Ellipsoid* best = nullptr;
    for (const auto& e : spec.ellipsoids)
      if ((!best || e.priority >= best->priority) && e.contains(p)) best = &e;
    return best ? &spec.materials.at(best->material) : nullptr;
  };

  const int s = supersample;
  const double inv = 1.0 / double(s * s * s);
  for (std::size_t k = 0; k < dims[2]; ++k)
    for (std::size_t j = 0; j < dims[1]; ++j)
      for (std::size_t i = 0; i < dims[0]; ++i) {
        const Vec3 c = out.mr.voxel_center(i, j, k);
        double mr = 0.0, mu = 0.0;
        for (int a = 0; a < s; ++a)
          for (int b = 0; b < s; ++b)
            for (int d = 0; d < s; ++d) {
              const Vec3 off{((a + 0.5) / s - 0.5) * spacing[0], ((b + 0.5) / s - 0.5) * spacing[1],
                             ((d + 0.5) / s - 0.5) * spacing[2]};
              if (const Material* m = material_at(c + off)) {
                mr += m->mr_intensity;
                mu += m->xray_mu;
              }
            }
        out.mr.at(i, j, k) = float(mr * inv);
        out.xray.at(i, j, k) = float(mu * inv);
      }
  return out;
}

// --- JSON ------------------------------------------------------------------

namespace {

json vec_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

Vec3 vec_from(const json& j) {
  const auto a = j.get<std::array<double, 3>>();
  return {a[0], a[1], a[2]};
}

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [k, _] : j.items())
    if (!allowed.count(k)) throw ConfigError("unknown key '" + k + "' in " + where);
}

}  // namespace

json to_json(const PhantomSpec& spec) {
  json ells = json::array();
  for (const auto& e : spec.ellipsoids)
    ells.push_back({{"center_mm", vec_json(e.center)},
                    {"semi_axes_mm", vec_json(e.semi_axes)},
                    {"rotation_deg", vec_json(e.rotation_deg)},
                    {"material", e.material},
                    {"priority", e.priority}});
  json mats = json::array();
  for (const auto& [id, m] : spec.materials)
    mats.push_back({{"id", id}, {"mr_intensity", m.mr_intensity}, {"xray_mu", m.xray_mu}});
  return {{"seed", spec.seed}, {"materials", mats}, {"ellipsoids", ells}};
}

PhantomSpec phantom_spec_from_json(const json& j) {
  try {
    reject_unknown(j, {"seed", "materials", "ellipsoids"}, "phantom spec");
    PhantomSpec s;
    s.seed = j.value("seed", std::uint64_t{0});
    for (const auto& m : j.at("materials")) {
      reject_unknown(m, {"id", "mr_intensity", "xray_mu"}, "material");
      s.materials[m.at("id").get<int>()] = {m.at("mr_intensity").get<double>(), m.at("xray_mu").get<double>()};
    }
    for (const auto& e : j.at("ellipsoids")) {
      reject_unknown(e, {"center_mm", "semi_axes_mm", "rotation_deg", "material", "priority"}, "ellipsoid");
      Ellipsoid el;
      el.center = vec_from(e.at("center_mm"));
      el.semi_axes = vec_from(e.at("semi_axes_mm"));
      if (e.contains("rotation_deg")) el.rotation_deg = vec_from(e.at("rotation_deg"));
      el.material = e.at("material").get<int>();
      el.priority = e.value("priority", 0);
      s.ellipsoids.push_back(el);
    }
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed phantom spec: ") + e.what());
  }
}

}  // namespace projsynth

#include "dexbody/collision.hpp"

#include <algorithm>
#include <cmath>

#include "dexbody/config.hpp"
#include "dexbody/errors.hpp"

namespace dexbody {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

ObjectSpec ObjectSpec::make(PrimitiveType type, const Vec3& dims, double density) {
  ObjectSpec o;
  o.type = type;
  o.dims = dims;
  o.density = density;
  if ((dims.array() < 0.0).any() || density <= 0.0)
    throw SchemaError("object dimensions and density must be positive");
  o.mass = o.volume() * density;
  if (o.mass <= 0.0) throw SchemaError("object mass must be positive");
  const double m = o.mass;
  switch (type) {
    case PrimitiveType::kBox: {
      const Vec3 f = 2.0 * dims;  // full extents
      o.inertia = (m / 12.0) * Vec3(f[1] * f[1] + f[2] * f[2], f[0] * f[0] + f[2] * f[2],
                                    f[0] * f[0] + f[1] * f[1]);
      break;
    }
    case PrimitiveType::kSphere: {
      const double i = 0.4 * m * dims[0] * dims[0];
      o.inertia = Vec3::Constant(i);
      break;
    }
    case PrimitiveType::kCylinder: {
      const double r = dims[0], h = 2.0 * dims[1];
      const double ixy = m * (3.0 * r * r + h * h) / 12.0;
      o.inertia = Vec3(ixy, ixy, 0.5 * m * r * r);
      break;
    }
  }
  return o;
}

ObjectSpec ObjectSpec::from_config(ConfigSection& sec) {
  const std::string kind = sec.get_str("type");
  PrimitiveType type;
  Vec3 dims = Vec3::Zero();
  const std::vector<double> d = sec.get_nums("dims");
  if (kind == "box") {
    type = PrimitiveType::kBox;
    if (d.size() != 3) throw SchemaError("object: box dims need 3 half extents");
    dims = Vec3(d[0], d[1], d[2]);
  } else if (kind == "sphere") {
    type = PrimitiveType::kSphere;
    if (d.size() != 1) throw SchemaError("object: sphere dims need 1 radius");
    dims[0] = d[0];
  } else if (kind == "cylinder") {
    type = PrimitiveType::kCylinder;
    if (d.size() != 2) throw SchemaError("object: cylinder dims need radius and half height");
    dims[0] = d[0];
    dims[1] = d[1];
  } else {
    throw SchemaError("object: unknown type '" + kind + "'");
  }
  ObjectSpec o = make(type, dims, sec.get_num("density", 1000.0));
  o.name = sec.get_str("name", "object");
  return o;
}

double ObjectSpec::volume() const {
  switch (type) {
    case PrimitiveType::kBox:
      return 8.0 * dims[0] * dims[1] * dims[2];
    case PrimitiveType::kSphere:
      return (4.0 / 3.0) * kPi * dims[0] * dims[0] * dims[0];
    case PrimitiveType::kCylinder:
      return kPi * dims[0] * dims[0] * 2.0 * dims[1];
  }
  return 0.0;
}

double ObjectSpec::rest_clearance() const {
  switch (type) {
    case PrimitiveType::kBox:
      return dims[2];
    case PrimitiveType::kSphere:
      return dims[0];
    case PrimitiveType::kCylinder:
      return dims[1];
  }
  return 0.0;
}

double primitive_sdf(PrimitiveType type, const Vec3& dims, const Vec3& p) {
  switch (type) {
    case PrimitiveType::kBox: {
      const Vec3 q = p.cwiseAbs() - dims;
      const Vec3 outside = q.cwiseMax(0.0);
      const double inside = std::min(q.maxCoeff(), 0.0);
      return outside.norm() + inside;
    }
    case PrimitiveType::kSphere:
      return p.norm() - dims[0];
    case PrimitiveType::kCylinder: {
      const double dr = std::hypot(p[0], p[1]) - dims[0];
      const double dz = std::abs(p[2]) - dims[1];
      const double ox = std::max(dr, 0.0), oz = std::max(dz, 0.0);
      return std::hypot(ox, oz) + std::min(std::max(dr, dz), 0.0);
    }
  }
  return 0.0;
}

Vec3 primitive_sdf_grad(PrimitiveType type, const Vec3& dims, const Vec3& p) {
  // Central differences: exact enough everywhere, avoids the case analysis
  // at edges/corners, and keeps the gradient consistent with the sdf used
  // by both simulation and metrics.
  const double h = 1e-6;
  Vec3 g;
  for (int k = 0; k < 3; ++k) {
    Vec3 lo = p, hi = p;
    lo[k] -= h;
    hi[k] += h;
    g[k] = (primitive_sdf(type, dims, hi) - primitive_sdf(type, dims, lo)) / (2.0 * h);
  }
  const double n = g.norm();
  if (n < 1e-12) return Vec3::UnitZ();  // center singularity: arbitrary fixed direction
  return g / n;
}

std::vector<Vec3> primitive_surface_points(PrimitiveType type, const Vec3& dims,
                                           double spacing) {
  if (spacing <= 0.0) throw InvalidArgument("surface sampling spacing must be > 0");
  std::vector<Vec3> pts;
  auto steps = [&](double len) { return std::max(2, static_cast<int>(std::ceil(len / spacing)) + 1); };
  switch (type) {
    case PrimitiveType::kBox: {
      const int nx = steps(2 * dims[0]), ny = steps(2 * dims[1]), nz = steps(2 * dims[2]);
      auto lin = [](double half, int n, int i) {
        return -half + 2.0 * half * static_cast<double>(i) / static_cast<double>(n - 1);
      };
      for (int ix = 0; ix < nx; ++ix)
        for (int iy = 0; iy < ny; ++iy)
          for (int iz = 0; iz < nz; ++iz) {
            const bool on_face = ix == 0 || ix == nx - 1 || iy == 0 || iy == ny - 1 ||
                                 iz == 0 || iz == nz - 1;
            if (on_face)
              pts.emplace_back(lin(dims[0], nx, ix), lin(dims[1], ny, iy), lin(dims[2], nz, iz));
          }
      break;
    }
    case PrimitiveType::kSphere: {
      // Fibonacci sphere with count matched to the requested spacing.
      const double r = dims[0];
      const int n = std::max(8, static_cast<int>(std::ceil(4.0 * kPi * r * r / (spacing * spacing))));
      const double golden = kPi * (3.0 - std::sqrt(5.0));
      for (int i = 0; i < n; ++i) {
        const double z = 1.0 - 2.0 * (i + 0.5) / n;
        const double rad = std::sqrt(std::max(0.0, 1.0 - z * z));
        const double a = golden * i;
        pts.emplace_back(r * rad * std::cos(a), r * rad * std::sin(a), r * z);
      }
      break;
    }
    case PrimitiveType::kCylinder: {
      const double r = dims[0], hh = dims[1];
      const int na = std::max(6, static_cast<int>(std::ceil(2.0 * kPi * r / spacing)));
      const int nz = steps(2 * hh);
      for (int iz = 0; iz < nz; ++iz) {
        const double z = -hh + 2.0 * hh * static_cast<double>(iz) / static_cast<double>(nz - 1);
        for (int ia = 0; ia < na; ++ia) {
          const double a = 2.0 * kPi * ia / na;
          pts.emplace_back(r * std::cos(a), r * std::sin(a), z);
        }
      }
      // Cap interiors, ring by ring.
      const int nr = std::max(1, static_cast<int>(std::floor(r / spacing)));
      for (int ir = 0; ir < nr; ++ir) {
        const double rr = r * ir / nr;
        const int nc = std::max(1, static_cast<int>(std::ceil(2.0 * kPi * rr / spacing)));
        for (int ia = 0; ia < nc; ++ia) {
          const double a = 2.0 * kPi * ia / nc;
          pts.emplace_back(rr * std::cos(a), rr * std::sin(a), hh);
          pts.emplace_back(rr * std::cos(a), rr * std::sin(a), -hh);
        }
      }
      break;
    }
  }
  return pts;
}

std::vector<ContactProbe> geom_contact_probes(const GeomDef& geom) {
  std::vector<ContactProbe> probes;
  switch (geom.type) {
    case GeomType::kNone:
      break;
    case GeomType::kSphere:
      probes.push_back({geom.offset, geom.params[0]});
      break;
    case GeomType::kCapsule: {
      const double half = 0.5 * geom.params[1];
      for (double s : {-1.0, 0.0, 1.0})
        probes.push_back({geom.offset + s * half * geom.axis, geom.params[0]});
      break;
    }
    case GeomType::kBox: {
      for (double sx : {-1.0, 1.0})
        for (double sy : {-1.0, 1.0})
          for (double sz : {-1.0, 1.0})
            probes.push_back(
                {geom.offset + Vec3(sx * geom.params[0], sy * geom.params[1], sz * geom.params[2]),
                 0.0});
      break;
    }
  }
  return probes;
}

std::vector<Vec3> geom_surface_points(const GeomDef& geom, double spacing) {
  std::vector<Vec3> pts;
  switch (geom.type) {
    case GeomType::kNone:
      return pts;
    case GeomType::kSphere:
      pts = primitive_surface_points(PrimitiveType::kSphere, geom.params, spacing);
      break;
    case GeomType::kBox:
      pts = primitive_surface_points(PrimitiveType::kBox, geom.params, spacing);
      break;
    case GeomType::kCapsule: {
      // Cylinder side plus hemispherical caps, aligned to +z then rotated.
      const double r = geom.params[0], half = 0.5 * geom.params[1];
      const int na = std::max(6, static_cast<int>(std::ceil(2.0 * kPi * r / spacing)));
      const int nz = std::max(2, static_cast<int>(std::ceil(2.0 * half / spacing)) + 1);
      for (int iz = 0; iz < nz; ++iz) {
        const double z = -half + 2.0 * half * static_cast<double>(iz) / static_cast<double>(nz - 1);
        for (int ia = 0; ia < na; ++ia) {
          const double a = 2.0 * kPi * ia / na;
          pts.emplace_back(r * std::cos(a), r * std::sin(a), z);
        }
      }
      const int nring = std::max(1, static_cast<int>(std::ceil(0.5 * kPi * r / spacing)));
      for (int ir = 1; ir <= nring; ++ir) {
        const double phi = 0.5 * kPi * ir / nring;  // 0 = equator, pi/2 = pole
        const double rr = r * std::cos(phi), zz = r * std::sin(phi);
        const int nc = std::max(1, static_cast<int>(std::ceil(2.0 * kPi * rr / spacing)));
        for (int ia = 0; ia < nc; ++ia) {
          const double a = 2.0 * kPi * ia / nc;
          pts.emplace_back(rr * std::cos(a), rr * std::sin(a), half + zz);
          pts.emplace_back(rr * std::cos(a), rr * std::sin(a), -half - zz);
        }
      }
      break;
    }
  }
  if (geom.type == GeomType::kCapsule) {
    // Rotate +z-aligned template onto the geom axis, then offset.
    const Quat rot = Quat::FromTwoVectors(Vec3::UnitZ(), geom.axis);
    for (Vec3& p : pts) p = geom.offset + rot * p;
  } else {
    for (Vec3& p : pts) p += geom.offset;
  }
  return pts;
}

double segment_segment_sq(const Vec3& a0, const Vec3& a1, const Vec3& b0, const Vec3& b1,
                          Vec3& on_a, Vec3& on_b) {
  const Vec3 d1 = a1 - a0, d2 = b1 - b0, r = a0 - b0;
  const double aa = d1.squaredNorm(), ee = d2.squaredNorm(), f = d2.dot(r);
  double s = 0.0, t = 0.0;
  if (aa <= 1e-18 && ee <= 1e-18) {
    // both degenerate
  } else if (aa <= 1e-18) {
    t = std::clamp(f / ee, 0.0, 1.0);
  } else {
    const double c = d1.dot(r);
    if (ee <= 1e-18) {
      s = std::clamp(-c / aa, 0.0, 1.0);
    } else {
      const double b = d1.dot(d2);
      const double denom = aa * ee - b * b;
      if (denom > 1e-18) s = std::clamp((b * f - c * ee) / denom, 0.0, 1.0);
      t = (b * s + f) / ee;
      if (t < 0.0) {
        t = 0.0;
        s = std::clamp(-c / aa, 0.0, 1.0);
      } else if (t > 1.0) {
        t = 1.0;
        s = std::clamp((b - c) / aa, 0.0, 1.0);
      }
    }
  }
  on_a = a0 + s * d1;
  on_b = b0 + t * d2;
  return (on_a - on_b).squaredNorm();
}

}  // namespace dexbody

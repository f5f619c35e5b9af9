#pragma once

#include <string>
#include <vector>

#include "dexbody/mathcore.hpp"
#include "dexbody/skeleton.hpp"

namespace dexbody {

class ConfigSection;

enum class PrimitiveType { kBox, kSphere, kCylinder };

/// Manipulable rigid primitive. Box dims are half extents; sphere uses
/// dims[0] as radius; cylinder uses dims[0] radius, dims[1] half height
/// (axis +z in body frame).
struct ObjectSpec {
  PrimitiveType type = PrimitiveType::kBox;
  Vec3 dims = Vec3(0.03, 0.03, 0.03);
  double density = 1000.0;
  double mass = 0.0;            // derived: volume * density
  Vec3 inertia = Vec3::Zero();  // principal moments, body frame
  std::string name = "object";

  static ObjectSpec from_config(ConfigSection& sec);
  static ObjectSpec make(PrimitiveType type, const Vec3& dims, double density);

  double volume() const;
  /// Distance from the frame origin to the lowest surface point when the
  /// object sits axis-aligned (used to place it on a support).
  double rest_clearance() const;
};

/// Signed distance and outward unit gradient of a primitive, in its frame.
double primitive_sdf(PrimitiveType type, const Vec3& dims, const Vec3& p);
Vec3 primitive_sdf_grad(PrimitiveType type, const Vec3& dims, const Vec3& p);

/// Deterministic quasi-uniform surface samples at roughly the requested
/// spacing (meters between neighbors), in the primitive frame.
std::vector<Vec3> primitive_surface_points(PrimitiveType type, const Vec3& dims,
                                           double spacing);

/// Contact probes for a character geom: points on or inside the geom plus a
/// carrier radius; the probe surface is the sphere (point, radius).
struct ContactProbe {
  Vec3 local;  // in the joint frame
  double radius = 0.0;
};
std::vector<ContactProbe> geom_contact_probes(const GeomDef& geom);

/// Surface samples of a character geom in the joint frame (metrics use
/// these to measure hand-object proximity and penetration).
std::vector<Vec3> geom_surface_points(const GeomDef& geom, double spacing);

/// Closest points between two segments; returns squared distance and the
/// witness points. Used for finger-finger capsule contacts.
double segment_segment_sq(const Vec3& a0, const Vec3& a1, const Vec3& b0,
                          const Vec3& b1, Vec3& on_a, Vec3& on_b);

}  // namespace dexbody

#pragma once

#include <numbers>

#include "salgail/image.hpp"

namespace salgail {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kDegToRad = kPi / 180.0;
inline constexpr double kRadToDeg = 180.0 / kPi;

/// Head orientation on the unit sphere: latitude (pitch) in [-90, 90] and
/// longitude (yaw) in [-180, 180), both in degrees.
struct SpherePoint {
  double lat = 0.0;
  double lon = 0.0;
};

/// Equirectangular pixel position, origin at the lower-left corner.
struct PixelCoord {
  double x = 0.0;
  double y = 0.0;
};

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

/// Wraps longitude into [-180, 180). Latitudes past a pole are reflected
/// back and the longitude is moved to the opposite meridian.
SpherePoint canonicalize(SpherePoint p);

double wrap_longitude(double lon);

/// Great-circle angle in radians (haversine form).
double spherical_delta(SpherePoint a, SpherePoint b);

/// Great-circle arc length on a sphere of the given radius.
double orthodromic_distance(SpherePoint a, SpherePoint b, double radius);

inline double angular_distance_deg(SpherePoint a, SpherePoint b) {
  return spherical_delta(a, b) * kRadToDeg;
}

PixelCoord to_equirect(SpherePoint p, int width, int height);

/// Exact inverse of to_equirect. x == width maps to lon == 180 so the round
/// trip stays the identity; canonicalize() the result if needed.
SpherePoint from_equirect(PixelCoord px, int width, int height);

Vec3 to_unit_vector(SpherePoint p);
SpherePoint from_unit_vector(Vec3 v);

/// Local tangent frame at p: east (+lon) and north (+lat) unit vectors.
void tangent_frame(SpherePoint p, Vec3& east, Vec3& north);

/// Moves along the great circle leaving p with the given direction
/// (0 = +lon, 90 = +lat, counted towards +lat) for arc_deg degrees.
SpherePoint move_along(SpherePoint p, double direction_deg, double arc_deg);

enum class Interp { Bilinear, Nearest };

struct ViewportSpec {
  double fov_h_deg = 90.0;
  double fov_v_deg = 90.0;
  int out_w = 84;
  int out_h = 84;
  Interp interp = Interp::Bilinear;
};

void validate(const ViewportSpec& spec);

/// Gnomonic (rectilinear) view of an equirectangular image centred on
/// `center`. Output keeps the image's channel count.
ImagePatch extract_viewport(const EquirectImage& image, SpherePoint center,
                            const ViewportSpec& spec);

/// Fractional column/row of a sphere point in pixel-center coordinates.
void sphere_to_sample_coords(SpherePoint p, int width, int height, double& u, double& v);

}  // namespace salgail

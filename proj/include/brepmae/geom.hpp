#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "brepmae/error.hpp"

namespace brepmae {

struct Vec3 {
  double x = 0, y = 0, z = 0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm() const { return std::sqrt(dot(*this)); }
  Vec3 normalized() const {
    double n = norm();
    return n > 0 ? Vec3{x / n, y / n, z / n} : Vec3{};
  }
  bool operator==(const Vec3&) const = default;
};

struct Frame {
  Vec3 origin;
  Vec3 ax_x{1, 0, 0}, ax_y{0, 1, 0}, ax_z{0, 0, 1};

  Vec3 to_world_point(const Vec3& local) const {
    return origin + ax_x * local.x + ax_y * local.y + ax_z * local.z;
  }
  Vec3 to_world_dir(const Vec3& local) const {
    return ax_x * local.x + ax_y * local.y + ax_z * local.z;
  }
  Vec3 to_local_point(const Vec3& world) const {
    Vec3 d = world - origin;
    return {d.dot(ax_x), d.dot(ax_y), d.dot(ax_z)};
  }
  // axes orthonormal within tol
  bool orthonormal(double tol = 1e-9) const;
  bool operator==(const Frame&) const = default;
};

struct UvDomain {
  double u_min = 0, u_max = 1, v_min = 0, v_max = 1;
  double u_span() const { return u_max - u_min; }
  double v_span() const { return v_max - v_min; }
  bool operator==(const UvDomain&) const = default;
};

// one-hot order follows the face attribute table: plane..nurbs
enum class SurfaceKind { Plane, Cylinder, Cone, Sphere, Torus, Nurbs };
constexpr int kNumSurfaceKinds = 6;

// Uniform sample grid over the UV domain carrying point + normal per node.
struct SampleGrid {
  int nu = 0, nv = 0;
  std::vector<double> points;   // nu*nv*3, row-major (iu,iv)
  std::vector<double> normals;  // nu*nv*3
  bool operator==(const SampleGrid&) const = default;
};

struct SurfaceSpec {
  SurfaceKind kind = SurfaceKind::Plane;
  Frame frame;
  double radius = 0;        // cylinder, cone (at v=0), sphere
  double half_angle = 0;    // cone
  double major_radius = 0;  // torus
  double minor_radius = 0;  // torus
  UvDomain uv_domain;
  bool periodic_u = false, periodic_v = false;
  std::optional<SampleGrid> grid;  // required for nurbs
  bool operator==(const SurfaceSpec&) const = default;
};

// one-hot order follows the edge attribute table: circle..offset
enum class CurveKind {
  Circle,
  Line,
  Ellipse,
  Parabola,
  Hyperbola,
  Closed,
  Bezier,
  Bspline,
  Rbs,
  Offset
};
constexpr int kNumCurveKinds = 10;

struct SampleList {
  std::vector<double> points;    // n*3
  std::vector<double> tangents;  // n*3
  int count() const { return static_cast<int>(points.size() / 3); }
  bool operator==(const SampleList&) const = default;
};

struct CurveSpec {
  CurveKind kind = CurveKind::Line;
  Frame frame;
  double scale = 1;         // line: length per unit t
  double radius = 0;        // circle
  double major_radius = 0;  // ellipse
  double minor_radius = 0;  // ellipse
  double t_min = 0, t_max = 1;
  std::optional<SampleList> samples;  // required beyond line/circle/ellipse
  bool operator==(const CurveSpec&) const = default;
};

struct TrimLoop {
  std::vector<std::array<double, 2>> uv;  // implicit closure, first != last
  bool inner = false;
  bool operator==(const TrimLoop&) const = default;
};

struct Face {
  int id = 0;
  SurfaceSpec surface;
  std::vector<TrimLoop> loops;  // exactly one outer
  std::optional<int> label;
  bool operator==(const Face&) const = default;
};

enum class Convexity { Concave, Convex, Smooth };

struct Edge {
  int id = 0;
  CurveSpec curve;
  int left_face = 0, right_face = 0;
  Convexity convexity = Convexity::Convex;
  bool operator==(const Edge&) const = default;
};

struct Solid {
  std::string name;
  std::string units;
  std::vector<Face> faces;
  std::vector<Edge> edges;

  int face_index(int face_id) const;  // -1 when absent
  bool operator==(const Solid&) const = default;
};

struct SurfaceSample {
  Vec3 point;
  Vec3 normal;  // unit
};

struct CurveSample {
  Vec3 point;
  Vec3 tangent;  // unit, direction of increasing t
};

struct Aabb {
  Vec3 lo{1e300, 1e300, 1e300};
  Vec3 hi{-1e300, -1e300, -1e300};
  void grow(const Vec3& p);
  Vec3 center() const { return (lo + hi) * 0.5; }
  Vec3 half_extent() const { return (hi - lo) * 0.5; }
  bool empty() const { return lo.x > hi.x; }
};

// ---- evaluation ------------------------------------------------------------

// Exact analytic point + outward unit normal; nurbs surfaces are evaluated by
// bilinear interpolation of their precomputed grid. Periodic directions wrap.
SurfaceSample eval_surface(const SurfaceSpec& spec, double u, double v);
// Point + first partials (for quadrature); analytic per kind.
void eval_surface_partials(const SurfaceSpec& spec, double u, double v, Vec3& point,
                           Vec3& dpu, Vec3& dpv);
CurveSample eval_curve(const CurveSpec& spec, double t);

// Closed-form UV preimage of a point lying on the surface; throws
// PreimageError when the point is farther than 1e-6 from the surface.
void surface_uv_preimage(const SurfaceSpec& spec, const Vec3& point, double& u, double& v);

// ---- trimming --------------------------------------------------------------

// Even-odd test: inside the outer loop and outside every inner loop.
// Points within 1e-9 (UV distance) of any loop segment count as inside.
bool point_in_trim(const Face& face, double u, double v);

// ---- integral properties ----------------------------------------------------

inline constexpr int kAreaGrid = 20;     // midpoint quadrature subgrid
inline constexpr int kGaussOrder = 32;   // curve length quadrature

double face_area(const Face& face);
Vec3 face_centroid(const Face& face);
// center (3) + half extents (3) over in-trim samples of a 20x20 inclusive grid
std::array<double, 6> face_aabb_geom(const Face& face);
double curve_length(const Edge& edge);

Aabb solid_aabb(const Solid& s);

// ---- normalization -----------------------------------------------------------

// Translate the AABB min corner to the origin, then scale uniformly so the
// largest extent is exactly 1. Idempotent.
Solid normalize_solid(const Solid& s);

}  // namespace brepmae

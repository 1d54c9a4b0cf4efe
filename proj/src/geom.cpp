#include "brepmae/geom.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace brepmae {

namespace {

constexpr double kDomainTol = 1e-9;
constexpr double kBoundaryTol = 1e-9;

double positive_fmod(double x, double m) {
  double r = std::fmod(x, m);
  return r < 0 ? r + m : r;
}

// wrap/validate one parameter against its domain slice
double resolve_param(double x, double lo, double hi, bool periodic, const char* which) {
  if (periodic) {
    double span = hi - lo;
    double w = lo + positive_fmod(x - lo, span);
    // keep exact hits on the upper bound (inclusive endpoint sampling)
    if (std::fabs(x - hi) < kDomainTol) w = hi;
    return w;
  }
  if (x < lo - kDomainTol || x > hi + kDomainTol)
    throw DomainError(std::string("parameter ") + which + "=" + std::to_string(x) +
                      " outside [" + std::to_string(lo) + "," + std::to_string(hi) + "]");
  return std::clamp(x, lo, hi);
}

void bilerp_grid(const SampleGrid& g, const UvDomain& dom, double u, double v,
                 Vec3& point, Vec3& normal) {
  double fu = (u - dom.u_min) / dom.u_span() * (g.nu - 1);
  double fv = (v - dom.v_min) / dom.v_span() * (g.nv - 1);
  int iu = std::clamp(static_cast<int>(std::floor(fu)), 0, g.nu - 2);
  int iv = std::clamp(static_cast<int>(std::floor(fv)), 0, g.nv - 2);
  double au = std::clamp(fu - iu, 0.0, 1.0);
  double av = std::clamp(fv - iv, 0.0, 1.0);
  auto fetch = [&](const std::vector<double>& d, int i, int j) {
    size_t k = (static_cast<size_t>(i) * g.nv + j) * 3;
    return Vec3{d[k], d[k + 1], d[k + 2]};
  };
  auto blend = [&](const std::vector<double>& d) {
    Vec3 p00 = fetch(d, iu, iv), p10 = fetch(d, iu + 1, iv);
    Vec3 p01 = fetch(d, iu, iv + 1), p11 = fetch(d, iu + 1, iv + 1);
    return p00 * ((1 - au) * (1 - av)) + p10 * (au * (1 - av)) +
           p01 * ((1 - au) * av) + p11 * (au * av);
  };
  point = blend(g.points);
  normal = blend(g.normals).normalized();
}

}  // namespace

bool Frame::orthonormal(double tol) const {
  auto unit = [tol](const Vec3& a) { return std::fabs(a.norm() - 1.0) < tol; };
  return unit(ax_x) && unit(ax_y) && unit(ax_z) && std::fabs(ax_x.dot(ax_y)) < tol &&
         std::fabs(ax_y.dot(ax_z)) < tol && std::fabs(ax_x.dot(ax_z)) < tol;
}

int Solid::face_index(int face_id) const {
  for (size_t i = 0; i < faces.size(); ++i)
    if (faces[i].id == face_id) return static_cast<int>(i);
  return -1;
}

void Aabb::grow(const Vec3& p) {
  lo.x = std::min(lo.x, p.x);
  lo.y = std::min(lo.y, p.y);
  lo.z = std::min(lo.z, p.z);
  hi.x = std::max(hi.x, p.x);
  hi.y = std::max(hi.y, p.y);
  hi.z = std::max(hi.z, p.z);
}

// ---- surface evaluation ------------------------------------------------------

SurfaceSample eval_surface(const SurfaceSpec& spec, double u, double v) {
  const UvDomain& d = spec.uv_domain;
  u = resolve_param(u, d.u_min, d.u_max, spec.periodic_u, "u");
  v = resolve_param(v, d.v_min, d.v_max, spec.periodic_v, "v");
  const Frame& f = spec.frame;
  switch (spec.kind) {
    case SurfaceKind::Plane:
      return {f.to_world_point({u, v, 0}), f.ax_z};
    case SurfaceKind::Cylinder: {
      double cu = std::cos(u), su = std::sin(u);
      return {f.to_world_point({spec.radius * cu, spec.radius * su, v}),
              f.to_world_dir({cu, su, 0})};
    }
    case SurfaceKind::Cone: {
      double cu = std::cos(u), su = std::sin(u);
      double ca = std::cos(spec.half_angle), sa = std::sin(spec.half_angle);
      double rho = spec.radius + v * sa;
      return {f.to_world_point({rho * cu, rho * su, v * ca}),
              f.to_world_dir({ca * cu, ca * su, -sa})};
    }
    case SurfaceKind::Sphere: {
      double cu = std::cos(u), su = std::sin(u), cv = std::cos(v), sv = std::sin(v);
      Vec3 n{cv * cu, cv * su, sv};
      return {f.to_world_point(n * spec.radius), f.to_world_dir(n)};
    }
    case SurfaceKind::Torus: {
      double cu = std::cos(u), su = std::sin(u), cv = std::cos(v), sv = std::sin(v);
      double rho = spec.major_radius + spec.minor_radius * cv;
      return {f.to_world_point({rho * cu, rho * su, spec.minor_radius * sv}),
              f.to_world_dir({cv * cu, cv * su, sv})};
    }
    case SurfaceKind::Nurbs: {
      if (!spec.grid)
        throw UnsupportedKind("nurbs surface without precomputed grid");
      Vec3 p, n;
      bilerp_grid(*spec.grid, d, u, v, p, n);
      return {p, n};
    }
  }
  throw UnsupportedKind("unknown surface kind");
}

void eval_surface_partials(const SurfaceSpec& spec, double u, double v, Vec3& point,
                           Vec3& dpu, Vec3& dpv) {
  const Frame& f = spec.frame;
  switch (spec.kind) {
    case SurfaceKind::Plane:
      point = f.to_world_point({u, v, 0});
      dpu = f.ax_x;
      dpv = f.ax_y;
      return;
    case SurfaceKind::Cylinder: {
      double cu = std::cos(u), su = std::sin(u);
      point = f.to_world_point({spec.radius * cu, spec.radius * su, v});
      dpu = f.to_world_dir({-spec.radius * su, spec.radius * cu, 0});
      dpv = f.ax_z;
      return;
    }
    case SurfaceKind::Cone: {
      double cu = std::cos(u), su = std::sin(u);
      double ca = std::cos(spec.half_angle), sa = std::sin(spec.half_angle);
      double rho = spec.radius + v * sa;
      point = f.to_world_point({rho * cu, rho * su, v * ca});
      dpu = f.to_world_dir({-rho * su, rho * cu, 0});
      dpv = f.to_world_dir({sa * cu, sa * su, ca});
      return;
    }
    case SurfaceKind::Sphere: {
      double cu = std::cos(u), su = std::sin(u), cv = std::cos(v), sv = std::sin(v);
      point = f.to_world_point(Vec3{cv * cu, cv * su, sv} * spec.radius);
      dpu = f.to_world_dir({-spec.radius * cv * su, spec.radius * cv * cu, 0});
      dpv = f.to_world_dir(
          {-spec.radius * sv * cu, -spec.radius * sv * su, spec.radius * cv});
      return;
    }
    case SurfaceKind::Torus: {
      double cu = std::cos(u), su = std::sin(u), cv = std::cos(v), sv = std::sin(v);
      double rho = spec.major_radius + spec.minor_radius * cv;
      point = f.to_world_point({rho * cu, rho * su, spec.minor_radius * sv});
      dpu = f.to_world_dir({-rho * su, rho * cu, 0});
      dpv = f.to_world_dir({-spec.minor_radius * sv * cu, -spec.minor_radius * sv * su,
                            spec.minor_radius * cv});
      return;
    }
    case SurfaceKind::Nurbs: {
      if (!spec.grid) throw UnsupportedKind("nurbs surface without precomputed grid");
      const UvDomain& d = spec.uv_domain;
      double hu = d.u_span() * 1e-6, hv = d.v_span() * 1e-6;
      Vec3 n;
      bilerp_grid(*spec.grid, d, u, v, point, n);
      Vec3 pu1, pu0, pv1, pv0;
      bilerp_grid(*spec.grid, d, std::min(u + hu, d.u_max), v, pu1, n);
      bilerp_grid(*spec.grid, d, std::max(u - hu, d.u_min), v, pu0, n);
      bilerp_grid(*spec.grid, d, u, std::min(v + hv, d.v_max), pv1, n);
      bilerp_grid(*spec.grid, d, u, std::max(v - hv, d.v_min), pv0, n);
      dpu = (pu1 - pu0) * (1.0 / (2 * hu));
      dpv = (pv1 - pv0) * (1.0 / (2 * hv));
      return;
    }
  }
  throw UnsupportedKind("unknown surface kind");
}

// ---- curve evaluation ----------------------------------------------------------

CurveSample eval_curve(const CurveSpec& spec, double t) {
  if (t < spec.t_min - kDomainTol || t > spec.t_max + kDomainTol)
    throw DomainError("curve parameter t=" + std::to_string(t) + " outside [" +
                      std::to_string(spec.t_min) + "," + std::to_string(spec.t_max) + "]");
  t = std::clamp(t, spec.t_min, spec.t_max);
  const Frame& f = spec.frame;
  switch (spec.kind) {
    case CurveKind::Line:
      return {f.to_world_point({t * spec.scale, 0, 0}), f.ax_x};
    case CurveKind::Circle: {
      double ct = std::cos(t), st = std::sin(t);
      return {f.to_world_point({spec.radius * ct, spec.radius * st, 0}),
              f.to_world_dir({-st, ct, 0})};
    }
    case CurveKind::Ellipse: {
      double ct = std::cos(t), st = std::sin(t);
      Vec3 tangent =
          f.to_world_dir({-spec.major_radius * st, spec.minor_radius * ct, 0});
      return {f.to_world_point({spec.major_radius * ct, spec.minor_radius * st, 0}),
              tangent.normalized()};
    }
    default: {
      if (!spec.samples || spec.samples->count() < 2)
        throw UnsupportedKind("curve kind requires precomputed samples");
      const SampleList& s = *spec.samples;
      int n = s.count();
      double frac = (t - spec.t_min) / (spec.t_max - spec.t_min) * (n - 1);
      int i = std::clamp(static_cast<int>(std::floor(frac)), 0, n - 2);
      double a = std::clamp(frac - i, 0.0, 1.0);
      auto fetch = [](const std::vector<double>& d, int k) {
        return Vec3{d[3 * k], d[3 * k + 1], d[3 * k + 2]};
      };
      Vec3 p = fetch(s.points, i) * (1 - a) + fetch(s.points, i + 1) * a;
      Vec3 tg = fetch(s.tangents, i) * (1 - a) + fetch(s.tangents, i + 1) * a;
      return {p, tg.normalized()};
    }
  }
}

// ---- preimage -------------------------------------------------------------------

void surface_uv_preimage(const SurfaceSpec& spec, const Vec3& point, double& u,
                         double& v) {
  const Frame& f = spec.frame;
  Vec3 p = f.to_local_point(point);
  switch (spec.kind) {
    case SurfaceKind::Plane:
      u = p.x;
      v = p.y;
      break;
    case SurfaceKind::Cylinder:
      u = std::atan2(p.y, p.x);
      v = p.z;
      break;
    case SurfaceKind::Cone: {
      double ca = std::cos(spec.half_angle);
      u = std::atan2(p.y, p.x);
      v = p.z / ca;
      break;
    }
    case SurfaceKind::Sphere: {
      u = std::atan2(p.y, p.x);
      v = std::asin(std::clamp(p.z / spec.radius, -1.0, 1.0));
      break;
    }
    case SurfaceKind::Torus: {
      u = std::atan2(p.y, p.x);
      double rho = std::hypot(p.x, p.y);
      v = std::atan2(p.z, rho - spec.major_radius);
      break;
    }
    case SurfaceKind::Nurbs: {
      if (!spec.grid) throw UnsupportedKind("nurbs surface without precomputed grid");
      const SampleGrid& g = *spec.grid;
      double best = 1e300;
      int bu = 0, bv = 0;
      for (int i = 0; i < g.nu; ++i)
        for (int j = 0; j < g.nv; ++j) {
          size_t k = (static_cast<size_t>(i) * g.nv + j) * 3;
          Vec3 q{g.points[k], g.points[k + 1], g.points[k + 2]};
          double dist = (q - point).norm();
          if (dist < best) {
            best = dist;
            bu = i;
            bv = j;
          }
        }
      const UvDomain& d = spec.uv_domain;
      u = d.u_min + d.u_span() * bu / (g.nu - 1);
      v = d.v_min + d.v_span() * bv / (g.nv - 1);
      break;
    }
    default:
      throw UnsupportedKind("unknown surface kind");
  }
  // wrap periodic params into the face domain
  const UvDomain& d = spec.uv_domain;
  if (spec.periodic_u && d.u_span() > 0) u = d.u_min + positive_fmod(u - d.u_min, d.u_span());
  if (spec.periodic_v && d.v_span() > 0) v = d.v_min + positive_fmod(v - d.v_min, d.v_span());
  SurfaceSample check = eval_surface(spec, std::clamp(u, d.u_min, d.u_max),
                                     std::clamp(v, d.v_min, d.v_max));
  if ((check.point - point).norm() > 1e-6)
    throw PreimageError("point is not on the surface (distance " +
                        std::to_string((check.point - point).norm()) + ")");
}

// ---- trimming ---------------------------------------------------------------------

namespace {

double point_segment_dist(double px, double py, double ax, double ay, double bx,
                          double by) {
  double dx = bx - ax, dy = by - ay;
  double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((px - ax) * dx + (py - ay) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  double qx = ax + t * dx, qy = ay + t * dy;
  return std::hypot(px - qx, py - qy);
}

bool on_loop_boundary(const TrimLoop& loop, double u, double v) {
  size_t n = loop.uv.size();
  for (size_t i = 0; i < n; ++i) {
    const auto& a = loop.uv[i];
    const auto& b = loop.uv[(i + 1) % n];
    if (point_segment_dist(u, v, a[0], a[1], b[0], b[1]) < kBoundaryTol) return true;
  }
  return false;
}

bool even_odd_inside(const TrimLoop& loop, double u, double v) {
  bool inside = false;
  size_t n = loop.uv.size();
  for (size_t i = 0, j = n - 1; i < n; j = i++) {
    double xi = loop.uv[i][0], yi = loop.uv[i][1];
    double xj = loop.uv[j][0], yj = loop.uv[j][1];
    if ((yi > v) != (yj > v)) {
      double x_int = xi + (v - yi) * (xj - xi) / (yj - yi);
      if (u < x_int) inside = !inside;
    }
  }
  return inside;
}

}  // namespace

bool point_in_trim(const Face& face, double u, double v) {
  const TrimLoop* outer = nullptr;
  for (const auto& loop : face.loops)
    if (!loop.inner) outer = &loop;
  if (!outer) return false;
  if (on_loop_boundary(*outer, u, v)) return true;
  if (!even_odd_inside(*outer, u, v)) return false;
  for (const auto& loop : face.loops) {
    if (!loop.inner) continue;
    if (on_loop_boundary(loop, u, v)) return true;  // boundary counts as inside
    if (even_odd_inside(loop, u, v)) return false;
  }
  return true;
}

// ---- integral properties -------------------------------------------------------

double face_area(const Face& face) {
  const UvDomain& d = face.surface.uv_domain;
  double du = d.u_span() / kAreaGrid, dv = d.v_span() / kAreaGrid;
  double area = 0.0;
  for (int i = 0; i < kAreaGrid; ++i) {
    double u = d.u_min + (i + 0.5) * du;
    for (int j = 0; j < kAreaGrid; ++j) {
      double v = d.v_min + (j + 0.5) * dv;
      if (!point_in_trim(face, u, v)) continue;
      Vec3 p, pu, pv;
      eval_surface_partials(face.surface, u, v, p, pu, pv);
      area += pu.cross(pv).norm() * du * dv;
    }
  }
  return area;
}

Vec3 face_centroid(const Face& face) {
  const UvDomain& d = face.surface.uv_domain;
  double du = d.u_span() / kAreaGrid, dv = d.v_span() / kAreaGrid;
  Vec3 acc;
  double total = 0.0;
  Vec3 acc_all;
  int count_all = 0;
  for (int i = 0; i < kAreaGrid; ++i) {
    double u = d.u_min + (i + 0.5) * du;
    for (int j = 0; j < kAreaGrid; ++j) {
      double v = d.v_min + (j + 0.5) * dv;
      Vec3 p, pu, pv;
      eval_surface_partials(face.surface, u, v, p, pu, pv);
      acc_all = acc_all + p;
      ++count_all;
      if (!point_in_trim(face, u, v)) continue;
      double w = pu.cross(pv).norm() * du * dv;
      acc = acc + p * w;
      total += w;
    }
  }
  if (total <= 0) return acc_all * (1.0 / count_all);  // fully trimmed face
  return acc * (1.0 / total);
}

std::array<double, 6> face_aabb_geom(const Face& face) {
  const UvDomain& d = face.surface.uv_domain;
  Aabb box, box_all;
  for (int i = 0; i < kAreaGrid; ++i) {
    double u = d.u_min + d.u_span() * i / (kAreaGrid - 1);
    for (int j = 0; j < kAreaGrid; ++j) {
      double v = d.v_min + d.v_span() * j / (kAreaGrid - 1);
      SurfaceSample s = eval_surface(face.surface, u, v);
      box_all.grow(s.point);
      if (point_in_trim(face, u, v)) box.grow(s.point);
    }
  }
  if (box.empty()) box = box_all;
  Vec3 c = box.center(), h = box.half_extent();
  return {c.x, c.y, c.z, h.x, h.y, h.z};
}

namespace {

// nodes/weights for 32-point Gauss-Legendre on [-1,1] (symmetric halves)
const double kGaussX[16] = {
    0.0483076656877383162348126, 0.1444719615827964934851864, 0.2392873622521370745446032,
    0.3318686022821276497799168, 0.4213512761306353453641194, 0.5068999089322293900237475,
    0.5877157572407623290407455, 0.6630442669302152009751152, 0.7321821187402896803874267,
    0.7944837959679424069630973, 0.8493676137325699701336930, 0.8963211557660521239653072,
    0.9349060759377396891709191, 0.9647622555875064307738119, 0.9856115115452683354001750,
    0.9972638618494815635449811};
const double kGaussW[16] = {
    0.0965400885147278005667648, 0.0956387200792748594190820, 0.0938443990808045656391802,
    0.0911738786957638847128686, 0.0876520930044038111427715, 0.0833119242269467552221991,
    0.0781938957870703064717409, 0.0723457941088485062253994, 0.0658222227763618468376501,
    0.0586840934785355471452836, 0.0509980592623761761961632, 0.0428358980222266806568786,
    0.0342738629130214331026877, 0.0253920653092620594557526, 0.0162743947309056706051706,
    0.0070186100094700966004071};

double gauss32(double a, double b, const std::function<double(double)>& f) {
  double mid = 0.5 * (a + b), half = 0.5 * (b - a);
  double acc = 0.0;
  for (int i = 0; i < 16; ++i) {
    acc += kGaussW[i] * (f(mid - half * kGaussX[i]) + f(mid + half * kGaussX[i]));
  }
  return acc * half;
}

}  // namespace

double curve_length(const Edge& edge) {
  const CurveSpec& c = edge.curve;
  double span = c.t_max - c.t_min;
  switch (c.kind) {
    case CurveKind::Line:
      return std::fabs(c.scale) * span;
    case CurveKind::Circle:
      return c.radius * span;
    case CurveKind::Ellipse:
      return gauss32(c.t_min, c.t_max, [&c](double t) {
        double dx = -c.major_radius * std::sin(t);
        double dy = c.minor_radius * std::cos(t);
        return std::hypot(dx, dy);
      });
    default: {
      if (!c.samples || c.samples->count() < 2)
        throw UnsupportedKind("curve kind requires precomputed samples");
      // exact arc length of the piecewise-linear interpolant
      const auto& pts = c.samples->points;
      double len = 0.0;
      for (int i = 0; i + 1 < c.samples->count(); ++i) {
        Vec3 a{pts[3 * i], pts[3 * i + 1], pts[3 * i + 2]};
        Vec3 b{pts[3 * i + 3], pts[3 * i + 4], pts[3 * i + 5]};
        len += (b - a).norm();
      }
      return len;
    }
  }
}

Aabb solid_aabb(const Solid& s) {
  Aabb box;
  for (const Face& face : s.faces) {
    auto ab = face_aabb_geom(face);
    box.grow({ab[0] - ab[3], ab[1] - ab[4], ab[2] - ab[5]});
    box.grow({ab[0] + ab[3], ab[1] + ab[4], ab[2] + ab[5]});
  }
  return box;
}

// ---- normalization ----------------------------------------------------------------

namespace {

Vec3 transform_point(const Vec3& p, const Vec3& shift, double s) {
  return (p - shift) * s;
}

void transform_surface(SurfaceSpec& spec, const Vec3& shift, double s) {
  spec.frame.origin = transform_point(spec.frame.origin, shift, s);
  switch (spec.kind) {
    case SurfaceKind::Plane:
      spec.uv_domain.u_min *= s;
      spec.uv_domain.u_max *= s;
      spec.uv_domain.v_min *= s;
      spec.uv_domain.v_max *= s;
      break;
    case SurfaceKind::Cylinder:
      spec.radius *= s;
      spec.uv_domain.v_min *= s;
      spec.uv_domain.v_max *= s;
      break;
    case SurfaceKind::Cone:
      spec.radius *= s;
      spec.uv_domain.v_min *= s;
      spec.uv_domain.v_max *= s;
      break;
    case SurfaceKind::Sphere:
      spec.radius *= s;
      break;
    case SurfaceKind::Torus:
      spec.major_radius *= s;
      spec.minor_radius *= s;
      break;
    case SurfaceKind::Nurbs:
      break;  // parameter space untouched; grid points transformed below
  }
  if (spec.grid) {
    auto& pts = spec.grid->points;
    for (size_t k = 0; k < pts.size(); k += 3) {
      Vec3 p = transform_point({pts[k], pts[k + 1], pts[k + 2]}, shift, s);
      pts[k] = p.x;
      pts[k + 1] = p.y;
      pts[k + 2] = p.z;
    }
  }
}

// UV trim coordinates follow the same scaling as the surface's uv domain.
void transform_loops(Face& face, double s) {
  bool scale_u = false, scale_v = false;
  switch (face.surface.kind) {
    case SurfaceKind::Plane:
      scale_u = scale_v = true;
      break;
    case SurfaceKind::Cylinder:
    case SurfaceKind::Cone:
      scale_v = true;
      break;
    default:
      break;
  }
  if (!scale_u && !scale_v) return;
  for (auto& loop : face.loops)
    for (auto& p : loop.uv) {
      if (scale_u) p[0] *= s;
      if (scale_v) p[1] *= s;
    }
}

void transform_curve(CurveSpec& c, const Vec3& shift, double s) {
  c.frame.origin = transform_point(c.frame.origin, shift, s);
  switch (c.kind) {
    case CurveKind::Line:
      c.scale *= s;
      break;
    case CurveKind::Circle:
      c.radius *= s;
      break;
    case CurveKind::Ellipse:
      c.major_radius *= s;
      c.minor_radius *= s;
      break;
    default:
      break;
  }
  if (c.samples) {
    auto& pts = c.samples->points;
    for (size_t k = 0; k < pts.size(); k += 3) {
      Vec3 p = transform_point({pts[k], pts[k + 1], pts[k + 2]}, shift, s);
      pts[k] = p.x;
      pts[k + 1] = p.y;
      pts[k + 2] = p.z;
    }
  }
}

}  // namespace

Solid normalize_solid(const Solid& s) {
  Aabb box = solid_aabb(s);
  if (box.empty()) throw DegenerateExtent("solid has no spatial extent");
  Vec3 ext = box.hi - box.lo;
  double max_ext = std::max({ext.x, ext.y, ext.z});
  if (max_ext < 1e-12) throw DegenerateExtent("solid AABB extent is zero");
  double scale = 1.0 / max_ext;
  Solid out = s;
  for (Face& face : out.faces) {
    transform_surface(face.surface, box.lo, scale);
    transform_loops(face, scale);
  }
  for (Edge& edge : out.edges) transform_curve(edge.curve, box.lo, scale);
  return out;
}

}  // namespace brepmae

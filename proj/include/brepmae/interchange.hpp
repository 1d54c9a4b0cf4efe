#pragma once

#include <string>

#include "brepmae/geom.hpp"

namespace brepmae {

// One JSON document per solid. Parsing is strict: unknown fields and missing
// required fields raise SchemaError carrying the JSON path; edges referencing
// nonexistent face ids raise ReferenceError. Serialization round-trips every
// double bit-exactly.
Solid parse_solid(const std::string& bytes);
std::string serialize_solid(const Solid& s);

Solid load_solid_file(const std::string& path);
void save_solid_file(const Solid& s, const std::string& path);

const char* surface_kind_name(SurfaceKind k);
const char* curve_kind_name(CurveKind k);
const char* convexity_name(Convexity c);

}  // namespace brepmae

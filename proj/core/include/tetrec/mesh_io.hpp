#pragma once

#include "tetrec/mesh.hpp"

#include <string>

namespace tetrec {

/// Loads .obj (ASCII v/f records) or .ply (ASCII or binary little-endian).
/// Vertex order is preserved. Throws ParseError / TopologyError.
TriMesh load_mesh(const std::string& path);

/// Saves by extension. Coordinates round-trip bit-exactly through both
/// formats (OBJ uses 17 significant digits, binary PLY stores f64).
void save_mesh(const TriMesh& mesh, const std::string& path);

enum class PlyEncoding { BinaryLittleEndian, Ascii };
void save_ply(const TriMesh& mesh, const std::string& path,
              PlyEncoding encoding = PlyEncoding::BinaryLittleEndian);

} // namespace tetrec

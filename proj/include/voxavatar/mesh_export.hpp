#pragma once

#include "voxavatar/voxel_field.hpp"

#include <string>

namespace vxa {

struct TriangleMesh {
    Points vertices;
    Faces faces;
    PixelArray<Scalar> colors;  // per vertex, [0,1]; may be empty

    int vertex_count() const { return int(vertices.rows()); }
    int face_count() const { return int(faces.rows()); }
};

/// Iso-surface sigma = iso of the activated density, sampled at cell centers.
/// The lattice is padded with one layer of empty cells so surfaces touching
/// the bounds still close. Vertices are shared between neighboring cubes and
/// triangles wind counter-clockwise seen from outside (low density).
TriangleMesh marching_cubes(const VoxelField& field, Scalar iso = 0.1);

/// Per-vertex colors from trilinear samples at the vertex positions (clamped
/// into the bounds), clipped to [0,1].
TriangleMesh bake_colors(TriangleMesh mesh, const VoxelField& field);

/// Area-weighted vertex normals (unit length, zero for isolated vertices).
Points vertex_normals(const TriangleMesh& mesh);

enum class MeshFormat { Obj, PlyBinary };

/// .obj or .ply by extension; throws InvalidInput otherwise.
MeshFormat mesh_format_for(const std::string& path);

/// OBJ: "v x y z r g b", "vn", "f a//a b//b c//c". PLY: binary little-endian,
/// float xyz + uchar rgb per vertex, uchar-count int index lists per face.
/// Throws IoError when the file cannot be written.
void export_mesh(const TriangleMesh& mesh, const std::string& path, MeshFormat format);

TriangleMesh load_obj(const std::string& path);
TriangleMesh load_ply(const std::string& path);

}  // namespace vxa

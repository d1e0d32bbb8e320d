#include "voxavatar/mesh_export.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace vxa {

namespace {

#include "mc_tables.inc"

constexpr int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}, {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
constexpr int kEdgeCorners[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                                     {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};

}  // namespace

TriangleMesh marching_cubes(const VoxelField& field, Scalar iso) {
    if (!(iso > 0)) throw InvalidInput("iso level must be positive");
    field.validate();
    // Padded lattice: point (a,b,c) is cell (a-1,b-1,c-1); the outer layer is empty.
    const Eigen::Array3i P = field.dims + 2;
    const auto lat = [&](int a, int b, int c) { return a + std::int64_t(P.x()) * (b + std::int64_t(P.y()) * c); };
    std::vector<Scalar> sigma(std::size_t(P.prod()), 0.0);
    for (int k = 0; k < field.dims.z(); ++k)
        for (int j = 0; j < field.dims.y(); ++j)
            for (int i = 0; i < field.dims.x(); ++i) sigma[lat(i + 1, j + 1, k + 1)] = field.sigma(field.index(i, j, k));

    const Vec3 cs = field.cell_size();
    const auto position = [&](int a, int b, int c) {
        return Vec3(field.bounds.min_corner + ((Eigen::Array3d(a, b, c) - 0.5) * cs.array()).matrix());
    };

    std::vector<Vec3> verts;
    std::vector<Eigen::Vector3i> tris;
    std::unordered_map<std::int64_t, int> weld;

    for (int c = 0; c + 1 < P.z(); ++c)
        for (int b = 0; b + 1 < P.y(); ++b)
            for (int a = 0; a + 1 < P.x(); ++a) {
                Scalar v[8];
                int cube = 0;
                for (int n = 0; n < 8; ++n) {
                    v[n] = sigma[lat(a + kCorner[n][0], b + kCorner[n][1], c + kCorner[n][2])];
                    if (v[n] < iso) cube |= 1 << n;
                }
                if (kEdgeTable[cube] == 0) continue;
                int edge_vertex[12];
                for (int e = 0; e < 12; ++e) {
                    if (!(kEdgeTable[cube] & (1 << e))) continue;
                    int n0 = kEdgeCorners[e][0], n1 = kEdgeCorners[e][1];
                    // Orient the edge from its lower lattice point so both cubes sharing it agree.
                    int axis = 0;
                    for (int d = 0; d < 3; ++d)
                        if (kCorner[n0][d] != kCorner[n1][d]) axis = d;
                    if (kCorner[n0][axis] > kCorner[n1][axis]) std::swap(n0, n1);
                    const int pa = a + kCorner[n0][0], pb = b + kCorner[n0][1], pc = c + kCorner[n0][2];
                    const std::int64_t key = lat(pa, pb, pc) * 3 + axis;
                    const auto [it, fresh] = weld.try_emplace(key, int(verts.size()));
                    if (fresh) {
                        const Scalar t = (iso - v[n0]) / (v[n1] - v[n0]);
                        const Vec3 p0 = position(pa, pb, pc);
                        const Vec3 p1 = position(a + kCorner[n1][0], b + kCorner[n1][1], c + kCorner[n1][2]);
                        verts.push_back(p0 + t * (p1 - p0));
                    }
                    edge_vertex[e] = it->second;
                }
                for (int t = 0; kTriTable[cube][t] != -1; t += 3)
                    tris.emplace_back(edge_vertex[kTriTable[cube][t]], edge_vertex[kTriTable[cube][t + 1]],
                                      edge_vertex[kTriTable[cube][t + 2]]);
            }

    TriangleMesh mesh;
    mesh.vertices.resize(Eigen::Index(verts.size()), 3);
    for (std::size_t i = 0; i < verts.size(); ++i) mesh.vertices.row(Eigen::Index(i)) = verts[i].transpose();
    mesh.faces.resize(Eigen::Index(tris.size()), 3);
    for (std::size_t i = 0; i < tris.size(); ++i) mesh.faces.row(Eigen::Index(i)) = tris[i].transpose();
    return mesh;
}

TriangleMesh bake_colors(TriangleMesh mesh, const VoxelField& field) {
    mesh.colors.resize(mesh.vertices.rows(), 3);
    for (Eigen::Index i = 0; i < mesh.vertices.rows(); ++i) {
        const Vec3 p = mesh.vertices.row(i).transpose().cwiseMax(field.bounds.min_corner).cwiseMin(field.bounds.max_corner);
        mesh.colors.row(i) = trilinear(field, p).color.transpose().array().min(1.0).max(0.0);
    }
    return mesh;
}

Points vertex_normals(const TriangleMesh& mesh) {
    Points n = Points::Zero(mesh.vertices.rows(), 3);
    for (Eigen::Index f = 0; f < mesh.faces.rows(); ++f) {
        const Vec3 a = mesh.vertices.row(mesh.faces(f, 0)).transpose();
        const Vec3 b = mesh.vertices.row(mesh.faces(f, 1)).transpose();
        const Vec3 c = mesh.vertices.row(mesh.faces(f, 2)).transpose();
        const Vec3 area_normal = (b - a).cross(c - a);
        for (int k = 0; k < 3; ++k) n.row(mesh.faces(f, k)) += area_normal.transpose();
    }
    for (Eigen::Index i = 0; i < n.rows(); ++i) {
        const Scalar len = n.row(i).norm();
        if (len > 0) n.row(i) /= len;
    }
    return n;
}

MeshFormat mesh_format_for(const std::string& path) {
    auto ends_with = [&](const char* ext) {
        const std::size_t n = std::strlen(ext);
        if (path.size() < n) return false;
        return std::equal(path.end() - std::ptrdiff_t(n), path.end(), ext,
                          [](char a, char b) { return std::tolower(static_cast<unsigned char>(a)) == b; });
    };
    if (ends_with(".obj")) return MeshFormat::Obj;
    if (ends_with(".ply")) return MeshFormat::PlyBinary;
    throw InvalidInput("unknown mesh extension for '" + path + "' (use .obj or .ply)");
}

namespace {

std::uint8_t quantize(Scalar c) { return std::uint8_t(std::lround(std::clamp(c, 0.0, 1.0) * 255.0)); }

template <typename T>
void put_le(std::string& out, T value) {
    using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>;
    const U u = std::bit_cast<U>(value);
    for (std::size_t b = 0; b < sizeof(T); ++b) out += char((u >> (8 * b)) & 0xff);
}

template <typename T>
T get_le(const char* p) {
    using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>;
    U u = 0;
    for (std::size_t b = 0; b < sizeof(T); ++b) u |= U(U(std::uint8_t(p[b])) << (8 * b));
    return std::bit_cast<T>(u);
}

void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(bytes.data(), std::streamsize(bytes.size()));
    if (!out) throw IoError("write failed for '" + path + "'");
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

void export_mesh(const TriangleMesh& mesh, const std::string& path, MeshFormat format) {
    const bool has_color = mesh.colors.rows() == mesh.vertices.rows() && mesh.vertices.rows() > 0;
    std::string out;
    if (format == MeshFormat::Obj) {
        const Points normals = vertex_normals(mesh);
        char buf[160];
        out += "# vertices " + std::to_string(mesh.vertex_count()) + "\n";
        out += "# faces " + std::to_string(mesh.face_count()) + "\n";
        for (int i = 0; i < mesh.vertex_count(); ++i) {
            if (has_color)
                std::snprintf(buf, sizeof buf, "v %.17g %.17g %.17g %.6f %.6f %.6f\n", mesh.vertices(i, 0),
                              mesh.vertices(i, 1), mesh.vertices(i, 2), mesh.colors(i, 0), mesh.colors(i, 1),
                              mesh.colors(i, 2));
            else
                std::snprintf(buf, sizeof buf, "v %.17g %.17g %.17g\n", mesh.vertices(i, 0), mesh.vertices(i, 1),
                              mesh.vertices(i, 2));
            out += buf;
        }
        for (int i = 0; i < mesh.vertex_count(); ++i) {
            std::snprintf(buf, sizeof buf, "vn %.6f %.6f %.6f\n", normals(i, 0), normals(i, 1), normals(i, 2));
            out += buf;
        }
        for (int f = 0; f < mesh.face_count(); ++f) {
            const int a = mesh.faces(f, 0) + 1, b = mesh.faces(f, 1) + 1, c = mesh.faces(f, 2) + 1;
            std::snprintf(buf, sizeof buf, "f %d//%d %d//%d %d//%d\n", a, a, b, b, c, c);
            out += buf;
        }
    } else {
        out += "ply\nformat binary_little_endian 1.0\n";
        out += "element vertex " + std::to_string(mesh.vertex_count()) + "\n";
        out += "property float x\nproperty float y\nproperty float z\n";
        out += "property uchar red\nproperty uchar green\nproperty uchar blue\n";
        out += "element face " + std::to_string(mesh.face_count()) + "\n";
        out += "property list uchar int vertex_indices\nend_header\n";
        for (int i = 0; i < mesh.vertex_count(); ++i) {
            for (int d = 0; d < 3; ++d) put_le(out, float(mesh.vertices(i, d)));
            for (int d = 0; d < 3; ++d) put_le(out, has_color ? quantize(mesh.colors(i, d)) : std::uint8_t(255));
        }
        for (int f = 0; f < mesh.face_count(); ++f) {
            put_le(out, std::uint8_t(3));
            for (int d = 0; d < 3; ++d) put_le(out, std::int32_t(mesh.faces(f, d)));
        }
    }
    write_file(path, out);
}

TriangleMesh load_obj(const std::string& path) {
    std::istringstream in(read_file(path));
    std::vector<std::array<Scalar, 6>> verts;
    std::vector<Eigen::Vector3i> faces;
    bool colored = true;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag)) continue;
        if (tag == "v") {
            std::array<Scalar, 6> v{};
            int n = 0;
            while (n < 6 && ls >> v[n]) ++n;
            if (n < 3) throw IoError(path + ":" + std::to_string(line_no) + ": malformed vertex");
            if (n < 6) colored = false;
            verts.push_back(v);
        } else if (tag == "f") {
            std::vector<int> idx;
            std::string tok;
            while (ls >> tok) {
                int i = std::stoi(tok.substr(0, tok.find('/')));
                idx.push_back(i < 0 ? int(verts.size()) + i : i - 1);
            }
            if (idx.size() < 3) throw IoError(path + ":" + std::to_string(line_no) + ": face needs 3 indices");
            for (std::size_t k = 1; k + 1 < idx.size(); ++k) faces.emplace_back(idx[0], idx[k], idx[k + 1]);
        }
    }
    TriangleMesh m;
    m.vertices.resize(Eigen::Index(verts.size()), 3);
    if (colored && !verts.empty()) m.colors.resize(Eigen::Index(verts.size()), 3);
    for (std::size_t i = 0; i < verts.size(); ++i) {
        m.vertices.row(Eigen::Index(i)) << verts[i][0], verts[i][1], verts[i][2];
        if (m.colors.rows() > 0) m.colors.row(Eigen::Index(i)) << verts[i][3], verts[i][4], verts[i][5];
    }
    m.faces.resize(Eigen::Index(faces.size()), 3);
    for (std::size_t i = 0; i < faces.size(); ++i) {
        if ((faces[i].array() < 0).any() || (faces[i].array() >= int(verts.size())).any())
            throw IoError(path + ": face index out of range");
        m.faces.row(Eigen::Index(i)) = faces[i].transpose();
    }
    return m;
}

TriangleMesh load_ply(const std::string& path) {
    const std::string data = read_file(path);
    const std::size_t end = data.find("end_header\n");
    if (data.rfind("ply\n", 0) != 0 || end == std::string::npos) throw IoError(path + ": not a PLY file");
    std::istringstream header(data.substr(0, end));
    std::string line;
    long nv = -1, nf = -1;
    bool binary_le = false;
    while (std::getline(header, line)) {
        std::istringstream ls(line);
        std::string a, b;
        ls >> a >> b;
        if (a == "format") binary_le = b == "binary_little_endian";
        if (a == "element" && b == "vertex") ls >> nv;
        if (a == "element" && b == "face") ls >> nf;
    }
    if (!binary_le || nv < 0 || nf < 0) throw IoError(path + ": unsupported PLY layout");
    const std::size_t body = end + std::strlen("end_header\n");
    const std::size_t vbytes = std::size_t(nv) * 15;
    if (data.size() < body + vbytes + std::size_t(nf) * 13) throw IoError(path + ": truncated PLY body");
    TriangleMesh m;
    m.vertices.resize(nv, 3);
    m.colors.resize(nv, 3);
    const char* p = data.data() + body;
    for (long i = 0; i < nv; ++i, p += 15) {
        for (int d = 0; d < 3; ++d) m.vertices(i, d) = get_le<float>(p + 4 * d);
        for (int d = 0; d < 3; ++d) m.colors(i, d) = std::uint8_t(p[12 + d]) / 255.0;
    }
    m.faces.resize(nf, 3);
    for (long f = 0; f < nf; ++f, p += 13) {
        if (std::uint8_t(p[0]) != 3) throw IoError(path + ": only triangle faces are supported");
        for (int d = 0; d < 3; ++d) {
            const int idx = get_le<std::int32_t>(p + 1 + 4 * d);
            if (idx < 0 || idx >= nv) throw IoError(path + ": face index out of range");
            m.faces(f, d) = idx;
        }
    }
    return m;
}

}  // namespace vxa

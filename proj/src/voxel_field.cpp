#include "voxavatar/voxel_field.hpp"

#include <bit>
#include <cstring>
#include <limits>
#include <fstream>
#include <sstream>

namespace vxa {

void Bounds::validate() const {
    if (!min_corner.allFinite() || !max_corner.allFinite()) throw InvalidInput("bounds not finite");
    if (!(max_corner.array() > min_corner.array()).all())
        throw InvalidInput("bounds max corner must exceed min corner on every axis");
}

Vec3i dims_for(const Bounds& b, Scalar target_voxels) {
    b.validate();
    const Scalar sv = voxel_size(b, target_voxels);
    const Vec3 d = b.extent();
    Vec3i dims;
    for (int a = 0; a < 3; ++a) dims[a] = std::max(2, int(std::lround(d[a] / sv)));
    return dims;
}

VoxelField::VoxelField(const Bounds& b, const Vec3i& d, Scalar raw, Scalar gray) : bounds(b), dims(d) {
    bounds.validate();
    if ((dims < 2).any()) throw InvalidInput("voxel field needs at least 2 cells per axis");
    density_raw = Eigen::ArrayXd::Constant(cell_count(), raw);
    color = PixelArray<Scalar>::Constant(cell_count(), 3, gray);
}

void VoxelField::validate() const {
    bounds.validate();
    if ((dims < 2).any()) throw InvalidInput("voxel field needs at least 2 cells per axis");
    if (density_raw.size() != cell_count() || color.rows() != cell_count())
        throw InvalidInput("voxel field arrays do not match dims");
    // -inf is allowed and means empty space.
    if (density_raw.isNaN().any() || (density_raw == std::numeric_limits<Scalar>::infinity()).any())
        throw InvalidInput("density is NaN or +inf");
    if (!color.allFinite() || (color < 0).any() || (color > 1).any()) throw InvalidInput("color outside [0,1]");
}

bool trilinear_stencil(const VoxelField& field, const Vec3& p, TrilinearStencil& out) {
    if (!field.bounds.contains(p)) return false;
    const Vec3 cs = field.cell_size();
    int i0[3];
    Scalar f[3];
    for (int a = 0; a < 3; ++a) {
        const int n = field.dims[a];
        Scalar u = (p[a] - field.bounds.min_corner[a]) / cs[a] - 0.5;
        u = std::clamp(u, 0.0, Scalar(n - 1));
        i0[a] = std::min(int(std::floor(u)), n - 2);
        f[a] = u - i0[a];
    }
    int c = 0;
    for (int dz = 0; dz < 2; ++dz)
        for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx, ++c) {
                out.cell[c] = field.index(i0[0] + dx, i0[1] + dy, i0[2] + dz);
                out.weight[c] = (dx ? f[0] : 1 - f[0]) * (dy ? f[1] : 1 - f[1]) * (dz ? f[2] : 1 - f[2]);
            }
    return true;
}

FieldSample trilinear(const VoxelField& field, const Vec3& p) {
    TrilinearStencil st;
    if (!trilinear_stencil(field, p, st)) return {kOutsideRaw, Vec3::Zero()};
    FieldSample s{0, Vec3::Zero()};
    for (int c = 0; c < 8; ++c) {
        if (st.weight[c] == 0) continue;
        s.density_raw += st.weight[c] * field.density_raw[st.cell[c]];
        s.color += st.weight[c] * field.color.row(st.cell[c]).matrix().transpose();
    }
    return s;
}

Scalar sample_scalar(const VoxelField& layout, const Eigen::ArrayXd& values, const Vec3& p) {
    TrilinearStencil st;
    if (!trilinear_stencil(layout, p, st)) return 0;
    Scalar v = 0;
    for (int c = 0; c < 8; ++c) v += st.weight[c] * values[st.cell[c]];
    return v;
}

namespace {

// Clamp p into `b` so resampling never reads the outside surrogate.
Vec3 clamp_into(const Bounds& b, const Vec3& p) { return p.cwiseMax(b.min_corner).cwiseMin(b.max_corner); }

}  // namespace

VoxelField resample_to_dims(const VoxelField& field, const Bounds& new_bounds, const Vec3i& dims) {
    VoxelField out(new_bounds, dims);
    out.density_shift = field.density_shift;
    for (int k = 0; k < dims.z(); ++k)
        for (int j = 0; j < dims.y(); ++j)
            for (int i = 0; i < dims.x(); ++i) {
                const Eigen::Index idx = out.index(i, j, k);
                const FieldSample s = trilinear(field, clamp_into(field.bounds, out.cell_center(i, j, k)));
                out.density_raw[idx] = s.density_raw;
                out.color.row(idx) = s.color.transpose().array().min(1.0).max(0.0);
            }
    return out;
}

VoxelField resample(const VoxelField& field, const Bounds& new_bounds, Scalar target_voxels) {
    return resample_to_dims(field, new_bounds, dims_for(new_bounds, target_voxels));
}

Eigen::ArrayXd resample_array(const VoxelField& from, const Eigen::ArrayXd& values, const VoxelField& to) {
    if (values.size() != from.cell_count()) throw InvalidInput("array does not match source field");
    Eigen::ArrayXd out(to.cell_count());
    for (int k = 0; k < to.dims.z(); ++k)
        for (int j = 0; j < to.dims.y(); ++j)
            for (int i = 0; i < to.dims.x(); ++i)
                out[to.index(i, j, k)] = sample_scalar(from, values, clamp_into(from.bounds, to.cell_center(i, j, k)));
    return out;
}

Bounds shrink_bbox(const VoxelField& field, Scalar threshold) {
    if (!(threshold > 0)) throw InvalidInput("shrink threshold must be positive");
    Eigen::Array3i lo = field.dims, hi = Eigen::Array3i::Constant(-1);
    for (int k = 0; k < field.dims.z(); ++k)
        for (int j = 0; j < field.dims.y(); ++j)
            for (int i = 0; i < field.dims.x(); ++i)
                if (field.sigma(field.index(i, j, k)) > threshold) {
                    const Eigen::Array3i c(i, j, k);
                    lo = lo.min(c);
                    hi = hi.max(c);
                }
    if ((hi < 0).any()) return field.bounds;
    const Vec3 cs = field.cell_size();
    Bounds b;
    b.min_corner = field.bounds.min_corner + ((lo - 1).cast<Scalar>() * cs.array()).matrix();
    b.max_corner = field.bounds.min_corner + ((hi + 2).cast<Scalar>() * cs.array()).matrix();
    b.min_corner = b.min_corner.cwiseMax(field.bounds.min_corner);
    b.max_corner = b.max_corner.cwiseMin(field.bounds.max_corner);
    return b;
}

// ---------------------------------------------------------------------------
// Binary container

namespace {

constexpr char kMagic[4] = {'V', 'X', 'A', 'F'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out.push_back(char((v >> (8 * b)) & 0xff));
}
void put_f32(std::string& out, Scalar v) { put_u32(out, std::bit_cast<std::uint32_t>(float(v))); }

struct Reader {
    const std::string& bytes;
    std::size_t pos = 0;
    std::uint32_t u32() {
        if (pos + 4 > bytes.size()) throw IoError("field file truncated");
        std::uint32_t v = 0;
        for (int b = 0; b < 4; ++b) v |= std::uint32_t(std::uint8_t(bytes[pos + b])) << (8 * b);
        pos += 4;
        return v;
    }
    Scalar f32() { return std::bit_cast<float>(u32()); }
};

}  // namespace

std::string serialize_field(const VoxelField& field) {
    field.validate();
    std::string out(kMagic, 4);
    put_u32(out, kVersion);
    for (int a = 0; a < 3; ++a) put_u32(out, std::uint32_t(field.dims[a]));
    for (int a = 0; a < 3; ++a) put_f32(out, field.bounds.min_corner[a]);
    for (int a = 0; a < 3; ++a) put_f32(out, field.bounds.max_corner[a]);
    put_f32(out, field.density_shift);
    out.reserve(out.size() + std::size_t(field.cell_count()) * 16);
    for (Eigen::Index i = 0; i < field.cell_count(); ++i) put_f32(out, field.density_raw[i]);
    for (Eigen::Index i = 0; i < field.cell_count(); ++i)
        for (int c = 0; c < 3; ++c) put_f32(out, field.color(i, c));
    return out;
}

VoxelField deserialize_field(const std::string& bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw IoError("not a voxel field file");
    Reader r{bytes, 4};
    if (r.u32() != kVersion) throw IoError("unsupported voxel field version");
    Vec3i dims;
    for (int a = 0; a < 3; ++a) {
        const std::uint32_t n = r.u32();
        if (n < 2 || n > 4096) throw IoError("voxel field dims out of range");
        dims[a] = int(n);
    }
    Bounds b;
    for (int a = 0; a < 3; ++a) b.min_corner[a] = r.f32();
    for (int a = 0; a < 3; ++a) b.max_corner[a] = r.f32();
    const Scalar shift = r.f32();
    const std::size_t n = std::size_t(dims.x()) * dims.y() * dims.z();
    if (bytes.size() != r.pos + n * 16) throw IoError("voxel field file size does not match header");
    VoxelField f;
    try {
        f = VoxelField(b, dims);
    } catch (const InvalidInput& e) {
        throw IoError(std::string("corrupt field header: ") + e.what());
    }
    f.density_shift = shift;
    for (std::size_t i = 0; i < n; ++i) f.density_raw[i] = r.f32();
    for (std::size_t i = 0; i < n; ++i)
        for (int c = 0; c < 3; ++c) f.color(i, c) = r.f32();
    try {
        f.validate();
    } catch (const InvalidInput& e) {
        throw IoError(std::string("corrupt field data: ") + e.what());
    }
    return f;
}

void save_field(const VoxelField& field, const std::string& path) {
    const std::string bytes = serialize_field(field);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out.write(bytes.data(), std::streamsize(bytes.size()));
    if (!out) throw IoError("write failed: " + path);
}

VoxelField load_field(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return deserialize_field(ss.str());
}

}  // namespace vxa

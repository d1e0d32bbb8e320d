#include "voxavatar/spatial.hpp"

#include <algorithm>
#include <cmath>

namespace vxa {

PointIndex::PointIndex(const Points& points, Scalar cell) : points_(points), cell_(cell) {
    if (!(cell > 0)) throw InvalidInput("point index cell size must be positive");
    origin_ = points.rows() > 0 ? Vec3(points.colwise().minCoeff().transpose()) : Vec3::Zero();
    for (int i = 0; i < points.rows(); ++i) buckets_[key(bucket(points.row(i).transpose()))].push_back(i);
}

Eigen::Array3i PointIndex::bucket(const Vec3& p) const {
    return ((p - origin_).array() / cell_).floor().cast<int>();
}

std::int64_t PointIndex::key(const Eigen::Array3i& c) const {
    // 21 bits per axis, offset so small negative coordinates stay distinct.
    const auto u = [](int v) { return std::int64_t(v + (1 << 20)) & ((std::int64_t(1) << 21) - 1); };
    return u(c.x()) | (u(c.y()) << 21) | (u(c.z()) << 42);
}

std::optional<PointIndex::Hit> PointIndex::nearest(const Vec3& p, Scalar max_distance) const {
    const Eigen::Array3i b = bucket(p);
    std::optional<Hit> best;
    max_distance = std::min(max_distance, cell_);
    Scalar best_sq = max_distance * max_distance;
    for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                const auto it = buckets_.find(key(b + Eigen::Array3i(dx, dy, dz)));
                if (it == buckets_.end()) continue;
                for (int i : it->second) {
                    const Scalar d2 = (points_.row(i).transpose() - p).squaredNorm();
                    if (!best ? d2 <= best_sq : (d2 < best_sq || (d2 == best_sq && i < best->index))) {
                        best_sq = d2;
                        best = Hit{i, 0};
                    }
                }
            }
    if (best) best->distance = std::sqrt(best_sq);
    return best;
}

}  // namespace vxa

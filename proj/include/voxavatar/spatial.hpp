#pragma once

#include "voxavatar/core.hpp"

#include <optional>
#include <unordered_map>
#include <vector>

namespace vxa {

/// Uniform-grid bucket index over a point set for bounded nearest-neighbor
/// queries. Queries only look at the 27 buckets around the query point, so
/// `cell` must be at least the largest search radius used.
class PointIndex {
public:
    PointIndex(const Points& points, Scalar cell);

    struct Hit {
        int index;
        Scalar distance;
    };
    /// Nearest point within max_distance (<= cell); ties go to the lower index.
    std::optional<Hit> nearest(const Vec3& p, Scalar max_distance) const;

    Scalar cell() const { return cell_; }

private:
    std::int64_t key(const Eigen::Array3i& c) const;
    Eigen::Array3i bucket(const Vec3& p) const;

    Points points_;
    Scalar cell_;
    Vec3 origin_;
    std::unordered_map<std::int64_t, std::vector<int>> buckets_;
};

}  // namespace vxa

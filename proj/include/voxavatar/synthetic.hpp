#pragma once

#include "voxavatar/camera.hpp"
#include "voxavatar/voxel_field.hpp"

#include <cstdint>
#include <vector>

namespace vxa {

/// Connected components of a triangle mesh (shared vertices), as a component
/// id per face. Ids are numbered in order of first appearance.
std::vector<int> face_components(const Faces& faces, int vertex_count);

/// Cells of `layout` whose centers lie inside the mesh. Each connected
/// component is treated as a closed surface and tested by crossing parity
/// along z columns; the result is the union over components.
std::vector<std::uint8_t> voxelize_mesh(const Points& vertices, const Faces& faces, const VoxelField& layout);

/// Ground-truth field of a labeled mesh: activated density `sigma_inside` in
/// occupied cells (about zero elsewhere), occupied cells colored with the
/// palette color of the nearest vertex's part, empty cells black.
VoxelField ground_truth_field(const Points& vertices, const Faces& faces, const std::vector<int>& face_labels,
                              const Bounds& bounds, Scalar target_voxels, Scalar sigma_inside = 50.0);

/// `count` cameras with golden-angle azimuths and elevations spread evenly over
/// [el_min, el_max], all at `radius` around `target`.
std::vector<Camera> fixed_views(int count, Scalar radius, const Vec3& target, int resolution, Scalar fov_y = 60,
                                Scalar el_min = -30, Scalar el_max = 60);

/// Occupancy IoU between truth (on its own lattice) and `recovered` sampled at
/// the truth cell centers; occupied means activated density > threshold.
Scalar occupancy_iou(const VoxelField& truth, const VoxelField& recovered, Scalar threshold);

/// Bounds of a point set expanded by `pad` meters on every side.
Bounds padded_bounds(const Points& points, Scalar pad);

}  // namespace vxa

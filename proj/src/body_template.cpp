#include "voxavatar/body_model.hpp"

#include <cmath>
#include <numbers>

namespace vxa {

namespace {

// Canonical T-pose joint positions, left side = +x, facing +z.
const std::array<Vec3, kDefaultJoints> kJointRest = {{
    {0.00, 0.00, 0.00},    // pelvis
    {0.09, -0.07, 0.00},   // left hip
    {-0.09, -0.07, 0.00},  // right hip
    {0.00, 0.10, -0.01},   // spine1
    {0.10, -0.45, 0.01},   // left knee
    {-0.10, -0.45, 0.01},  // right knee
    {0.00, 0.22, -0.01},   // spine2
    {0.10, -0.82, -0.02},  // left ankle
    {-0.10, -0.82, -0.02}, // right ankle
    {0.00, 0.30, 0.00},    // spine3
    {0.10, -0.87, 0.10},   // left foot
    {-0.10, -0.87, 0.10},  // right foot
    {0.00, 0.48, -0.01},   // neck
    {0.07, 0.42, -0.01},   // left collar
    {-0.07, 0.42, -0.01},  // right collar
    {0.00, 0.58, 0.02},    // head
    {0.18, 0.44, -0.01},   // left shoulder
    {-0.18, 0.44, -0.01},  // right shoulder
    {0.44, 0.44, -0.02},   // left elbow
    {-0.44, 0.44, -0.02},  // right elbow
    {0.68, 0.44, -0.01},   // left wrist
    {-0.68, 0.44, -0.01},  // right wrist
    {0.77, 0.44, -0.01},   // left hand
    {-0.77, 0.44, -0.01},  // right hand
}};

const std::array<int, kDefaultJoints> kParents = {-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8,
                                                  9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21};

// End point of the bone each joint rotates; leaves use a short stub.
Vec3 bone_end(int j) {
    switch (j) {
        case kPelvis: return kJointRest[kSpine1];
        case kLeftHip: return kJointRest[kLeftKnee];
        case kRightHip: return kJointRest[kRightKnee];
        case kSpine1: return kJointRest[kSpine2];
        case kLeftKnee: return kJointRest[kLeftAnkle];
        case kRightKnee: return kJointRest[kRightAnkle];
        case kSpine2: return kJointRest[kSpine3];
        case kLeftAnkle: return kJointRest[kLeftFoot];
        case kRightAnkle: return kJointRest[kRightFoot];
        case kSpine3: return kJointRest[kNeck];
        case kLeftFoot: return kJointRest[kLeftFoot] + Vec3(0, 0, 0.06);
        case kRightFoot: return kJointRest[kRightFoot] + Vec3(0, 0, 0.06);
        case kNeck: return kJointRest[kHead];
        case kLeftCollar: return kJointRest[kLeftShoulder];
        case kRightCollar: return kJointRest[kRightShoulder];
        case kHead: return kJointRest[kHead] + Vec3(0, 0.18, 0);
        case kLeftShoulder: return kJointRest[kLeftElbow];
        case kRightShoulder: return kJointRest[kRightElbow];
        case kLeftElbow: return kJointRest[kLeftWrist];
        case kRightElbow: return kJointRest[kRightWrist];
        case kLeftWrist: return kJointRest[kLeftHand];
        case kRightWrist: return kJointRest[kRightHand];
        case kLeftHand: return kJointRest[kLeftHand] + Vec3(0.04, 0, 0);
        case kRightHand: return kJointRest[kRightHand] + Vec3(-0.04, 0, 0);
        default: return kJointRest[j];
    }
}

Scalar segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
    const Vec3 ab = b - a;
    const Scalar len2 = ab.squaredNorm();
    const Scalar t = len2 > 0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
    return (a + t * ab - p).norm();
}

enum class Split { None, FrontBack, LeftRight };

struct Segment {
    Vec3 center;
    Vec3 axis;       // unit long axis
    Vec3 radii;      // (perpendicular 1, along axis, perpendicular 2 ~ depth)
    int label_a;     // back / right / sole label
    int label_b;     // front / left label (unused for Split::None)
    Split split;
    std::vector<int> candidates;
};

Segment limb(int from, int to, Scalar radius, Scalar depth_radius, int back, int front, std::vector<int> cand,
             Scalar extend = 1.12) {
    const Vec3 a = kJointRest[from], b = kJointRest[to];
    return {0.5 * (a + b), (b - a).normalized(), Vec3(radius, 0.5 * (b - a).norm() * extend, depth_radius),
            back, front, Split::FrontBack, std::move(cand)};
}

std::vector<Segment> segments() {
    std::vector<Segment> s;
    s.push_back({{0, 0.22, 0}, Vec3::UnitY(), {0.17, 0.33, 0.12}, kTorsoBack, kTorsoFront, Split::FrontBack,
                 {kPelvis, kSpine1, kSpine2, kSpine3, kNeck, kLeftHip, kRightHip, kLeftCollar, kRightCollar}});
    s.push_back({{0, 0.67, 0.02}, Vec3::UnitY(), {0.10, 0.15, 0.11}, kHeadRight, kHeadLeft, Split::LeftRight,
                 {kNeck, kHead, kSpine3}});
    // Arms.
    s.push_back(limb(kLeftShoulder, kLeftElbow, 0.062, 0.062, kUpperArmLeftBack, kUpperArmLeftFront,
                     {kLeftCollar, kLeftShoulder, kLeftElbow}, 1.25));
    s.push_back(limb(kRightShoulder, kRightElbow, 0.062, 0.062, kUpperArmRightBack, kUpperArmRightFront,
                     {kRightCollar, kRightShoulder, kRightElbow}, 1.25));
    s.push_back(limb(kLeftElbow, kLeftWrist, 0.052, 0.052, kLowerArmLeftBack, kLowerArmLeftFront,
                     {kLeftShoulder, kLeftElbow, kLeftWrist}));
    s.push_back(limb(kRightElbow, kRightWrist, 0.052, 0.052, kLowerArmRightBack, kLowerArmRightFront,
                     {kRightShoulder, kRightElbow, kRightWrist}));
    {
        Segment h = limb(kLeftWrist, kLeftHand, 0.055, 0.035, kLeftHandPart, kLeftHandPart,
                         {kLeftElbow, kLeftWrist, kLeftHand}, 1.0);
        h.center = kJointRest[kLeftWrist] + Vec3(0.075, 0, 0);
        h.radii.y() = 0.085;
        h.split = Split::None;
        s.push_back(h);
        h = limb(kRightWrist, kRightHand, 0.055, 0.035, kRightHandPart, kRightHandPart,
                 {kRightElbow, kRightWrist, kRightHand}, 1.0);
        h.center = kJointRest[kRightWrist] + Vec3(-0.075, 0, 0);
        h.radii.y() = 0.085;
        h.split = Split::None;
        s.push_back(h);
    }
    // Legs.
    s.push_back(limb(kLeftHip, kLeftKnee, 0.088, 0.088, kUpperLegLeftBack, kUpperLegLeftFront,
                     {kPelvis, kLeftHip, kLeftKnee}));
    s.push_back(limb(kRightHip, kRightKnee, 0.088, 0.088, kUpperLegRightBack, kUpperLegRightFront,
                     {kPelvis, kRightHip, kRightKnee}));
    s.push_back(limb(kLeftKnee, kLeftAnkle, 0.066, 0.066, kLowerLegLeftBack, kLowerLegLeftFront,
                     {kLeftHip, kLeftKnee, kLeftAnkle}));
    s.push_back(limb(kRightKnee, kRightAnkle, 0.066, 0.066, kLowerLegRightBack, kLowerLegRightFront,
                     {kRightHip, kRightKnee, kRightAnkle}));
    for (int side = 0; side < 2; ++side) {
        const Scalar x = side == 0 ? 0.10 : -0.10;
        const Vec3 heel(x, -0.86, -0.06), toe(x, -0.88, 0.17);
        const int ankle = side == 0 ? kLeftAnkle : kRightAnkle;
        const int foot = side == 0 ? kLeftFoot : kRightFoot;
        const int knee = side == 0 ? kLeftKnee : kRightKnee;
        const int label = side == 0 ? kLeftFootPart : kRightFootPart;
        s.push_back({0.5 * (heel + toe), (toe - heel).normalized(), {0.05, 0.5 * (toe - heel).norm(), 0.045}, label,
                     label, Split::None, {knee, ankle, foot}});
    }
    return s;
}

}  // namespace

BodyTemplate make_default_template() {
    constexpr int kSlices = 16;  // around the long axis
    constexpr int kStacks = 9;   // pole to pole
    const auto segs = segments();

    std::vector<Vec3> verts;
    std::vector<std::array<int, 3>> faces;
    std::vector<int> labels;
    std::vector<std::vector<std::pair<int, Scalar>>> weights;

    for (const Segment& seg : segs) {
        // Frame columns (e1, axis, e2) with e2 closest to +z (the facing direction).
        Vec3 hint = std::abs(seg.axis.z()) > 0.9 ? Vec3::UnitY() : Vec3::UnitZ();
        const Vec3 e2 = (hint - hint.dot(seg.axis) * seg.axis).normalized();
        const Vec3 e1 = seg.axis.cross(e2);
        const int base = int(verts.size());
        auto emit = [&](Scalar u, Scalar v, Scalar w) {
            verts.push_back(seg.center + e1 * seg.radii.x() * u + seg.axis * seg.radii.y() * v +
                            e2 * seg.radii.z() * w);
        };
        emit(0, -1, 0);
        for (int st = 1; st < kStacks; ++st) {
            const Scalar phi = std::numbers::pi * st / kStacks;
            for (int sl = 0; sl < kSlices; ++sl) {
                const Scalar th = 2 * std::numbers::pi * sl / kSlices;
                emit(std::sin(phi) * std::cos(th), -std::cos(phi), std::sin(phi) * std::sin(th));
            }
        }
        emit(0, 1, 0);
        const int top = int(verts.size()) - 1;
        auto ring = [&](int st, int sl) { return base + 1 + (st - 1) * kSlices + (sl % kSlices); };
        std::vector<std::array<int, 3>> local;
        for (int sl = 0; sl < kSlices; ++sl) local.push_back({base, ring(1, sl), ring(1, sl + 1)});
        for (int st = 1; st < kStacks - 1; ++st)
            for (int sl = 0; sl < kSlices; ++sl) {
                local.push_back({ring(st, sl), ring(st + 1, sl), ring(st + 1, sl + 1)});
                local.push_back({ring(st, sl), ring(st + 1, sl + 1), ring(st, sl + 1)});
            }
        for (int sl = 0; sl < kSlices; ++sl) local.push_back({top, ring(kStacks - 1, sl + 1), ring(kStacks - 1, sl)});

        for (auto f : local) {
            const Vec3 c = (verts[f[0]] + verts[f[1]] + verts[f[2]]) / 3;
            const Vec3 n = (verts[f[1]] - verts[f[0]]).cross(verts[f[2]] - verts[f[0]]);
            if (n.dot(c - seg.center) < 0) std::swap(f[1], f[2]);
            faces.push_back(f);
            int label = seg.label_a;
            if (seg.split == Split::FrontBack && c.z() >= seg.center.z()) label = seg.label_b;
            if (seg.split == Split::LeftRight && c.x() >= seg.center.x()) label = seg.label_b;
            labels.push_back(label);
        }

        for (int v = base; v < int(verts.size()); ++v) {
            std::vector<std::pair<int, Scalar>> w;
            Scalar total = 0;
            for (int j : seg.candidates) {
                const Scalar d = segment_distance(verts[v], kJointRest[j], bone_end(j));
                const Scalar raw = 1.0 / std::pow(d + 0.02, 4);
                w.emplace_back(j, raw);
                total += raw;
            }
            for (auto& [j, val] : w) val /= total;
            weights.push_back(std::move(w));
        }
    }

    BodyTemplate tpl;
    const int n = int(verts.size());
    tpl.vertices.resize(n, 3);
    for (int i = 0; i < n; ++i) tpl.vertices.row(i) = verts[i].transpose();
    tpl.faces.resize(Eigen::Index(faces.size()), 3);
    for (size_t f = 0; f < faces.size(); ++f) tpl.faces.row(f) << faces[f][0], faces[f][1], faces[f][2];
    tpl.face_labels = labels;
    tpl.canonical_joints.resize(kDefaultJoints, 3);
    for (int j = 0; j < kDefaultJoints; ++j) tpl.canonical_joints.row(j) = kJointRest[j].transpose();
    tpl.parents.assign(kParents.begin(), kParents.end());

    tpl.skin_weights = Weights::Zero(n, kDefaultJoints);
    for (int i = 0; i < n; ++i)
        for (auto [j, w] : weights[i]) tpl.skin_weights(i, j) = w;
    // Renormalize rows in one pass so each sums to 1 in floating point as closely as possible.
    for (int i = 0; i < n; ++i) tpl.skin_weights.row(i) /= tpl.skin_weights.row(i).sum();

    // Shape basis: height, girth, depth, then smooth low-frequency fields.
    tpl.shape_basis.assign(kShapeDims, Points::Zero(n, 3));
    for (int i = 0; i < n; ++i) {
        const Scalar x = verts[i].x(), y = verts[i].y(), z = verts[i].z();
        tpl.shape_basis[0].row(i) << 0, 0.06 * y, 0;
        tpl.shape_basis[1].row(i) << 0.05 * x, 0, 0.05 * z;
        tpl.shape_basis[2].row(i) << 0, 0, 0.06 * z;
        tpl.shape_basis[3].row(i) << 0.03 * x * y, 0, 0;
        for (int b = 4; b < kShapeDims; ++b)
            tpl.shape_basis[b].row(i) << 0.015 * std::sin(b * x + y), 0.015 * std::sin(b * y + z),
                0.015 * std::sin(b * z + x);
    }

    // Joints follow the shaped surface through the normalized weight columns.
    tpl.joint_regressor = tpl.skin_weights.transpose();
    for (Eigen::Index j = 0; j < tpl.joint_regressor.rows(); ++j) {
        const Scalar s = tpl.joint_regressor.row(j).sum();
        if (s > 0) tpl.joint_regressor.row(j) /= s;
    }
    tpl.validate();
    return tpl;
}

}  // namespace vxa

#include "voxavatar/body_model.hpp"

#include <fstream>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <queue>

namespace vxa {

namespace {

constexpr Scalar kWeightSumTol = 1e-6;

// Joint visiting order such that every parent precedes its children.
std::vector<int> topological_order(const std::vector<int>& parents) {
    const int k = int(parents.size());
    std::vector<std::vector<int>> children(k);
    int root = -1;
    for (int j = 0; j < k; ++j) {
        if (parents[j] < 0) {
            if (root >= 0) throw InvalidInput("joint tree has more than one root");
            root = j;
        } else if (parents[j] >= k) {
            throw InvalidInput("joint parent index out of range");
        } else {
            children[parents[j]].push_back(j);
        }
    }
    if (root < 0) throw InvalidInput("joint tree has no root");
    std::vector<int> order;
    order.reserve(k);
    std::queue<int> q;
    q.push(root);
    while (!q.empty()) {
        const int j = q.front();
        q.pop();
        order.push_back(j);
        for (int c : children[j]) q.push(c);
    }
    if (int(order.size()) != k) throw InvalidInput("joint parents contain a cycle");
    return order;
}

void check_weights(const Weights& w) {
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
        if ((w.row(i).array() < 0).any())
            throw InvalidInput("negative skinning weight at vertex " + std::to_string(i));
        if (std::abs(w.row(i).sum() - 1) > kWeightSumTol)
            throw InvalidInput("skinning weights of vertex " + std::to_string(i) + " do not sum to 1");
    }
}

}  // namespace

void BodyTemplate::validate() const {
    const int n = vertex_count();
    const int k = joint_count();
    if (n == 0) throw InvalidInput("template has no vertices");
    if (!vertices.allFinite()) throw InvalidInput("template vertices not finite");
    if (int(face_labels.size()) != face_count()) throw InvalidInput("face label count differs from face count");
    for (Eigen::Index f = 0; f < faces.rows(); ++f)
        for (int c = 0; c < 3; ++c)
            if (faces(f, c) < 0 || faces(f, c) >= n) throw InvalidInput("face index out of range");
    for (int label : face_labels)
        if (label < 1 || label > kPartCount) throw InvalidInput("face part label outside 1..24");
    if (int(shape_basis.size()) != kShapeDims) throw InvalidInput("shape basis must have 10 components");
    for (const auto& b : shape_basis)
        if (b.rows() != n) throw InvalidInput("shape basis component has wrong vertex count");
    if (pose_basis.size() != 0 && (pose_basis.rows() != 3 * n || pose_basis.cols() != 9 * (k - 1)))
        throw InvalidInput("pose basis must be 3N x 9(K-1)");
    if (skin_weights.rows() != n || skin_weights.cols() != k) throw InvalidInput("skin weights must be N x K");
    check_weights(skin_weights);
    if (int(parents.size()) != k) throw InvalidInput("parent list length differs from joint count");
    topological_order(parents);
    if (joint_regressor.size() != 0 && (joint_regressor.rows() != k || joint_regressor.cols() != n))
        throw InvalidInput("joint regressor must be K x N");
}

Points shape_deform(const BodyTemplate& tpl, const ShapeParams& beta, const PoseParams& xi) {
    if (beta.beta.size() != Eigen::Index(tpl.shape_basis.size()))
        throw InvalidInput("beta has " + std::to_string(beta.beta.size()) + " entries, shape basis has " +
                           std::to_string(tpl.shape_basis.size()));
    if (!beta.beta.allFinite() || !xi.xi.allFinite()) throw InvalidInput("shape/pose parameters not finite");
    Points out = tpl.vertices;
    for (Eigen::Index i = 0; i < beta.beta.size(); ++i)
        if (beta.beta[i] != 0) out += beta.beta[i] * tpl.shape_basis[i];
    if (tpl.pose_basis.size() != 0) {
        const int k = tpl.joint_count();
        if (xi.xi.rows() != k) throw InvalidInput("pose has wrong joint count");
        Eigen::VectorXd feature(9 * (k - 1));
        for (int j = 1; j < k; ++j) {
            const Mat3 r = rodrigues<Scalar>(xi.xi.row(j).transpose()) - Mat3::Identity();
            for (int a = 0; a < 3; ++a)
                for (int b = 0; b < 3; ++b) feature[9 * (j - 1) + 3 * a + b] = r(a, b);
        }
        if (!feature.isZero(0)) {
            const Eigen::VectorXd d = tpl.pose_basis * feature;
            out += Eigen::Map<const Points>(d.data(), tpl.vertex_count(), 3);
        }
    }
    return out;
}

Points pose_joints(const BodyTemplate& tpl, const ShapeParams& beta) {
    if (beta.beta.size() != Eigen::Index(tpl.shape_basis.size()))
        throw InvalidInput("beta dimension does not match shape basis");
    if (!beta.beta.allFinite()) throw InvalidInput("beta not finite");
    Points joints = tpl.canonical_joints;
    if (tpl.joint_regressor.size() == 0 || beta.beta.isZero(0)) return joints;
    Points offset = Points::Zero(tpl.vertex_count(), 3);
    for (Eigen::Index i = 0; i < beta.beta.size(); ++i) offset += beta.beta[i] * tpl.shape_basis[i];
    joints += tpl.joint_regressor * offset;
    return joints;
}

PosedBody lbs(const Points& canonical_vertices, const Points& joints, const PoseParams& xi,
              const Weights& skin_weights, const std::vector<int>& parents) {
    const Eigen::Index k = joints.rows();
    if (xi.xi.rows() != k) throw InvalidInput("pose has " + std::to_string(xi.xi.rows()) + " joints, expected " +
                                              std::to_string(k));
    if (skin_weights.rows() != canonical_vertices.rows() || skin_weights.cols() != k)
        throw InvalidInput("skin weights must be N x K");
    if (!xi.xi.allFinite()) throw InvalidInput("pose not finite");
    check_weights(skin_weights);
    const auto order = topological_order(parents);

    // Global rotation R_k and offset a_k with x -> R_k x + a_k. Written as
    // a_k = a_parent + (R_parent - R_k) j_k so the rest pose is exactly zero.
    std::vector<Mat3> rot(k);
    std::vector<Vec3> offset(k);
    for (int j : order) {
        const Mat3 local = rodrigues<Scalar>(xi.xi.row(j).transpose());
        const Vec3 jk = joints.row(j).transpose();
        if (parents[j] < 0) {
            rot[j] = local;
            offset[j] = (Mat3::Identity() - local) * jk;
        } else {
            const int p = parents[j];
            rot[j] = rot[p] * local;
            offset[j] = offset[p] + (rot[p] - rot[j]) * jk;
        }
    }

    PosedBody out;
    out.transforms.resize(k);
    out.joints.resize(k, 3);
    for (Eigen::Index j = 0; j < k; ++j) {
        out.transforms[j].linear() = rot[j];
        out.transforms[j].translation() = offset[j];
        out.joints.row(j) = (rot[j] * joints.row(j).transpose() + offset[j]).transpose();
    }

    // v + sum_k w_k ((R_k - I) v + a_k): equal to sum_k w_k (R_k v + a_k) for
    // normalized weights, and exactly v when every R_k = I.
    out.vertices = canonical_vertices;
    std::vector<Mat3> delta(k);
    std::vector<bool> moving(k);
    for (Eigen::Index j = 0; j < k; ++j) {
        delta[j] = rot[j] - Mat3::Identity();
        moving[j] = !(delta[j].isZero(0) && offset[j].isZero(0));
    }
    for (Eigen::Index i = 0; i < canonical_vertices.rows(); ++i) {
        const Vec3 v = canonical_vertices.row(i).transpose();
        Vec3 d = Vec3::Zero();
        bool any = false;
        for (Eigen::Index j = 0; j < k; ++j) {
            const Scalar w = skin_weights(i, j);
            if (w == 0 || !moving[j]) continue;
            d += w * (delta[j] * v + offset[j]);
            any = true;
        }
        if (any) out.vertices.row(i) += d.transpose();
    }
    return out;
}

PosedBody pose_body(const BodyTemplate& tpl, const ShapeParams& beta, const PoseParams& xi) {
    const Points shaped = shape_deform(tpl, beta, xi);
    const Points joints = pose_joints(tpl, beta);
    return lbs(shaped, joints, xi, tpl.skin_weights, tpl.parents);
}

PoseParams a_pose(Scalar arm_angle, int joints) {
    PoseParams p = PoseParams::zero(joints);
    if (joints > kRightShoulder) {
        // Left arm points along +x; rotating about -z lowers it.
        p.xi.row(kLeftShoulder) = Vec3(0, 0, -arm_angle).transpose();
        p.xi.row(kRightShoulder) = Vec3(0, 0, arm_angle).transpose();
    }
    return p;
}

std::pair<Vec3, Vec3> point_bounds(const Points& p) {
    if (p.rows() == 0) return {Vec3::Zero(), Vec3::Zero()};
    return {p.colwise().minCoeff().transpose(), p.colwise().maxCoeff().transpose()};
}

// ---------------------------------------------------------------------------
// I/O

namespace {

using nlohmann::json;

Points points_from_json(const json& j, const char* what) {
    if (!j.is_array()) throw InvalidInput(std::string(what) + " must be an array of [x,y,z]");
    Points p(j.size(), 3);
    for (size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_array() || j[i].size() != 3) throw InvalidInput(std::string(what) + " entries must be [x,y,z]");
        for (int c = 0; c < 3; ++c) p(i, c) = j[i][c].get<double>();
    }
    return p;
}

json points_to_json(const Points& p) {
    json out = json::array();
    for (Eigen::Index i = 0; i < p.rows(); ++i) out.push_back({p(i, 0), p(i, 1), p(i, 2)});
    return out;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
    json out = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        out.push_back(std::move(row));
    }
    return out;
}

Eigen::MatrixXd matrix_from_json(const json& j, const char* what) {
    if (!j.is_array()) throw InvalidInput(std::string(what) + " must be a 2D array");
    if (j.empty()) return {};
    const size_t cols = j[0].size();
    Eigen::MatrixXd m(j.size(), cols);
    for (size_t r = 0; r < j.size(); ++r) {
        if (j[r].size() != cols) throw InvalidInput(std::string(what) + " rows have differing lengths");
        for (size_t c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
    }
    return m;
}

json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw InvalidInput(path + ": " + e.what());
    }
}

}  // namespace

BodyTemplate load_template_json(const std::string& path) {
    const json j = read_json(path);
    BodyTemplate tpl;
    try {
        tpl.vertices = points_from_json(j.at("vertices"), "vertices");
        const auto& faces = j.at("faces");
        tpl.faces.resize(faces.size(), 3);
        for (size_t f = 0; f < faces.size(); ++f)
            for (int c = 0; c < 3; ++c) tpl.faces(f, c) = faces[f].at(c).get<int>();
        tpl.face_labels = j.at("face_labels").get<std::vector<int>>();
        tpl.skin_weights = matrix_from_json(j.at("skin_weights"), "skin_weights");
        tpl.canonical_joints = points_from_json(j.at("joints"), "joints");
        tpl.parents = j.at("parents").get<std::vector<int>>();
        if (j.contains("shape_basis")) {
            for (const auto& b : j.at("shape_basis")) tpl.shape_basis.push_back(points_from_json(b, "shape_basis"));
        } else {
            tpl.shape_basis.assign(kShapeDims, Points::Zero(tpl.vertices.rows(), 3));
        }
        if (j.contains("pose_basis")) tpl.pose_basis = matrix_from_json(j.at("pose_basis"), "pose_basis");
        if (j.contains("joint_regressor"))
            tpl.joint_regressor = matrix_from_json(j.at("joint_regressor"), "joint_regressor");
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInput(path + ": " + e.what());
    }
    tpl.validate();
    return tpl;
}

void save_template_json(const BodyTemplate& tpl, const std::string& path) {
    json j;
    j["vertices"] = points_to_json(tpl.vertices);
    json faces = json::array();
    for (Eigen::Index f = 0; f < tpl.faces.rows(); ++f) faces.push_back({tpl.faces(f, 0), tpl.faces(f, 1), tpl.faces(f, 2)});
    j["faces"] = std::move(faces);
    j["face_labels"] = tpl.face_labels;
    j["skin_weights"] = matrix_to_json(tpl.skin_weights);
    j["joints"] = points_to_json(tpl.canonical_joints);
    j["parents"] = tpl.parents;
    json basis = json::array();
    for (const auto& b : tpl.shape_basis) basis.push_back(points_to_json(b));
    j["shape_basis"] = std::move(basis);
    if (tpl.pose_basis.size() != 0) j["pose_basis"] = matrix_to_json(tpl.pose_basis);
    if (tpl.joint_regressor.size() != 0) j["joint_regressor"] = matrix_to_json(tpl.joint_regressor);
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << j.dump();
}

PoseFile load_pose_json(const std::string& path, int joints) {
    const json j = read_json(path);
    PoseFile pf;
    pf.pose = PoseParams::zero(joints);
    try {
        if (j.contains("beta")) {
            const auto b = j.at("beta").get<std::vector<double>>();
            pf.beta.beta = Eigen::Map<const Eigen::VectorXd>(b.data(), Eigen::Index(b.size()));
            if (pf.beta.beta.size() != kShapeDims) throw InvalidInput(path + ": beta must have 10 entries");
        }
        if (j.contains("pose")) {
            pf.pose.xi = points_from_json(j.at("pose"), "pose");
            if (pf.pose.xi.rows() != joints)
                throw InvalidInput(path + ": pose must have " + std::to_string(joints) + " rows");
        }
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInput(path + ": " + e.what());
    }
    if (!pf.beta.beta.allFinite() || !pf.pose.xi.allFinite()) throw InvalidInput(path + ": non-finite values");
    return pf;
}

void write_obj(const Points& vertices, const Faces& faces, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << std::setprecision(9);
    for (Eigen::Index i = 0; i < vertices.rows(); ++i)
        out << "v " << vertices(i, 0) << ' ' << vertices(i, 1) << ' ' << vertices(i, 2) << '\n';
    for (Eigen::Index f = 0; f < faces.rows(); ++f)
        out << "f " << faces(f, 0) + 1 << ' ' << faces(f, 1) + 1 << ' ' << faces(f, 2) + 1 << '\n';
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace vxa

#include "cvpose/skeleton.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cvpose/hash.hpp"

namespace cvpose {

using nlohmann::json;

namespace {

constexpr std::string_view kDefaultTopology = R"({"schema":"topo-v1",
"joints":["Pelvis","RHip","RKnee","RAnkle","LHip","LKnee","LAnkle","Spine","Thorax","Neck","Head","LShoulder","LElbow","LWrist","RShoulder","RElbow","RWrist"],
"parents":[0,0,1,2,0,4,5,0,7,8,9,8,11,12,8,14,15],
"left_right":[[4,1],[5,2],[6,3],[11,14],[12,15],[13,16]],
"groups":[{"name":"Torso","joints":[0,7,8]},{"name":"Head","joints":[9,10]},{"name":"LArm","joints":[11,12,13]},{"name":"RArm","joints":[14,15,16]},{"name":"LLeg","joints":[4,5,6]},{"name":"RLeg","joints":[1,2,3]}],
"group_pairs":[[2,3],[4,5]]}
)";

void check_index(int idx, int J, const char* what) {
  if (idx < 0 || idx >= J) throw InvalidArgument(std::string("topology: ") + what + " index out of range");
}

}  // namespace

int SkeletonTopology::bone_index_of_child(int joint) const {
  for (int k = 0; k < num_bones(); ++k) {
    if (bones[static_cast<std::size_t>(k)].first == joint) return k;
  }
  throw InvalidArgument("topology: joint " + std::to_string(joint) + " has no bone");
}

SkeletonTopology make_topology(std::vector<std::string> joint_names, std::vector<int> parent,
                               std::vector<std::pair<int, int>> left_right_joint_pairs, std::vector<BodyGroup> groups,
                               std::vector<std::pair<int, int>> group_pairs) {
  const int J = static_cast<int>(joint_names.size());
  if (J == 0) throw InvalidArgument("topology: no joints");
  if (static_cast<int>(parent.size()) != J) throw InvalidArgument("topology: parent list length differs from joints");

  SkeletonTopology topo;
  int roots = 0;
  for (int j = 0; j < J; ++j) {
    check_index(parent[static_cast<std::size_t>(j)], J, "parent");
    if (parent[static_cast<std::size_t>(j)] == j) {
      ++roots;
      topo.root_index = j;
    }
  }
  if (roots != 1) throw InvalidArgument("topology: expected exactly one root, found " + std::to_string(roots));
  for (int j = 0; j < J; ++j) {
    int cur = j;
    int steps = 0;
    while (cur != topo.root_index) {
      cur = parent[static_cast<std::size_t>(cur)];
      if (++steps > J) throw InvalidArgument("topology: parent list contains a cycle");
    }
  }
  for (int j = 0; j < J; ++j) {
    if (j != topo.root_index) topo.bones.emplace_back(j, parent[static_cast<std::size_t>(j)]);
  }

  std::vector<int> partner(static_cast<std::size_t>(J), -1);
  for (const auto& [l, r] : left_right_joint_pairs) {
    check_index(l, J, "left/right");
    check_index(r, J, "left/right");
    if (l == r || partner[static_cast<std::size_t>(l)] != -1 || partner[static_cast<std::size_t>(r)] != -1) {
      throw InvalidArgument("topology: left/right pairs must be disjoint and map distinct joints");
    }
    partner[static_cast<std::size_t>(l)] = r;
    partner[static_cast<std::size_t>(r)] = l;
  }

  topo.joint_names = std::move(joint_names);
  topo.parent = std::move(parent);
  topo.left_right_joint_pairs = std::move(left_right_joint_pairs);
  for (const auto& [l, r] : topo.left_right_joint_pairs) {
    if (l == topo.root_index || r == topo.root_index) throw InvalidArgument("topology: root cannot be paired");
    topo.left_right_bone_pairs.emplace_back(topo.bone_index_of_child(l), topo.bone_index_of_child(r));
  }

  if (!groups.empty()) {
    std::vector<int> seen(static_cast<std::size_t>(J), 0);
    for (const auto& g : groups) {
      if (g.joints.empty()) throw InvalidArgument("topology: empty group '" + g.name + "'");
      for (int j : g.joints) {
        check_index(j, J, "group");
        ++seen[static_cast<std::size_t>(j)];
      }
    }
    for (int j = 0; j < J; ++j) {
      if (seen[static_cast<std::size_t>(j)] != 1) {
        throw InvalidArgument("topology: groups must partition the joints (joint " + std::to_string(j) + ")");
      }
    }
    const int G = static_cast<int>(groups.size());
    for (const auto& [a, b] : group_pairs) {
      check_index(a, G, "group pair");
      check_index(b, G, "group pair");
      if (a == b) throw InvalidArgument("topology: group paired with itself");
    }
  } else if (!group_pairs.empty()) {
    throw InvalidArgument("topology: group pairs given without groups");
  }
  topo.groups = std::move(groups);
  topo.group_pairs = std::move(group_pairs);
  return topo;
}

std::string_view default_topology_text() { return kDefaultTopology; }

SkeletonTopology default_topology() { return parse_topology(kDefaultTopology); }

SkeletonTopology parse_topology(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("malformed topology: ") + e.what());
  }
  if (!doc.is_object() || doc.value("schema", std::string{}) != "topo-v1") {
    throw SchemaError("topology: expected schema topo-v1");
  }
  for (const char* field : {"joints", "parents", "left_right"}) {
    if (!doc.contains(field)) throw MissingField(field, 1);
  }
  SkeletonTopology topo;
  try {
    std::vector<BodyGroup> groups;
    if (doc.contains("groups")) {
      for (const auto& g : doc.at("groups")) {
        groups.push_back({g.at("name").get<std::string>(), g.at("joints").get<std::vector<int>>()});
      }
    }
    topo = make_topology(doc.at("joints").get<std::vector<std::string>>(), doc.at("parents").get<std::vector<int>>(),
                         doc.at("left_right").get<std::vector<std::pair<int, int>>>(), std::move(groups),
                         doc.value("group_pairs", std::vector<std::pair<int, int>>{}));
  } catch (const json::exception& e) {
    throw SchemaError(std::string("topology: ") + e.what());
  }
  topo.fingerprint = to_hex(fnv1a64(text));
  return topo;
}

SkeletonTopology load_topology(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open topology file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_topology(ss.str());
}

Eigen::Matrix<double, Eigen::Dynamic, 3> bone_vectors(const Joints3D& X, const SkeletonTopology& topo) {
  if (X.rows() != topo.num_joints()) throw ShapeMismatch("bone_vectors: joint count differs from topology");
  Eigen::Matrix<double, Eigen::Dynamic, 3> b(topo.num_bones(), 3);
  for (int k = 0; k < topo.num_bones(); ++k) {
    const auto& [k1, k2] = topo.bones[static_cast<std::size_t>(k)];
    b.row(k) = X.row(k1) - X.row(k2);
  }
  return b;
}

Eigen::MatrixXd bone_incidence(const SkeletonTopology& topo) {
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(topo.num_bones(), topo.num_joints());
  for (int k = 0; k < topo.num_bones(); ++k) {
    const auto& [k1, k2] = topo.bones[static_cast<std::size_t>(k)];
    S(k, k1) = 1.0;
    S(k, k2) = -1.0;
  }
  return S;
}

}  // namespace cvpose

#include "cvpose/dataset.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace cvpose {

using ojson = nlohmann::ordered_json;

namespace {

template <int C>
ojson rows_to_json(const Eigen::Matrix<double, Eigen::Dynamic, C>& m) {
  ojson arr = ojson::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    ojson row = ojson::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    arr.push_back(std::move(row));
  }
  return arr;
}

template <int C>
ojson views_to_json(const std::array<std::string, 2>& ids, const std::array<Eigen::Matrix<double, Eigen::Dynamic, C>, 2>& v) {
  ojson obj = ojson::object();
  for (int i = 0; i < 2; ++i) obj[ids[static_cast<std::size_t>(i)]] = rows_to_json<C>(v[static_cast<std::size_t>(i)]);
  return obj;
}

template <int C>
Eigen::Matrix<double, Eigen::Dynamic, C> json_to_rows(const ojson& arr, int J, const std::string& field, std::size_t line) {
  if (!arr.is_array() || static_cast<int>(arr.size()) != J) {
    throw SchemaError("field '" + field + "' must hold " + std::to_string(J) + " joints", line);
  }
  Eigen::Matrix<double, Eigen::Dynamic, C> m(J, C);
  for (int r = 0; r < J; ++r) {
    const ojson& row = arr[static_cast<std::size_t>(r)];
    if (!row.is_array() || row.size() != C) {
      throw SchemaError("field '" + field + "' joint " + std::to_string(r) + " must hold " + std::to_string(C) + " numbers", line);
    }
    for (int c = 0; c < C; ++c) {
      if (!row[static_cast<std::size_t>(c)].is_number()) throw SchemaError("field '" + field + "' must be numeric", line);
      m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
  }
  return m;
}

template <int C>
std::array<Eigen::Matrix<double, Eigen::Dynamic, C>, 2> json_to_views(const ojson& rec, const char* field,
                                                                     const std::array<std::string, 2>& ids, int J,
                                                                     std::size_t line) {
  if (!rec.contains(field)) throw MissingField(field, line);
  const ojson& obj = rec.at(field);
  if (!obj.is_object()) throw SchemaError(std::string("field '") + field + "' must map view ids to joints", line);
  std::array<Eigen::Matrix<double, Eigen::Dynamic, C>, 2> out;
  for (int i = 0; i < 2; ++i) {
    const std::string& id = ids[static_cast<std::size_t>(i)];
    if (!obj.contains(id)) throw MissingField(std::string(field) + "." + id, line);
    out[static_cast<std::size_t>(i)] = json_to_rows<C>(obj.at(id), J, std::string(field) + "." + id, line);
  }
  return out;
}

}  // namespace

Pose3D Sample::ground_truth(int view) const {
  if (!joints_3d_gt) throw MissingField("joints_3d_gt", 0);
  return {(*joints_3d_gt)[static_cast<std::size_t>(view)], camera_pair[static_cast<std::size_t>(view)]};
}

void write_dataset(std::ostream& out, const Dataset& data) {
  out << ojson{{"schema", "data-v1"}, {"num_joints", data.num_joints}}.dump() << '\n';
  for (const auto& s : data.samples) {
    ojson rec;
    rec["sample_id"] = s.sample_id;
    rec["camera_pair"] = {s.camera_pair[0], s.camera_pair[1]};
    rec["joints_2d"] = views_to_json<2>(s.camera_pair, s.joints_2d);
    rec["joints_2d_clean"] = views_to_json<2>(s.camera_pair, s.joints_2d_clean);
    if (s.joints_3d_gt) rec["joints_3d_gt"] = views_to_json<3>(s.camera_pair, *s.joints_3d_gt);
    out << rec.dump() << '\n';
  }
}

Dataset read_dataset(std::istream& in, int expected_joints) {
  Dataset data;
  std::string text;
  std::size_t line = 0;
  bool header = false;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    ojson rec;
    try {
      rec = ojson::parse(text);
    } catch (const ojson::parse_error& e) {
      throw SchemaError(std::string("malformed record: ") + e.what(), line);
    }
    if (!rec.is_object()) throw SchemaError("record must be an object", line);
    try {
      if (!header) {
        if (!rec.contains("schema")) throw MissingField("schema", line);
        if (rec.at("schema") != "data-v1") throw SchemaError("unsupported dataset schema " + rec.at("schema").dump(), line);
        if (!rec.contains("num_joints")) throw MissingField("num_joints", line);
        data.num_joints = rec.at("num_joints").get<int>();
        if (data.num_joints < 1) throw SchemaError("num_joints must be positive", line);
        if (expected_joints > 0 && data.num_joints != expected_joints) {
          throw SchemaError("dataset has " + std::to_string(data.num_joints) + " joints, topology has " +
                                std::to_string(expected_joints),
                            line);
        }
        header = true;
        continue;
      }
      Sample s;
      if (!rec.contains("sample_id")) throw MissingField("sample_id", line);
      s.sample_id = rec.at("sample_id").get<std::string>();
      if (!rec.contains("camera_pair")) throw MissingField("camera_pair", line);
      const ojson& pair = rec.at("camera_pair");
      if (!pair.is_array() || pair.size() != 2) throw SchemaError("camera_pair must list two camera ids", line);
      s.camera_pair = {pair[0].get<std::string>(), pair[1].get<std::string>()};
      if (s.camera_pair[0] == s.camera_pair[1]) throw SchemaError("camera_pair ids must differ", line);
      s.joints_2d = json_to_views<2>(rec, "joints_2d", s.camera_pair, data.num_joints, line);
      s.joints_2d_clean = json_to_views<2>(rec, "joints_2d_clean", s.camera_pair, data.num_joints, line);
      if (rec.contains("joints_3d_gt")) {
        s.joints_3d_gt = json_to_views<3>(rec, "joints_3d_gt", s.camera_pair, data.num_joints, line);
      }
      data.samples.push_back(std::move(s));
    } catch (const ojson::exception& e) {
      throw SchemaError(std::string("bad field type: ") + e.what(), line);
    }
  }
  if (!header) throw SchemaError("empty dataset file");
  return data;
}

void save_dataset(const std::filesystem::path& path, const Dataset& data) {
  std::ostringstream buf;
  write_dataset(buf, data);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write dataset " + path.string());
  out << buf.str();
  if (!out) throw IoError("failed writing dataset " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path, int expected_joints) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset " + path.string());
  try {
    return read_dataset(in, expected_joints);
  } catch (const SchemaError& e) {
    throw SchemaError::in_file(path.string(), e);
  }
}

Dataset strip_ground_truth(Dataset data) {
  for (auto& s : data.samples) s.joints_3d_gt.reset();
  return data;
}

}  // namespace cvpose

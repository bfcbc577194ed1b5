#include "cvpose/checkpoint.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <vector>

namespace cvpose {

namespace {

constexpr const char* kSchema = "ckpt-v1";

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < s.size() && s[i] != ' ' && s[i] != '\t' && s[i] != '\r') ++i;
    if (i > start) out.push_back(s.substr(start, i - start));
  }
  return out;
}

double parse_double(std::string_view s, std::size_t line) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw SchemaError("bad number '" + std::string(s) + "'", line);
  return v;
}

long long parse_int(std::string_view s, std::size_t line) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw SchemaError("bad integer '" + std::string(s) + "'", line);
  return v;
}

unsigned long long parse_uint(std::string_view s, std::size_t line) {
  unsigned long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw SchemaError("bad integer '" + std::string(s) + "'", line);
  return v;
}

void write_tensor(std::ostream& out, const char* group, const std::string& name, const Eigen::MatrixXd& t) {
  out << "tensor " << group << ' ' << name << ' ' << t.rows() << ' ' << t.cols() << '\n';
  std::string row;
  for (Eigen::Index r = 0; r < t.rows(); ++r) {
    row.clear();
    for (Eigen::Index c = 0; c < t.cols(); ++c) {
      if (c) row += ' ';
      row += format_double(t(r, c));
    }
    row += '\n';
    out << row;
  }
}

class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}
  bool next(std::string& line) {
    if (!std::getline(in_, line)) return false;
    ++number_;
    return true;
  }
  std::size_t number() const { return number_; }

 private:
  std::istream& in_;
  std::size_t number_ = 0;
};

}  // namespace

std::string format_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

void write_checkpoint(std::ostream& out, const Checkpoint& c) {
  out << kSchema << '\n';
  out << "topology_fingerprint " << c.topology_fingerprint << '\n';
  out << "network.channels " << c.network.channels << '\n';
  out << "network.sgcn_layers " << c.network.sgcn_layers << '\n';
  out << "network.mgcn_layers_per_stage " << c.network.mgcn_layers_per_stage << '\n';
  out << "network.coord_scale " << format_double(c.network.coord_scale) << '\n';
  out << "network.seed " << c.network.seed << '\n';
  out << "network.share_view_weights " << (c.network.share_view_weights ? 1 : 0) << '\n';
  out << "network.variant " << to_string(c.network.variant) << '\n';
  out << "network.fc_hidden " << c.network.fc_hidden << '\n';
  out << "step " << c.step << '\n';
  out << "epoch " << c.epoch << '\n';
  out << "lr " << format_double(c.lr) << '\n';
  out << "schedule.best " << format_double(c.schedule.best) << '\n';
  out << "schedule.since_best " << c.schedule.since_best << '\n';
  out << "best_val " << format_double(c.best_val) << '\n';
  if (c.optimizer) {
    out << "optimizer.step " << c.optimizer->step << '\n';
    out << "optimizer.beta1 " << format_double(c.optimizer->beta1) << '\n';
    out << "optimizer.beta2 " << format_double(c.optimizer->beta2) << '\n';
    out << "optimizer.eps " << format_double(c.optimizer->eps) << '\n';
  }
  for (std::size_t i = 0; i < c.weights.size(); ++i) write_tensor(out, "weights", c.weights.names[i], c.weights.tensors[i]);
  if (c.optimizer) {
    const AmsgradState& s = *c.optimizer;
    for (std::size_t i = 0; i < s.m.size(); ++i) write_tensor(out, "m", s.m.names[i], s.m.tensors[i]);
    for (std::size_t i = 0; i < s.v.size(); ++i) write_tensor(out, "v", s.v.names[i], s.v.tensors[i]);
    for (std::size_t i = 0; i < s.vhat.size(); ++i) write_tensor(out, "vhat", s.vhat.names[i], s.vhat.tensors[i]);
  }
  out << "end\n";
}

Checkpoint read_checkpoint(std::istream& in) {
  LineReader reader(in);
  std::string line;
  if (!reader.next(line) || split_ws(line).size() != 1 || split_ws(line)[0] != kSchema) {
    throw SchemaError("expected '" + std::string(kSchema) + "' header", 1);
  }
  Checkpoint c;
  AmsgradState opt;
  bool has_optimizer = false;
  bool ended = false;
  while (reader.next(line)) {
    const std::size_t ln = reader.number();
    const auto tok = split_ws(line);
    if (tok.empty()) continue;
    const std::string_view key = tok[0];
    if (key == "end") {
      ended = true;
      break;
    }
    if (key == "tensor") {
      if (tok.size() != 5) throw SchemaError("tensor line needs group, name, rows, cols", ln);
      const long long rows = parse_int(tok[3], ln);
      const long long cols = parse_int(tok[4], ln);
      if (rows < 0 || cols < 0) throw SchemaError("negative tensor shape", ln);
      // tok views into `line`, which the rows below overwrite.
      const std::string group(tok[1]), name(tok[2]);
      Eigen::MatrixXd t(rows, cols);
      for (long long r = 0; r < rows; ++r) {
        if (!reader.next(line)) throw SchemaError("truncated tensor '" + name + "'", reader.number());
        const auto vals = split_ws(line);
        if (static_cast<long long>(vals.size()) != cols) {
          throw SchemaError("tensor row has " + std::to_string(vals.size()) + " values, expected " + std::to_string(cols),
                            reader.number());
        }
        for (long long col = 0; col < cols; ++col) t(r, col) = parse_double(vals[static_cast<std::size_t>(col)], reader.number());
      }
      Weights* dst = nullptr;
      if (group == "weights") {
        dst = &c.weights;
      } else if (group == "m") {
        dst = &opt.m;
      } else if (group == "v") {
        dst = &opt.v;
      } else if (group == "vhat") {
        dst = &opt.vhat;
      } else {
        throw SchemaError("unknown tensor group '" + group + "'", ln);
      }
      dst->names.push_back(name);
      dst->tensors.push_back(std::move(t));
      continue;
    }
    if (tok.size() != 2) throw SchemaError("expected 'key value'", ln);
    const std::string_view val = tok[1];
    if (key == "topology_fingerprint") {
      c.topology_fingerprint = std::string(val);
    } else if (key == "network.channels") {
      c.network.channels = static_cast<int>(parse_int(val, ln));
    } else if (key == "network.sgcn_layers") {
      c.network.sgcn_layers = static_cast<int>(parse_int(val, ln));
    } else if (key == "network.mgcn_layers_per_stage") {
      c.network.mgcn_layers_per_stage = static_cast<int>(parse_int(val, ln));
    } else if (key == "network.coord_scale") {
      c.network.coord_scale = parse_double(val, ln);
    } else if (key == "network.seed") {
      c.network.seed = parse_uint(val, ln);
    } else if (key == "network.share_view_weights") {
      c.network.share_view_weights = parse_int(val, ln) != 0;
    } else if (key == "network.variant") {
      try {
        c.network.variant = parse_model_variant(std::string(val));
      } catch (const InvalidArgument& e) {
        throw SchemaError(e.what(), ln);
      }
    } else if (key == "network.fc_hidden") {
      c.network.fc_hidden = static_cast<int>(parse_int(val, ln));
    } else if (key == "step") {
      c.step = parse_int(val, ln);
    } else if (key == "epoch") {
      c.epoch = static_cast<int>(parse_int(val, ln));
    } else if (key == "lr") {
      c.lr = parse_double(val, ln);
    } else if (key == "schedule.best") {
      c.schedule.best = parse_double(val, ln);
    } else if (key == "schedule.since_best") {
      c.schedule.since_best = static_cast<int>(parse_int(val, ln));
    } else if (key == "best_val") {
      c.best_val = parse_double(val, ln);
    } else if (key == "optimizer.step") {
      has_optimizer = true;
      opt.step = parse_int(val, ln);
    } else if (key == "optimizer.beta1") {
      opt.beta1 = parse_double(val, ln);
    } else if (key == "optimizer.beta2") {
      opt.beta2 = parse_double(val, ln);
    } else if (key == "optimizer.eps") {
      opt.eps = parse_double(val, ln);
    } else {
      throw SchemaError("unknown key '" + std::string(key) + "'", ln);
    }
  }
  if (!ended) throw SchemaError("checkpoint truncated (no 'end' line)", reader.number());
  if (has_optimizer) {
    if (opt.m.names != c.weights.names || opt.v.names != c.weights.names || opt.vhat.names != c.weights.names) {
      throw SchemaError("optimizer tensors do not match the weights");
    }
    c.optimizer = std::move(opt);
  }
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ostringstream buf;
  write_checkpoint(buf, ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out << buf.str();
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  try {
    return read_checkpoint(in);
  } catch (const SchemaError& e) {
    throw SchemaError::in_file(path.string(), e);
  }
}

Model model_from_checkpoint(const Checkpoint& ckpt, const SkeletonTopology& topo) {
  if (ckpt.topology_fingerprint != topo.fingerprint) {
    throw SchemaError("checkpoint topology fingerprint " + ckpt.topology_fingerprint + " does not match " +
                      topo.fingerprint);
  }
  Model m;
  m.config = ckpt.network;
  m.config.validate();
  m.topology = topo;
  m.graphs = make_graphs(topo, m.config.variant);
  const auto shapes = parameter_shapes(m.config, topo.num_joints());
  if (shapes.size() != ckpt.weights.size()) throw SchemaError("checkpoint tensor count does not match its configuration");
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const auto& t = ckpt.weights.tensors[i];
    if (shapes[i].name != ckpt.weights.names[i] || shapes[i].rows != t.rows() || shapes[i].cols != t.cols()) {
      throw SchemaError("checkpoint tensor '" + ckpt.weights.names[i] + "' does not match the configuration");
    }
  }
  m.weights = ckpt.weights;
  return m;
}

Checkpoint checkpoint_from_model(const Model& model) {
  Checkpoint c;
  c.network = model.config;
  c.topology_fingerprint = model.topology.fingerprint;
  c.weights = model.weights;
  return c;
}

}  // namespace cvpose

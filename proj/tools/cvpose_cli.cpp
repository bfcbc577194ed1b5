// cvpose: command-line front end for data synthesis, triangulation, training
// and evaluation. Exit codes: 0 success, 1 usage error, 2 data or I/O error.

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "cvpose/checkpoint.hpp"
#include "cvpose/dataset.hpp"
#include "cvpose/evaluation.hpp"
#include "cvpose/rig.hpp"
#include "cvpose/syndata.hpp"
#include "cvpose/training.hpp"

namespace fs = std::filesystem;
using namespace cvpose;

namespace {

struct Options {
  std::string config;
  std::string rig;
  std::string dataset;
  std::string test_dataset;
  std::string checkpoint;
  std::string topology;
  std::string out;
  std::string sample;
  std::string tri_mode = "dual";
  std::string sigmas = "5,10,15,20";
  std::string variants;
  std::optional<std::uint64_t> seed;
  int train_samples = 1000;
  int test_samples = 300;
};

SkeletonTopology topology_of(const Options& o) {
  return o.topology.empty() ? default_topology() : load_topology(o.topology);
}

CameraRig rig_of(const Options& o) { return o.rig.empty() ? default_rig() : load_rig(o.rig); }

TrainConfig train_config_of(const Options& o) {
  TrainConfig c = o.config.empty() ? TrainConfig{} : load_train_config(o.config);
  if (!o.tri_mode.empty()) c.tri_mode = parse_triangulation_mode(o.tri_mode);
  if (o.seed) {
    c.seed = *o.seed;
    c.network.seed = *o.seed;
  }
  c.validate();
  return c;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  for (std::string item; std::getline(in, item, ',');) {
    const auto b = item.find_first_not_of(" \t"), e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

std::vector<double> parse_sigmas(const std::string& text) {
  std::vector<double> out;
  for (const std::string& s : split_list(text)) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != s.size()) throw InvalidArgument("--sigmas: '" + s + "' is not a number");
    out.push_back(v);
  }
  if (out.empty()) throw InvalidArgument("--sigmas: empty list");
  return out;
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

// Writes to --out when given, else to stdout.
void emit(const Options& o, const std::string& text) {
  if (o.out.empty()) {
    std::cout << text;
  } else {
    write_file(o.out, text);
  }
}

Dataset dataset_of(const std::string& path, const SkeletonTopology& topo) {
  return load_dataset(path, topo.num_joints());
}

Model model_of(const Options& o, const SkeletonTopology& topo) {
  return model_from_checkpoint(load_checkpoint(o.checkpoint), topo);
}

int cmd_synth(const Options& o) {
  const SkeletonTopology topo = topology_of(o);
  SyntheticConfig c = o.config.empty() ? SyntheticConfig{} : load_synthetic_config(o.config);
  if (o.seed) c.seed = *o.seed;
  const CameraRig rig = rig_of(o);
  const SyntheticOutput out = generate_dataset(c, rig, topo);
  const fs::path dir(o.out);
  fs::create_directories(dir);
  save_dataset(dir / "dataset.jsonl", out.dataset);
  save_rig(dir / "rig.jsonl", out.assumed_rig);
  save_rig(dir / "rig_true.jsonl", rig);
  write_file(dir / "manifest.txt", out.manifest);
  std::cout << "samples = " << out.dataset.samples.size() << '\n';
  return 0;
}

int cmd_triangulate(const Options& o) {
  const SkeletonTopology topo = topology_of(o);
  const Dataset data = dataset_of(o.dataset, topo);
  const CameraRig rig = rig_of(o);
  const TriangulationMode mode = parse_triangulation_mode(o.tri_mode);

  std::ostringstream text;
  text << nlohmann::ordered_json{{"schema", "coarse-v1"}, {"num_joints", topo.num_joints()}, {"mode", to_string(mode)}}
              .dump()
       << '\n';
  const auto rows = [](const Joints3D& X) {
    nlohmann::ordered_json a = nlohmann::ordered_json::array();
    for (Eigen::Index j = 0; j < X.rows(); ++j) a.push_back({X(j, 0), X(j, 1), X(j, 2)});
    return a;
  };
  double total = 0.0;
  int scored = 0, skipped = 0;
  for (const Sample& s : data.samples) {
    PreparedSample p;
    try {
      p = prepare_sample(s, rig, mode);
    } catch (const DegenerateGeometry& e) {
      ++skipped;
      std::cerr << "skipped " << s.sample_id << ": " << e.what() << '\n';
      continue;
    }
    nlohmann::ordered_json rec;
    rec["sample_id"] = s.sample_id;
    rec["camera_pair"] = {s.camera_pair[0], s.camera_pair[1]};
    rec["coarse"] = {{s.camera_pair[0], rows(p.coarse1)}, {s.camera_pair[1], rows(p.coarse2)}};
    text << rec.dump() << '\n';
    if (s.joints_3d_gt) {
      total += 0.5 * (mpjpe(p.coarse1, (*s.joints_3d_gt)[0]) + mpjpe(p.coarse2, (*s.joints_3d_gt)[1]));
      ++scored;
    }
  }
  if (o.out.empty()) throw InvalidArgument("triangulate needs --out");
  write_file(o.out, text.str());
  std::cout << "samples = " << data.samples.size() - static_cast<std::size_t>(skipped) << '\n';
  std::cout << "skipped = " << skipped << '\n';
  if (scored > 0) std::cout << "mpjpe_tri_mm = " << format_double(total / scored) << '\n';
  return 0;
}

int cmd_train(const Options& o) {
  const SkeletonTopology topo = topology_of(o);
  const TrainConfig config = train_config_of(o);
  const Dataset data = dataset_of(o.dataset, topo);
  const PreparedSet prepared = prepare_samples(data.samples, rig_of(o), config.tri_mode);
  if (prepared.samples.empty()) throw InvalidArgument("no trainable samples in " + o.dataset);
  const auto [train, val] = split_validation(prepared.samples, config.val_fraction);

  FitOptions fo;
  fo.out_dir = o.out;
  if (!o.checkpoint.empty()) fo.resume = load_checkpoint(o.checkpoint);
  fo.on_epoch = [](const EpochStats& e) {
    std::cout << "epoch " << e.epoch << " loss " << format_double(e.loss.total) << " lr " << format_double(e.lr)
              << '\n';
  };
  fs::create_directories(o.out);
  write_file(fs::path(o.out) / "config.txt", to_text(config));
  std::cout << "train = " << train.size() << " val = " << val.size() << " skipped = " << prepared.skipped.size()
            << '\n';
  fit(train, val, config, topo, fo);
  return 0;
}

int cmd_eval(const Options& o) {
  const SkeletonTopology topo = topology_of(o);
  const Model model = model_of(o, topo);
  const Dataset data = dataset_of(o.dataset, topo);
  const EvalReport r = evaluate_model(model, data.samples, rig_of(o), parse_triangulation_mode(o.tri_mode));
  emit(o, format_report(r));
  return 0;
}

int cmd_noise(const Options& o) {
  const SkeletonTopology topo = topology_of(o);
  const Model model = model_of(o, topo);
  const Dataset data = dataset_of(o.dataset, topo);
  const CameraRig rig = rig_of(o);
  const TriangulationMode mode = parse_triangulation_mode(o.tri_mode);
  EvalReport r = evaluate_model(model, data.samples, rig, mode);
  r.noise = run_noise_robustness(model, data.samples, rig, mode, parse_sigmas(o.sigmas), o.seed.value_or(0));
  r.samples.clear();
  emit(o, format_report(r));
  return 0;
}

int cmd_ablate(const Options& o) {
  const SkeletonTopology topo = topology_of(o);
  const TrainConfig config = train_config_of(o);
  const Dataset train = dataset_of(o.dataset, topo);
  const Dataset test = dataset_of(o.test_dataset, topo);
  const std::vector<std::string> variants = o.variants.empty() ? all_ablation_variants() : split_list(o.variants);
  AblationOptions ao;
  ao.on_row = [](const AblationRow& r) { std::cerr << r.variant << ' ' << format_double(r.mpjpe) << '\n'; };
  EvalReport r;
  r.ablation = run_ablation(config, train.samples, test.samples, rig_of(o), topo, variants, ao);
  emit(o, format_report(r));
  return 0;
}

int cmd_unseen(const Options& o) {
  const SkeletonTopology topo = topology_of(o);
  const TrainConfig config = train_config_of(o);
  const CameraRig rig = o.rig.empty() ? ring_rig(3, 60.0) : load_rig(o.rig);
  UnseenPairsOptions uo;
  uo.seed = o.seed.value_or(0);
  uo.train_samples = o.train_samples;
  uo.test_samples = o.test_samples;
  EvalReport r;
  r.pairs = run_unseen_pairs(config, rig, topo, uo);
  emit(o, format_report(r));
  return 0;
}

int cmd_render(const Options& o) {
  const SkeletonTopology topo = topology_of(o);
  const Dataset data = dataset_of(o.dataset, topo);
  const CameraRig rig = rig_of(o);
  const auto it = std::find_if(data.samples.begin(), data.samples.end(),
                               [&](const Sample& s) { return o.sample.empty() || s.sample_id == o.sample; });
  if (it == data.samples.end()) throw InvalidArgument("no sample '" + o.sample + "' in " + o.dataset);

  RenderInput in;
  in.sample = *it;
  in.rig = &rig;
  const PreparedSample p = prepare_sample(*it, rig, parse_triangulation_mode(o.tri_mode));
  in.coarse = std::make_pair(p.coarse1, p.coarse2);
  if (!o.checkpoint.empty()) in.refined = refine_all({p}, model_of(o, topo)).front();
  if (o.out.empty()) throw InvalidArgument("render needs --out");
  save_svg(o.out, render_svg(in, topo));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-view 3D human pose: triangulation, graph refinement, weak supervision"};
  app.require_subcommand(1);
  Options o;

  const auto add_topology = [&](CLI::App* c) { c->add_option("--topology", o.topology, "topo-v1 file (default 17 joints)"); };
  const auto add_seed = [&](CLI::App* c) { c->add_option("--seed", o.seed, "random seed"); };
  const auto add_mode = [&](CLI::App* c) {
    c->add_option("--tri-mode", o.tri_mode, "triangulation mode")->check(CLI::IsMember({"dual", "single"}));
  };

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  synth->add_option("--config", o.config, "synthetic data config");
  synth->add_option("--rig", o.rig, "true camera rig (default two-camera rig)");
  synth->add_option("--out", o.out, "output directory")->required();
  add_seed(synth);
  add_topology(synth);

  auto* tri = app.add_subcommand("triangulate", "triangulate a dataset into coarse poses");
  tri->add_option("--dataset", o.dataset, "data-v1 file")->required();
  tri->add_option("--rig", o.rig, "assumed camera rig")->required();
  tri->add_option("--out", o.out, "coarse pose file")->required();
  add_mode(tri);
  add_topology(tri);

  auto* train = app.add_subcommand("train", "weakly supervised training");
  train->add_option("--dataset", o.dataset, "data-v1 training file")->required();
  train->add_option("--rig", o.rig, "assumed camera rig")->required();
  train->add_option("--config", o.config, "training config");
  train->add_option("--checkpoint", o.checkpoint, "resume from this checkpoint");
  train->add_option("--out", o.out, "run directory")->required();
  add_seed(train);
  add_mode(train);
  add_topology(train);

  auto* eval = app.add_subcommand("eval", "score a checkpoint against ground truth");
  eval->add_option("--checkpoint", o.checkpoint, "model checkpoint")->required();
  eval->add_option("--dataset", o.dataset, "data-v1 file with ground truth")->required();
  eval->add_option("--rig", o.rig, "assumed camera rig")->required();
  eval->add_option("--out", o.out, "report file (default stdout)");
  add_mode(eval);
  add_topology(eval);

  auto* noise = app.add_subcommand("noise", "refinement of coarse poses with added 3D noise");
  noise->add_option("--checkpoint", o.checkpoint, "model checkpoint")->required();
  noise->add_option("--dataset", o.dataset, "data-v1 file with ground truth")->required();
  noise->add_option("--rig", o.rig, "assumed camera rig")->required();
  noise->add_option("--sigmas", o.sigmas, "comma-separated noise levels, mm");
  noise->add_option("--out", o.out, "report file (default stdout)");
  add_seed(noise);
  add_mode(noise);
  add_topology(noise);

  auto* ablate = app.add_subcommand("ablate", "train and compare model variants");
  ablate->add_option("--dataset", o.dataset, "data-v1 training file")->required();
  ablate->add_option("--test-dataset", o.test_dataset, "data-v1 test file with ground truth")->required();
  ablate->add_option("--rig", o.rig, "assumed camera rig")->required();
  ablate->add_option("--config", o.config, "training config");
  ablate->add_option("--variants", o.variants, "comma-separated variants (default all)");
  ablate->add_option("--out", o.out, "report file (default stdout)");
  add_seed(ablate);
  add_mode(ablate);
  add_topology(ablate);

  auto* unseen = app.add_subcommand("unseen", "train on one camera pair, test on all pairs");
  unseen->add_option("--config", o.config, "training config");
  unseen->add_option("--rig", o.rig, "true rig with 3 or more cameras (default 3-camera ring)");
  unseen->add_option("--train-samples", o.train_samples, "training samples")->check(CLI::PositiveNumber);
  unseen->add_option("--test-samples", o.test_samples, "test samples per pair")->check(CLI::PositiveNumber);
  unseen->add_option("--out", o.out, "report file (default stdout)");
  add_seed(unseen);
  add_mode(unseen);
  add_topology(unseen);

  auto* render = app.add_subcommand("render", "draw one sample as SVG");
  render->add_option("--dataset", o.dataset, "data-v1 file")->required();
  render->add_option("--rig", o.rig, "assumed camera rig")->required();
  render->add_option("--checkpoint", o.checkpoint, "model checkpoint for the refined pose");
  render->add_option("--sample", o.sample, "sample id (default first)");
  render->add_option("--out", o.out, "SVG file")->required();
  add_mode(render);
  add_topology(render);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (*synth) return cmd_synth(o);
    if (*tri) return cmd_triangulate(o);
    if (*train) return cmd_train(o);
    if (*eval) return cmd_eval(o);
    if (*noise) return cmd_noise(o);
    if (*ablate) return cmd_ablate(o);
    if (*unseen) return cmd_unseen(o);
    if (*render) return cmd_render(o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  std::cerr << app.help();
  return 1;
}

#include "cvpose/evaluation.hpp"

#include <random>
#include <sstream>

#include "cvpose/checkpoint.hpp"
#include "cvpose/hash.hpp"
#include "cvpose/syndata.hpp"

namespace cvpose {

namespace {

constexpr const char* kNoRefinement = "no-refinement";

const Joints3D& gt_of(const Sample& s, int view) {
  if (!s.joints_3d_gt) throw MissingField("joints_3d_gt (sample " + s.sample_id + ")", 0);
  return (*s.joints_3d_gt)[static_cast<std::size_t>(view)];
}

// Prepared samples in input order, with the originals they came from.
struct Prepared {
  std::vector<PreparedSample> samples;
  std::vector<const Sample*> source;
  std::vector<std::string> skipped;
};

Prepared prepare(const std::vector<Sample>& samples, const CameraRig& rig, TriangulationMode mode) {
  Prepared p;
  for (const Sample& s : samples) {
    try {
      p.samples.push_back(prepare_sample(s, rig, mode));
      p.source.push_back(&s);
    } catch (const DegenerateGeometry&) {
      p.skipped.push_back(s.sample_id);
    }
  }
  return p;
}

struct Scores {
  double mpjpe_coarse = 0.0;
  double mpjpe_refined = 0.0;
  double pmpjpe_coarse = 0.0;
  double pmpjpe_refined = 0.0;
};

// Mean over samples of the per-sample, per-view-averaged errors.
Scores score(const Prepared& p, const std::vector<std::pair<Joints3D, Joints3D>>& refined,
             std::vector<SampleEval>* per_sample = nullptr) {
  Scores total;
  for (std::size_t i = 0; i < p.samples.size(); ++i) {
    const Sample& s = *p.source[i];
    const PreparedSample& ps = p.samples[i];
    SampleEval e;
    e.sample_id = s.sample_id;
    e.camera_pair = s.camera_pair;
    e.mpjpe_tri = 0.5 * (mpjpe(ps.coarse1, gt_of(s, 0)) + mpjpe(ps.coarse2, gt_of(s, 1)));
    e.mpjpe_refined = 0.5 * (mpjpe(refined[i].first, gt_of(s, 0)) + mpjpe(refined[i].second, gt_of(s, 1)));
    e.pmpjpe_tri = 0.5 * (p_mpjpe(ps.coarse1, gt_of(s, 0)) + p_mpjpe(ps.coarse2, gt_of(s, 1)));
    e.pmpjpe_refined = 0.5 * (p_mpjpe(refined[i].first, gt_of(s, 0)) + p_mpjpe(refined[i].second, gt_of(s, 1)));
    total.mpjpe_coarse += e.mpjpe_tri;
    total.mpjpe_refined += e.mpjpe_refined;
    total.pmpjpe_coarse += e.pmpjpe_tri;
    total.pmpjpe_refined += e.pmpjpe_refined;
    if (per_sample) per_sample->push_back(std::move(e));
  }
  const double n = static_cast<double>(std::max<std::size_t>(1, p.samples.size()));
  total.mpjpe_coarse /= n;
  total.mpjpe_refined /= n;
  total.pmpjpe_coarse /= n;
  total.pmpjpe_refined /= n;
  return total;
}

std::string pair_text(const std::array<std::string, 2>& p) { return p[0] + "," + p[1]; }

}  // namespace

double mpjpe(const Joints3D& pred, const Joints3D& gt) {
  if (pred.rows() != gt.rows()) throw ShapeMismatch("mpjpe: joint counts differ");
  if (pred.rows() == 0) throw ShapeMismatch("mpjpe: empty pose");
  return (pred - gt).rowwise().norm().mean();
}

double mpjpe(const Pose3D& pred, const Pose3D& gt) {
  if (pred.frame_id != gt.frame_id) {
    throw FrameMismatch("mpjpe: prediction in frame '" + pred.frame_id + "', ground truth in '" + gt.frame_id + "'");
  }
  return mpjpe(pred.joints, gt.joints);
}

double p_mpjpe(const Joints3D& pred, const Joints3D& gt) {
  if (pred.rows() != gt.rows()) throw ShapeMismatch("p_mpjpe: joint counts differ");
  return mpjpe(procrustes_align<double>(pred, gt), gt);
}

double p_mpjpe(const Pose3D& pred, const Pose3D& gt) {
  if (pred.frame_id != gt.frame_id) {
    throw FrameMismatch("p_mpjpe: prediction in frame '" + pred.frame_id + "', ground truth in '" + gt.frame_id + "'");
  }
  return p_mpjpe(pred.joints, gt.joints);
}

void aggregate(EvalReport& r) {
  r.mpjpe_tri_mm = r.mpjpe_refined_mm = r.pmpjpe_tri_mm = r.pmpjpe_refined_mm = 0.0;
  for (const SampleEval& e : r.samples) {
    r.mpjpe_tri_mm += e.mpjpe_tri;
    r.mpjpe_refined_mm += e.mpjpe_refined;
    r.pmpjpe_tri_mm += e.pmpjpe_tri;
    r.pmpjpe_refined_mm += e.pmpjpe_refined;
  }
  if (r.samples.empty()) return;
  const double n = static_cast<double>(r.samples.size());
  r.mpjpe_tri_mm /= n;
  r.mpjpe_refined_mm /= n;
  r.pmpjpe_tri_mm /= n;
  r.pmpjpe_refined_mm /= n;
}

EvalReport evaluate_model(const Model& model, const std::vector<Sample>& samples, const CameraRig& assumed_rig,
                          TriangulationMode mode) {
  for (const Sample& s : samples) gt_of(s, 0);
  const Prepared p = prepare(samples, assumed_rig, mode);
  EvalReport r;
  r.skipped = p.skipped;
  r.parameter_count = model.weights.count();
  score(p, refine_all(p.samples, model), &r.samples);
  aggregate(r);
  return r;
}

std::string format_report(const EvalReport& r) {
  std::ostringstream out;
  out << "schema = report-v1\n";
  out << "samples = " << r.samples.size() << '\n';
  out << "skipped = " << r.skipped.size() << '\n';
  out << "parameter_count = " << r.parameter_count << '\n';
  out << "mpjpe_tri_mm = " << format_double(r.mpjpe_tri_mm) << '\n';
  out << "mpjpe_refined_mm = " << format_double(r.mpjpe_refined_mm) << '\n';
  out << "pmpjpe_tri_mm = " << format_double(r.pmpjpe_tri_mm) << '\n';
  out << "pmpjpe_refined_mm = " << format_double(r.pmpjpe_refined_mm) << '\n';
  if (!r.noise.empty()) {
    out << "\n[noise]\nsigma_mm,pmpjpe_coarse_mm,pmpjpe_refined_mm,mpjpe_coarse_mm,mpjpe_refined_mm\n";
    for (const NoiseRow& n : r.noise) {
      out << format_double(n.sigma_mm) << ',' << format_double(n.pmpjpe_coarse) << ','
          << format_double(n.pmpjpe_refined) << ',' << format_double(n.mpjpe_coarse) << ','
          << format_double(n.mpjpe_refined) << '\n';
    }
  }
  if (!r.ablation.empty()) {
    out << "\n[ablation]\nvariant,mpjpe_mm,pmpjpe_mm,parameters\n";
    for (const AblationRow& a : r.ablation) {
      out << a.variant << ',' << format_double(a.mpjpe) << ',' << format_double(a.pmpjpe) << ',' << a.parameters
          << '\n';
    }
  }
  if (!r.pairs.empty()) {
    out << "\n[camera_pairs]\ncam_a,cam_b,seen,mpjpe_tri_mm,mpjpe_refined_mm\n";
    for (const PairRow& p : r.pairs) {
      out << pair_text(p.camera_pair) << ',' << (p.seen ? "seen" : "unseen") << ',' << format_double(p.mpjpe_tri)
          << ',' << format_double(p.mpjpe_refined) << '\n';
    }
  }
  if (!r.samples.empty()) {
    out << "\n[per_sample]\nsample_id,cam_a,cam_b,mpjpe_tri_mm,mpjpe_refined_mm,pmpjpe_tri_mm,pmpjpe_refined_mm\n";
    for (const SampleEval& e : r.samples) {
      out << e.sample_id << ',' << pair_text(e.camera_pair) << ',' << format_double(e.mpjpe_tri) << ','
          << format_double(e.mpjpe_refined) << ',' << format_double(e.pmpjpe_tri) << ','
          << format_double(e.pmpjpe_refined) << '\n';
    }
  }
  if (!r.skipped.empty()) {
    out << "\n[skipped]\n";
    for (const std::string& id : r.skipped) out << id << '\n';
  }
  return out.str();
}

std::vector<NoiseRow> run_noise_robustness(const Model& model, const std::vector<Sample>& samples,
                                           const CameraRig& assumed_rig, TriangulationMode mode,
                                           const std::vector<double>& sigmas, std::uint64_t seed) {
  for (const Sample& s : samples) gt_of(s, 0);
  const Prepared base = prepare(samples, assumed_rig, mode);
  std::vector<NoiseRow> rows;
  for (std::size_t k = 0; k < sigmas.size(); ++k) {
    const double sigma = sigmas[k];
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw InvalidArgument("noise sigma must be finite and >= 0");
    // Every level scales the same standard-normal draws (common random numbers).
    std::mt19937_64 rng(mix_seed(seed));
    std::normal_distribution<double> unit(0.0, 1.0);
    Prepared p = base;
    for (PreparedSample& s : p.samples) {
      for (Joints3D* X : {&s.coarse1, &s.coarse2}) {
        for (Eigen::Index i = 0; i < X->size(); ++i) X->data()[i] += sigma * unit(rng);
      }
    }
    const Scores sc = score(p, refine_all(p.samples, model));
    rows.push_back({sigma, sc.pmpjpe_coarse, sc.pmpjpe_refined, sc.mpjpe_coarse, sc.mpjpe_refined});
  }
  return rows;
}

std::vector<std::string> all_ablation_variants() {
  return {kNoRefinement, "fully-connected", "no-spatial", "no-cross-view", "no-fusion", "full"};
}

std::vector<AblationRow> run_ablation(const TrainConfig& config, const std::vector<Sample>& train,
                                      const std::vector<Sample>& test, const CameraRig& assumed_rig,
                                      const SkeletonTopology& topo, const std::vector<std::string>& variants,
                                      const AblationOptions& options) {
  for (const std::string& v : variants) {
    if (v != kNoRefinement) parse_model_variant(v);
  }
  for (const Sample& s : test) gt_of(s, 0);
  const Prepared test_set = prepare(test, assumed_rig, config.tri_mode);
  bool need_training = false;
  for (const std::string& v : variants) need_training |= v != kNoRefinement && !(v == "full" && options.trained_full);
  std::vector<PreparedSample> fit_train, fit_val;
  if (need_training) {
    std::tie(fit_train, fit_val) =
        split_validation(prepare_samples(train, assumed_rig, config.tri_mode).samples, config.val_fraction);
  }

  std::vector<AblationRow> rows;
  for (const std::string& v : variants) {
    AblationRow row;
    row.variant = v;
    if (v == kNoRefinement) {
      const Scores sc = score(test_set, [&] {
        std::vector<std::pair<Joints3D, Joints3D>> same;
        for (const PreparedSample& s : test_set.samples) same.emplace_back(s.coarse1, s.coarse2);
        return same;
      }());
      row.mpjpe = sc.mpjpe_coarse;
      row.pmpjpe = sc.pmpjpe_coarse;
    } else {
      TrainConfig c = config;
      c.network.variant = parse_model_variant(v);
      Model model;
      if (v == "full" && options.trained_full) {
        model = *options.trained_full;
      } else {
        const FitResult fitted = fit(fit_train, fit_val, c, topo);
        model = fitted.state.model;
        model.weights = fitted.best_weights;
      }
      const Scores sc = score(test_set, refine_all(test_set.samples, model));
      row.mpjpe = sc.mpjpe_refined;
      row.pmpjpe = sc.pmpjpe_refined;
      row.parameters = model.weights.count();
    }
    rows.push_back(row);
    if (options.on_row) options.on_row(row);
  }
  return rows;
}

std::vector<PairRow> run_unseen_pairs(const TrainConfig& config, const CameraRig& rig, const SkeletonTopology& topo,
                                      const UnseenPairsOptions& o) {
  if (rig.cameras.size() < 3) throw UnsupportedViewCount(static_cast<int>(rig.cameras.size()));
  std::vector<std::array<std::string, 2>> pairs;
  for (std::size_t a = 0; a < rig.cameras.size(); ++a) {
    for (std::size_t b = a + 1; b < rig.cameras.size(); ++b) pairs.push_back({rig.cameras[a].id, rig.cameras[b].id});
  }

  SyntheticConfig sc;
  sc.n_samples = o.train_samples;
  sc.seed = o.seed;
  sc.sigma_px = o.sigma_px;
  sc.perturb_rot_deg = o.perturb_rot_deg;
  sc.perturb_trans_mm = o.perturb_trans_mm;
  sc.calibration_seed = mix_seed(o.seed ^ 0x63616c6962ull);
  sc.camera_pairs = {pairs.front()};
  const SyntheticOutput train = generate_dataset(sc, rig, topo);
  const auto prepared = prepare_samples(train.dataset.samples, train.assumed_rig, config.tri_mode).samples;
  const auto [fit_train, fit_val] = split_validation(prepared, config.val_fraction);
  const FitResult fitted = fit(fit_train, fit_val, config, topo);
  Model model = fitted.state.model;
  model.weights = fitted.best_weights;

  std::vector<PairRow> rows;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    sc.n_samples = o.test_samples;
    sc.seed = mix_seed(o.seed + 1 + k);
    sc.camera_pairs = {pairs[k]};
    const SyntheticOutput test = generate_dataset(sc, rig, topo);
    const Prepared p = prepare(test.dataset.samples, test.assumed_rig, config.tri_mode);
    const Scores s = score(p, refine_all(p.samples, model));
    rows.push_back({pairs[k], k == 0, s.mpjpe_coarse, s.mpjpe_refined});
  }
  return rows;
}

}  // namespace cvpose

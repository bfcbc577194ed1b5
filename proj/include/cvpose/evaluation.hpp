#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cvpose/dataset.hpp"
#include "cvpose/network.hpp"
#include "cvpose/procrustes.hpp"
#include "cvpose/rig.hpp"
#include "cvpose/training.hpp"

namespace cvpose {

/// Mean per-joint Euclidean distance. Throws FrameMismatch when the poses
/// are expressed in different frames, ShapeMismatch on differing joint counts.
double mpjpe(const Pose3D& pred, const Pose3D& gt);
double mpjpe(const Joints3D& pred, const Joints3D& gt);
/// MPJPE after similarity alignment of pred onto gt.
double p_mpjpe(const Pose3D& pred, const Pose3D& gt);
double p_mpjpe(const Joints3D& pred, const Joints3D& gt);

/// Per-sample errors, each the mean over the sample's two camera-frame poses.
struct SampleEval {
  std::string sample_id;
  std::array<std::string, 2> camera_pair;
  double mpjpe_tri = 0.0;
  double mpjpe_refined = 0.0;
  double pmpjpe_tri = 0.0;
  double pmpjpe_refined = 0.0;
};

struct NoiseRow {
  double sigma_mm = 0.0;
  double pmpjpe_coarse = 0.0;
  double pmpjpe_refined = 0.0;
  double mpjpe_coarse = 0.0;
  double mpjpe_refined = 0.0;
};

struct AblationRow {
  std::string variant;
  double mpjpe = 0.0;
  double pmpjpe = 0.0;
  std::size_t parameters = 0;
};

struct PairRow {
  std::array<std::string, 2> camera_pair;
  bool seen = false;
  double mpjpe_tri = 0.0;
  double mpjpe_refined = 0.0;
};

struct EvalReport {
  std::vector<SampleEval> samples;
  /// Ids left out because their triangulation was degenerate.
  std::vector<std::string> skipped;
  double mpjpe_tri_mm = 0.0;
  double mpjpe_refined_mm = 0.0;
  double pmpjpe_tri_mm = 0.0;
  double pmpjpe_refined_mm = 0.0;
  std::size_t parameter_count = 0;
  std::vector<NoiseRow> noise;
  std::vector<AblationRow> ablation;
  std::vector<PairRow> pairs;
};

/// Recomputes the aggregates as means of the per-sample values.
void aggregate(EvalReport& report);

/// Triangulates with the assumed rig, refines, and scores against ground
/// truth. Throws MissingField when a sample carries no ground truth.
EvalReport evaluate_model(const Model& model, const std::vector<Sample>& samples, const CameraRig& assumed_rig,
                          TriangulationMode mode);

/// Structured text: `key = value` lines (17 significant digits) followed by
/// one section per non-empty table.
std::string format_report(const EvalReport& report);

/// For each sigma adds i.i.d. N(0, sigma^2) mm noise to every coordinate of
/// both coarse poses, refines, and compares coarse and refined errors.
std::vector<NoiseRow> run_noise_robustness(const Model& model, const std::vector<Sample>& samples,
                                           const CameraRig& assumed_rig, TriangulationMode mode,
                                           const std::vector<double>& sigmas, std::uint64_t seed);

/// "no-refinement" plus the model variant names.
std::vector<std::string> all_ablation_variants();

struct AblationOptions {
  /// When set, the "full" row reuses this trained model instead of training.
  std::optional<Model> trained_full;
  /// Called after each row.
  std::function<void(const AblationRow&)> on_row;
};

/// Trains each requested variant with the same data, config and seed and
/// scores it on `test`. "no-refinement" is the triangulation itself.
std::vector<AblationRow> run_ablation(const TrainConfig& config, const std::vector<Sample>& train,
                                      const std::vector<Sample>& test, const CameraRig& assumed_rig,
                                      const SkeletonTopology& topo, const std::vector<std::string>& variants,
                                      const AblationOptions& options = {});

struct UnseenPairsOptions {
  int train_samples = 1000;
  int test_samples = 300;
  std::uint64_t seed = 0;
  double sigma_px = 5.0;
  double perturb_rot_deg = 0.2;
  double perturb_trans_mm = 5.0;
};

/// Synthesizes data on `rig`, trains on the first camera pair only, and
/// scores every pair of the rig without retraining.
std::vector<PairRow> run_unseen_pairs(const TrainConfig& config, const CameraRig& rig, const SkeletonTopology& topo,
                                      const UnseenPairsOptions& options);

/// Poses drawn by render_svg; any of them may be absent.
struct RenderInput {
  Sample sample;
  std::optional<std::pair<Joints3D, Joints3D>> coarse;
  std::optional<std::pair<Joints3D, Joints3D>> refined;
  const CameraRig* rig = nullptr;
};

/// Standalone SVG: both images with 2D detections and annotations, and an
/// orthographic view of the view-1 skeletons (coarse dashed, refined solid,
/// ground truth dotted). Byte-identical for identical input.
std::string render_svg(const RenderInput& input, const SkeletonTopology& topo);
void save_svg(const std::filesystem::path& path, const std::string& svg);

}  // namespace cvpose

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "cvpose/evaluation.hpp"

namespace cvpose {

namespace {

constexpr double kPanel = 360.0;
constexpr double kMargin = 20.0;
constexpr double kTitle = 24.0;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  // Avoid "-0.00" so tiny sign flips cannot change the bytes.
  return std::string(buf) == "-0.00" ? "0.00" : buf;
}

double panel_x(int index) { return kMargin + index * (kPanel + kMargin); }

void panel_frame(std::ostringstream& out, int index, const std::string& title) {
  const double x = panel_x(index), y = kTitle + kMargin;
  out << "<rect x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\"" << num(kPanel) << "\" height=\"" << num(kPanel)
      << "\" fill=\"none\" stroke=\"#999999\"/>\n";
  out << "<text x=\"" << num(x) << "\" y=\"" << num(kTitle + 6.0) << "\" font-size=\"14\">" << title << "</text>\n";
}

// Detections (filled) and annotations (hollow) in image coordinates, with
// annotation bones as thin lines.
void image_panel(std::ostringstream& out, int index, const Sample& s, int view, const CameraModel* cam,
                 const SkeletonTopology& topo) {
  const auto v = static_cast<std::size_t>(view);
  panel_frame(out, index, "view " + std::to_string(view + 1) + " (" + s.camera_pair[v] + ")");
  double w = cam ? cam->width : 0.0, h = cam ? cam->height : 0.0;
  if (w <= 0.0 || h <= 0.0) {
    w = std::max({1.0, s.joints_2d[v].col(0).maxCoeff(), s.joints_2d_clean[v].col(0).maxCoeff()});
    h = std::max({1.0, s.joints_2d[v].col(1).maxCoeff(), s.joints_2d_clean[v].col(1).maxCoeff()});
  }
  const double k = kPanel / std::max(w, h);
  const double x0 = panel_x(index), y0 = kTitle + kMargin;
  const auto X = [&](double u) { return num(x0 + k * u); };
  const auto Y = [&](double u) { return num(y0 + k * u); };
  const Joints2D& y = s.joints_2d_clean[v];
  const Joints2D& d = s.joints_2d[v];
  out << "<g class=\"image-bones\" stroke=\"#7f7f7f\" stroke-width=\"1\">\n";
  for (const auto& [c, p] : topo.bones) {
    out << "<line x1=\"" << X(y(c, 0)) << "\" y1=\"" << Y(y(c, 1)) << "\" x2=\"" << X(y(p, 0)) << "\" y2=\""
        << Y(y(p, 1)) << "\"/>\n";
  }
  out << "</g>\n<g class=\"annotations\" fill=\"none\" stroke=\"#2ca02c\">\n";
  for (Eigen::Index j = 0; j < y.rows(); ++j) {
    out << "<circle cx=\"" << X(y(j, 0)) << "\" cy=\"" << Y(y(j, 1)) << "\" r=\"3.5\"/>\n";
  }
  out << "</g>\n<g class=\"detections\" fill=\"#d62728\">\n";
  for (Eigen::Index j = 0; j < d.rows(); ++j) {
    out << "<circle cx=\"" << X(d(j, 0)) << "\" cy=\"" << Y(d(j, 1)) << "\" r=\"2\"/>\n";
  }
  out << "</g>\n";
}

struct Skeleton3D {
  const char* cls;
  const char* color;
  const char* dash;
  const Joints3D* joints;
};

// Orthographic view of camera-1 frame poses, turned about the vertical axis
// so depth errors are visible.
void skeleton_panel(std::ostringstream& out, int index, const std::vector<Skeleton3D>& skeletons,
                    const SkeletonTopology& topo) {
  panel_frame(out, index, "3D, view 1 frame (orthographic)");
  const double az = 35.0 * M_PI / 180.0, el = 15.0 * M_PI / 180.0;
  Eigen::Matrix3d Ry, Rx;
  Ry << std::cos(az), 0, -std::sin(az), 0, 1, 0, std::sin(az), 0, std::cos(az);
  Rx << 1, 0, 0, 0, std::cos(el), -std::sin(el), 0, std::sin(el), std::cos(el);
  const Eigen::Matrix3d R = Rx * Ry;

  std::vector<Eigen::Matrix<double, Eigen::Dynamic, 2>> flat;
  Eigen::Vector2d lo = Eigen::Vector2d::Constant(std::numeric_limits<double>::infinity());
  Eigen::Vector2d hi = -lo;
  for (const Skeleton3D& s : skeletons) {
    const Joints3D r = *s.joints * R.transpose();
    flat.emplace_back(r.leftCols<2>());
    lo = lo.cwiseMin(flat.back().colwise().minCoeff().transpose());
    hi = hi.cwiseMax(flat.back().colwise().maxCoeff().transpose());
  }
  if (flat.empty()) return;
  const double extent = std::max(1.0, (hi - lo).maxCoeff());
  const double k = (kPanel - 2.0 * kMargin) / extent;
  const Eigen::Vector2d mid = 0.5 * (lo + hi);
  const double cx = panel_x(index) + 0.5 * kPanel, cy = kTitle + kMargin + 0.5 * kPanel;

  for (std::size_t i = 0; i < skeletons.size(); ++i) {
    const Skeleton3D& s = skeletons[i];
    out << "<g class=\"" << s.cls << "\" stroke=\"" << s.color
        << "\" stroke-width=\"2\" fill=\"none\" stroke-linecap=\"round\"";
    if (*s.dash) out << " stroke-dasharray=\"" << s.dash << "\"";
    out << ">\n";
    for (const auto& [c, p] : topo.bones) {
      out << "<polyline class=\"" << s.cls << "\" points=\"";
      for (int j : {p, c}) {
        out << num(cx + k * (flat[i](j, 0) - mid(0))) << ',' << num(cy + k * (flat[i](j, 1) - mid(1)))
            << (j == c ? "" : " ");
      }
      out << "\"/>\n";
    }
    out << "</g>\n";
  }

  double ly = kTitle + kMargin + kPanel - 10.0 - 16.0 * static_cast<double>(skeletons.size() - 1);
  for (const Skeleton3D& s : skeletons) {
    const double lx = panel_x(index) + 10.0;
    out << "<line x1=\"" << num(lx) << "\" y1=\"" << num(ly) << "\" x2=\"" << num(lx + 24.0) << "\" y2=\"" << num(ly)
        << "\" stroke=\"" << s.color << "\" stroke-width=\"2\"";
    if (*s.dash) out << " stroke-dasharray=\"" << s.dash << "\"";
    out << "/>\n<text x=\"" << num(lx + 30.0) << "\" y=\"" << num(ly + 4.0) << "\" font-size=\"12\">" << s.cls
        << "</text>\n";
    ly += 16.0;
  }
}

}  // namespace

std::string render_svg(const RenderInput& in, const SkeletonTopology& topo) {
  const Sample& s = in.sample;
  for (int v = 0; v < 2; ++v) {
    const auto i = static_cast<std::size_t>(v);
    if (s.joints_2d[i].rows() != topo.num_joints() || s.joints_2d_clean[i].rows() != topo.num_joints()) {
      throw ShapeMismatch("render_svg: sample joint count differs from the topology");
    }
  }
  const double width = 3.0 * kPanel + 4.0 * kMargin;
  const double height = kTitle + kPanel + 2.0 * kMargin;
  std::ostringstream out;
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width) << "\" height=\"" << num(height)
      << "\" viewBox=\"0 0 " << num(width) << ' ' << num(height) << "\">\n";
  out << "<title>sample " << s.sample_id << "</title>\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
  for (int v = 0; v < 2; ++v) {
    const std::string& id = s.camera_pair[static_cast<std::size_t>(v)];
    const CameraModel* cam = in.rig && in.rig->contains(id) ? &in.rig->at(id) : nullptr;
    image_panel(out, v, s, v, cam, topo);
  }
  std::vector<Skeleton3D> skeletons;
  if (s.joints_3d_gt) skeletons.push_back({"ground-truth", "#2ca02c", "1,4", &(*s.joints_3d_gt)[0]});
  if (in.coarse) skeletons.push_back({"coarse", "#ff7f0e", "6,4", &in.coarse->first});
  if (in.refined) skeletons.push_back({"refined", "#1f77b4", "", &in.refined->first});
  for (const Skeleton3D& sk : skeletons) {
    if (sk.joints->rows() != topo.num_joints()) throw ShapeMismatch("render_svg: pose joint count differs");
  }
  skeleton_panel(out, 2, skeletons, topo);
  out << "</svg>\n";
  return out.str();
}

void save_svg(const std::filesystem::path& path, const std::string& svg) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << svg;
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace cvpose

#pragma once

// Ray generation and minimal volumetric rendering of a scene function that
// maps 3-D points to (r, g, b, raw density).

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <vector>

#include "functa/ad.hpp"

namespace functa::inr {
class LatentModulatedSiren;
}

namespace functa::render {

struct CameraPose {
  /// Camera-to-world transform; the last column holds the camera position.
  Eigen::Matrix4d matrix = Eigen::Matrix4d::Identity();
  double focal = 1.0;

  /// Throws ContractViolation for a non-orthogonal rotation or zero focal.
  void validate() const;
  Eigen::Matrix3d rotation() const { return matrix.topLeftCorner<3, 3>(); }
  Eigen::Vector3d position() const { return matrix.topRightCorner<3, 1>(); }
};

/// Camera at `eye` looking at `target`, with +z as world up.
CameraPose look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target, double focal);

struct RenderConfig {
  int height = 16;
  int width = 16;
  int num_points_per_ray = 32;
  double near = 0.8;
  double far = 1.8;
  bool white_background = true;

  void validate() const;
};

/// One ray per selected pixel, ordered row by row.
struct RayBatch {
  ad::Tensor origins;     // n x 3
  ad::Tensor directions;  // n x 3
  std::vector<double> z;  // depths shared by every ray

  ad::Index size() const { return origins.rows(); }
  /// Query points, ray-major: row r * z.size() + k is origin_r + z_k * dir_r.
  ad::Tensor points() const;
  RayBatch select(const std::vector<int>& rays) const;
};

/// Pixel (row j, column i) gets direction R * ((i - w/2)/f, -(j - h/2)/f, -1).
RayBatch rays_from_pose(const CameraPose& pose, const RenderConfig& config);

/// Maps an (n x 3) batch of points to (n x 4) raw outputs.
using SceneFn = std::function<ad::Value(const ad::Value& points)>;

struct Composite {
  ad::Value rgb;      // rays x 3
  ad::Value weights;  // rays x points_per_ray
};

/// Volumetric compositing of raw scene outputs laid out as RayBatch::points().
Composite composite(const ad::Value& raw, const std::vector<double>& z, bool white_background);

/// Differentiable rendering of a ray batch. Throws NumericalError on
/// non-finite scene outputs.
Composite render_rays(const SceneFn& scene, const RayBatch& rays, const RenderConfig& config);

/// Graph-free render of a full view, (height*width) x 3, rows in pixel order.
ad::Tensor render_image(const SceneFn& scene, const CameraPose& pose, const RenderConfig& config,
                        int rays_per_chunk = 4096);

SceneFn siren_scene(const inr::LatentModulatedSiren& model, const ad::Value& phi);

struct View {
  CameraPose pose;
  ad::Tensor image;  // (height*width) x 3
};

struct Subsample {
  /// 0 selects every view / pixel.
  int num_views = 0;
  int num_pixels = 0;
};

struct ViewSelection {
  int view = 0;
  std::vector<int> pixels;
};

/// Seeded random subset of views and of pixels inside each chosen view.
std::vector<ViewSelection> sample_pixels(const std::vector<View>& views, const Subsample& sub,
                                         const RenderConfig& config, std::uint64_t seed);

/// Mean squared error of rendered against target colours over a selection.
ad::Value scene_recon_loss(const SceneFn& scene, const std::vector<View>& views,
                           const std::vector<ViewSelection>& selection, const RenderConfig& config);
ad::Value scene_recon_loss(const SceneFn& scene, const std::vector<View>& views, const Subsample& sub,
                           const RenderConfig& config, std::uint64_t seed);

}  // namespace functa::render

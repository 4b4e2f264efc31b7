#include "functa/render.hpp"

#include <Eigen/Geometry>
#include <cmath>
#include <string>

#include "functa/error.hpp"
#include "functa/inr.hpp"
#include "functa/rng.hpp"

namespace functa::render {

void CameraPose::validate() const {
  require(focal != 0.0 && std::isfinite(focal), "CameraPose: focal length must be non-zero");
  const Eigen::Matrix3d r = rotation();
  const double err = (r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  require(err <= 1e-4, "CameraPose: rotation block is not orthogonal");
}

CameraPose look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target, double focal) {
  const Eigen::Vector3d back = (eye - target).normalized();
  Eigen::Vector3d up(0.0, 0.0, 1.0);
  if (std::abs(back.dot(up)) > 0.999) up = Eigen::Vector3d(0.0, 1.0, 0.0);
  const Eigen::Vector3d right = up.cross(back).normalized();
  const Eigen::Vector3d cam_up = back.cross(right);
  CameraPose pose;
  pose.matrix.setIdentity();
  pose.matrix.block<3, 1>(0, 0) = right;
  pose.matrix.block<3, 1>(0, 1) = cam_up;
  pose.matrix.block<3, 1>(0, 2) = back;
  pose.matrix.block<3, 1>(0, 3) = eye;
  pose.focal = focal;
  return pose;
}

void RenderConfig::validate() const {
  require(height >= 1 && width >= 1, "RenderConfig: image must be at least 1x1");
  require(num_points_per_ray >= 2, "RenderConfig: need at least 2 points per ray");
  require(near > 0.0 && near < far, "RenderConfig: need 0 < near < far");
}

ad::Tensor RayBatch::points() const {
  const auto p = static_cast<ad::Index>(z.size());
  ad::Tensor out(size() * p, 3);
  for (ad::Index r = 0; r < size(); ++r) {
    for (ad::Index k = 0; k < p; ++k) {
      out.row(r * p + k) = origins.row(r) + directions.row(r) * z[static_cast<std::size_t>(k)];
    }
  }
  return out;
}

RayBatch RayBatch::select(const std::vector<int>& rays) const {
  RayBatch out;
  out.z = z;
  out.origins.resize(static_cast<ad::Index>(rays.size()), 3);
  out.directions.resize(static_cast<ad::Index>(rays.size()), 3);
  for (std::size_t i = 0; i < rays.size(); ++i) {
    require(rays[i] >= 0 && rays[i] < size(), "RayBatch::select: ray index out of range");
    out.origins.row(static_cast<ad::Index>(i)) = origins.row(rays[i]);
    out.directions.row(static_cast<ad::Index>(i)) = directions.row(rays[i]);
  }
  return out;
}

RayBatch rays_from_pose(const CameraPose& pose, const RenderConfig& config) {
  pose.validate();
  config.validate();
  const Eigen::Matrix3d rot = pose.rotation();
  const Eigen::Vector3d origin = pose.position();
  RayBatch rays;
  const ad::Index n = static_cast<ad::Index>(config.height) * config.width;
  rays.origins.resize(n, 3);
  rays.directions.resize(n, 3);
  for (int j = 0; j < config.height; ++j) {
    for (int i = 0; i < config.width; ++i) {
      const Eigen::Vector3d dir((i - config.width * 0.5) / pose.focal,
                                -(j - config.height * 0.5) / pose.focal, -1.0);
      const ad::Index r = static_cast<ad::Index>(j) * config.width + i;
      rays.directions.row(r) = (rot * dir).transpose();
      rays.origins.row(r) = origin.transpose();
    }
  }
  rays.z.resize(static_cast<std::size_t>(config.num_points_per_ray));
  const int p = config.num_points_per_ray;
  for (int k = 0; k < p; ++k) {
    rays.z[static_cast<std::size_t>(k)] = config.near + (config.far - config.near) * k / (p - 1);
  }
  return rays;
}

Composite composite(const ad::Value& raw, const std::vector<double>& z, bool white_background) {
  const auto p = static_cast<ad::Index>(z.size());
  require(p >= 2, "composite: need at least 2 points per ray");
  require(raw.cols() == 4 && raw.rows() % p == 0, "composite: raw outputs must be (rays*points) x 4");
  const ad::Index n = raw.rows() / p;

  ad::Tensor distances(1, p);
  for (ad::Index k = 0; k + 1 < p; ++k) distances(0, k) = z[k + 1] - z[k];
  distances(0, p - 1) = 1e-3;

  ad::Value density = ad::reshape(ad::slice_cols(raw, 3, 1), n, p);
  density = ad::clip(ad::add_scalar(ad::elu(density, 0.1), 0.1), 0.0, 10.0);
  const ad::Value alpha =
      ad::add_scalar(ad::neg(ad::exp(ad::neg(ad::mul_row(density, ad::Value::constant(distances))))), 1.0);
  ad::Value trans = ad::min_scalar(ad::add_scalar(ad::neg(alpha), 1.0 + 1e-10), 1.0);
  trans = ad::concat_cols({ad::Value::full(n, 1, 1.0), ad::slice_cols(trans, 0, p - 1)});
  const ad::Value weights = ad::mul(alpha, ad::cumprod_cols(trans));

  // Weighted sum over each ray's points via a constant selector.
  const ad::Value rgb_raw = ad::slice_cols(raw, 0, 3);
  const ad::Value weighted = ad::mul(rgb_raw, ad::repeat_cols(ad::reshape(weights, n * p, 1), 3));
  ad::Tensor selector = ad::Tensor::Zero(p * 3, 3);
  for (ad::Index k = 0; k < p; ++k)
    for (ad::Index c = 0; c < 3; ++c) selector(k * 3 + c, c) = 1.0;
  ad::Value rgb = ad::matmul(ad::reshape(weighted, n, p * 3), ad::Value::constant(selector));
  if (white_background) {
    rgb = ad::add(rgb, ad::repeat_cols(ad::add_scalar(ad::neg(ad::sum_cols(weights)), 1.0), 3));
  }
  return {rgb, weights};
}

Composite render_rays(const SceneFn& scene, const RayBatch& rays, const RenderConfig& config) {
  config.validate();
  const ad::Value raw = scene(ad::Value::constant(rays.points()));
  require(raw.rows() == rays.size() * static_cast<ad::Index>(rays.z.size()) && raw.cols() == 4,
          "render_rays: scene function must return one (rgb, density) row per point");
  if (!raw.data().allFinite()) throw NumericalError("render_rays: scene function returned non-finite values");
  return composite(raw, rays.z, config.white_background);
}

ad::Tensor render_image(const SceneFn& scene, const CameraPose& pose, const RenderConfig& config,
                        int rays_per_chunk) {
  require(rays_per_chunk >= 1, "render_image: chunk size must be positive");
  ad::NoGradGuard no_grad;
  const RayBatch rays = rays_from_pose(pose, config);
  ad::Tensor out(rays.size(), 3);
  for (ad::Index start = 0; start < rays.size(); start += rays_per_chunk) {
    const ad::Index count = std::min<ad::Index>(rays_per_chunk, rays.size() - start);
    RayBatch chunk;
    chunk.z = rays.z;
    chunk.origins = rays.origins.middleRows(start, count);
    chunk.directions = rays.directions.middleRows(start, count);
    out.middleRows(start, count) = render_rays(scene, chunk, config).rgb.data();
  }
  return out;
}

SceneFn siren_scene(const inr::LatentModulatedSiren& model, const ad::Value& phi) {
  require(model.config().in_dim == 3 && model.config().out_dim == 4,
          "siren_scene: scene networks map 3-D points to 4 outputs");
  const ad::Value shifts = model.shifts(phi);
  return [&model, shifts](const ad::Value& points) {
    return inr::shift_forward(model.config(), model.params(), shifts, points);
  };
}

std::vector<ViewSelection> sample_pixels(const std::vector<View>& views, const Subsample& sub,
                                         const RenderConfig& config, std::uint64_t seed) {
  require(!views.empty(), "sample_pixels: no views");
  const int n_views = static_cast<int>(views.size());
  const int n_pixels = config.height * config.width;
  require(sub.num_views >= 0 && sub.num_views <= n_views, "sample_pixels: more views requested than available");
  require(sub.num_pixels >= 0 && sub.num_pixels <= n_pixels,
          "sample_pixels: more pixels requested than the image holds");
  Rng rng(seed);
  std::vector<int> chosen;
  if (sub.num_views == 0) {
    for (int v = 0; v < n_views; ++v) chosen.push_back(v);
  } else {
    chosen = rng.choose(n_views, sub.num_views);
  }
  std::vector<ViewSelection> out;
  for (int v : chosen) {
    require(views[static_cast<std::size_t>(v)].image.rows() == n_pixels &&
                views[static_cast<std::size_t>(v)].image.cols() == 3,
            "sample_pixels: view image does not match the render size");
    ViewSelection s;
    s.view = v;
    if (sub.num_pixels == 0) {
      for (int i = 0; i < n_pixels; ++i) s.pixels.push_back(i);
    } else {
      s.pixels = rng.choose(n_pixels, sub.num_pixels);
    }
    out.push_back(std::move(s));
  }
  return out;
}

ad::Value scene_recon_loss(const SceneFn& scene, const std::vector<View>& views,
                           const std::vector<ViewSelection>& selection, const RenderConfig& config) {
  require(!selection.empty(), "scene_recon_loss: empty selection");
  std::vector<ad::Value> predicted;
  ad::Index total = 0;
  for (const auto& s : selection) total += static_cast<ad::Index>(s.pixels.size());
  ad::Tensor targets(total, 3);
  ad::Index row = 0;
  for (const auto& s : selection) {
    const View& view = views.at(static_cast<std::size_t>(s.view));
    const RayBatch rays = rays_from_pose(view.pose, config).select(s.pixels);
    predicted.push_back(render_rays(scene, rays, config).rgb);
    for (int px : s.pixels) targets.row(row++) = view.image.row(px);
  }
  const ad::Value pred = predicted.size() == 1 ? predicted[0] : ad::concat_rows(predicted);
  return ad::mean(ad::square(ad::sub(pred, ad::Value::constant(targets))));
}

ad::Value scene_recon_loss(const SceneFn& scene, const std::vector<View>& views, const Subsample& sub,
                           const RenderConfig& config, std::uint64_t seed) {
  return scene_recon_loss(scene, views, sample_pixels(views, sub, config, seed), config);
}

}  // namespace functa::render

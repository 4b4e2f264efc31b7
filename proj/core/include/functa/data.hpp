#pragma once

// Coordinate grids, deterministic synthetic datasets and simple file I/O.
//
// Pixel and voxel coordinates are cell centres of the unit square / cube.
// Grids are ordered row-major: for images row index first, then column.

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "functa/ad.hpp"
#include "functa/render.hpp"

namespace functa::data {

enum class Geometry { kSquare, kCube, kSphere };

struct CoordGrid {
  ad::Tensor coords;  // N x in_dim
  Geometry geometry = Geometry::kSquare;
  /// Extent per axis, e.g. {h, w}, {r, r, r} or {n_lat, n_lon}.
  std::vector<int> shape;

  ad::Index size() const { return coords.rows(); }
};

CoordGrid grid_2d(int height, int width);
CoordGrid grid_3d(int resolution);

/// n latitudes from pi/2 down to -pi/2.
std::vector<double> latitudes(int n);
/// n longitudes 0, 2pi/n, ..., 2pi(n-1)/n.
std::vector<double> longitudes(int n);
/// (cos lat cos lon, cos lat sin lon, sin lat), latitude-major.
CoordGrid sphere_coords(const std::vector<double>& lat, const std::vector<double>& lon);

// ---------------------------------------------------------------------------
// Analytic signals

/// amplitude * exp(-|x - centre|^2 / (2 sigma^2)) at every pixel centre.
/// `center` is (row, column) in unit-square coordinates.
ad::Tensor blob_image(int height, int width, const Eigen::Vector2d& center, double sigma, double amplitude);

enum class ShapeKind { kEllipsoid, kBox };

struct VoxelShape {
  ShapeKind kind = ShapeKind::kEllipsoid;
  Eigen::Vector3d center{0.5, 0.5, 0.5};
  /// Semi-axes (ellipsoid) or half extents (box).
  Eigen::Vector3d radii{0.3, 0.3, 0.3};
};

/// Binary occupancy at voxel centres after rescaling each axis about the
/// shape centre by `scale`.
ad::Tensor voxelize(const VoxelShape& shape, int resolution,
                    const Eigen::Vector3d& scale = Eigen::Vector3d::Ones());

struct Sphere {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double radius = 0.5;
  Eigen::Vector3d color{1.0, 0.0, 0.0};
  /// Raw density returned inside the sphere.
  double inside_raw = 8.0;
};

/// Raw density returned outside every sphere; renders as exactly zero density.
inline constexpr double kEmptyRaw = -1e9;

/// Raw (rgb, density) field of a single sphere, one row per point.
ad::Tensor sphere_field(const Sphere& sphere, const ad::Tensor& points);
render::SceneFn sphere_scene(const Sphere& sphere);

/// Render of a sphere computed per ray from ray/sphere intersections and the
/// geometric series of equal-alpha samples.
ad::Tensor render_sphere_closed_form(const Sphere& sphere, const render::CameraPose& pose,
                                     const render::RenderConfig& config);

/// Smooth periodic field on the sphere, values in [0, 1].
struct SphereFieldTerm {
  double amplitude = 0.0;
  int lat_freq = 1;
  int lon_freq = 1;
  double lat_phase = 0.0;
  double lon_phase = 0.0;
};
double sphere_field_value(const std::vector<SphereFieldTerm>& terms, double lat, double lon);

// ---------------------------------------------------------------------------
// Synthetic datasets

enum class SyntheticKind { kBlobs, kVoxels, kScenes, kSphereFields };

struct SyntheticSpec {
  SyntheticKind kind = SyntheticKind::kBlobs;
  int count = 16;
  /// Image side, voxel grid side, view side or number of latitudes.
  int resolution = 32;
  std::uint64_t seed = 0;
  /// Posed views per scene.
  int views = 8;
  /// Scene camera distance from the origin and render depth range.
  double camera_distance = 2.0;
  double near = 1.25;
  double far = 2.75;
  int points_per_ray = 24;
};

struct Item {
  ad::Tensor targets;  // N x channels, aligned with the dataset grid
  int label = -1;
  std::vector<render::View> views;
};

struct Dataset {
  SyntheticSpec spec;
  CoordGrid grid;
  /// Scenes only.
  render::RenderConfig render;
  std::vector<Item> items;

  int channels() const;
};

/// Parses "blobs", "voxels", "scenes" or "sphere-fields".
SyntheticKind parse_kind(const std::string& name);
std::string kind_name(SyntheticKind kind);

/// Item i of a dataset; depends only on (spec.kind, spec.resolution, the
/// scene settings, spec.seed, i), never on spec.count.
///
/// Labels: blobs carry the quadrant of the blob centre (0..3, row-major),
/// voxels the shape kind (0 ellipsoid, 1 box), scenes the brightest colour
/// channel and sphere fields the index of the largest-amplitude term.
Item make_item(const SyntheticSpec& spec, int index);
CoordGrid make_grid(const SyntheticSpec& spec);
render::RenderConfig scene_render_config(const SyntheticSpec& spec);
Dataset make_synthetic(const SyntheticSpec& spec);

// ---------------------------------------------------------------------------
// Files

struct Image {
  int height = 0;
  int width = 0;
  int channels = 1;
  ad::Tensor pixels;  // (height*width) x channels, values in [0, 1]
};

/// Binary PGM (1 channel) or PPM (3 channels), 8 bits per sample.
void save_image(const std::filesystem::path& path, const Image& image);
Image load_image(const std::filesystem::path& path);

/// Text header "FUNCTA-VOXELS <r>" followed by r^3 bytes of 0/1 occupancy.
void save_voxels(const std::filesystem::path& path, const ad::Tensor& occupancy, int resolution);
ad::Tensor load_voxels(const std::filesystem::path& path, int* resolution = nullptr);

/// Each pose is four rows of four numbers followed by "focal <f>".
void save_poses(const std::filesystem::path& path, const std::vector<render::CameraPose>& poses);
std::vector<render::CameraPose> load_poses(const std::filesystem::path& path);

}  // namespace functa::data

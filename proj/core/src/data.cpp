#include "functa/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "functa/archive.hpp"
#include "functa/error.hpp"
#include "functa/rng.hpp"

namespace functa::data {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kSceneFovDegrees = 50.0;

double cell_center(int i, int n) { return (i + 0.5) / n; }

std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

// Reads the next whitespace-separated header token, skipping '#' comments.
std::string next_token(const std::string& bytes, std::size_t& pos) {
  while (pos < bytes.size()) {
    const char c = bytes[pos];
    if (c == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(c))) {
      ++pos;
    } else {
      break;
    }
  }
  const std::size_t start = pos;
  while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
  if (start == pos) throw FormatError("unexpected end of header");
  return bytes.substr(start, pos - start);
}

int header_int(const std::string& bytes, std::size_t& pos, const char* what) {
  const std::string tok = next_token(bytes, pos);
  try {
    std::size_t used = 0;
    const int v = std::stoi(tok, &used);
    if (used != tok.size() || v < 1) throw FormatError("");
    return v;
  } catch (const std::exception&) {
    throw FormatError(std::string("malformed ") + what + " '" + tok + "'");
  }
}

}  // namespace

CoordGrid grid_2d(int height, int width) {
  require(height >= 1 && width >= 1, "grid_2d: dimensions must be >= 1");
  CoordGrid g;
  g.geometry = Geometry::kSquare;
  g.shape = {height, width};
  g.coords.resize(static_cast<ad::Index>(height) * width, 2);
  for (int i = 0; i < height; ++i)
    for (int j = 0; j < width; ++j) {
      const ad::Index r = static_cast<ad::Index>(i) * width + j;
      g.coords(r, 0) = cell_center(i, height);
      g.coords(r, 1) = cell_center(j, width);
    }
  return g;
}

CoordGrid grid_3d(int resolution) {
  require(resolution >= 1, "grid_3d: resolution must be >= 1");
  CoordGrid g;
  g.geometry = Geometry::kCube;
  g.shape = {resolution, resolution, resolution};
  const ad::Index n = resolution;
  g.coords.resize(n * n * n, 3);
  for (ad::Index i = 0; i < n; ++i)
    for (ad::Index j = 0; j < n; ++j)
      for (ad::Index k = 0; k < n; ++k) {
        const ad::Index r = (i * n + j) * n + k;
        g.coords(r, 0) = cell_center(static_cast<int>(i), resolution);
        g.coords(r, 1) = cell_center(static_cast<int>(j), resolution);
        g.coords(r, 2) = cell_center(static_cast<int>(k), resolution);
      }
  return g;
}

std::vector<double> latitudes(int n) {
  require(n >= 1, "latitudes: need at least one value");
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = n == 1 ? 0.0 : kPi / 2 - kPi * i / (n - 1);
  return out;
}

std::vector<double> longitudes(int n) {
  require(n >= 1, "longitudes: need at least one value");
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = 2.0 * kPi * i / n;
  return out;
}

CoordGrid sphere_coords(const std::vector<double>& lat, const std::vector<double>& lon) {
  require(!lat.empty() && !lon.empty(), "sphere_coords: empty grid");
  CoordGrid g;
  g.geometry = Geometry::kSphere;
  g.shape = {static_cast<int>(lat.size()), static_cast<int>(lon.size())};
  g.coords.resize(static_cast<ad::Index>(lat.size() * lon.size()), 3);
  ad::Index r = 0;
  for (double la : lat) {
    require(la >= -kPi / 2 - 1e-12 && la <= kPi / 2 + 1e-12, "sphere_coords: latitude outside [-pi/2, pi/2]");
    for (double lo : lon) {
      g.coords(r, 0) = std::cos(la) * std::cos(lo);
      g.coords(r, 1) = std::cos(la) * std::sin(lo);
      g.coords(r, 2) = std::sin(la);
      ++r;
    }
  }
  return g;
}

ad::Tensor blob_image(int height, int width, const Eigen::Vector2d& center, double sigma, double amplitude) {
  require(sigma > 0.0, "blob_image: sigma must be positive");
  const CoordGrid g = grid_2d(height, width);
  ad::Tensor out(g.size(), 1);
  for (ad::Index r = 0; r < g.size(); ++r) {
    const double dy = g.coords(r, 0) - center(0);
    const double dx = g.coords(r, 1) - center(1);
    out(r, 0) = amplitude * std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
  }
  return out;
}

ad::Tensor voxelize(const VoxelShape& shape, int resolution, const Eigen::Vector3d& scale) {
  require((shape.radii.array() > 0.0).all() && (scale.array() > 0.0).all(),
          "voxelize: radii and scales must be positive");
  const Eigen::Vector3d radii = shape.radii.cwiseProduct(scale);
  const CoordGrid g = grid_3d(resolution);
  ad::Tensor out(g.size(), 1);
  for (ad::Index r = 0; r < g.size(); ++r) {
    const Eigen::Vector3d d =
        (g.coords.row(r).transpose() - shape.center).cwiseQuotient(radii);
    const bool inside = shape.kind == ShapeKind::kEllipsoid ? d.squaredNorm() <= 1.0
                                                           : d.cwiseAbs().maxCoeff() <= 1.0;
    out(r, 0) = inside ? 1.0 : 0.0;
  }
  return out;
}

ad::Tensor sphere_field(const Sphere& sphere, const ad::Tensor& points) {
  require(points.cols() == 3, "sphere_field: points must be 3-D");
  ad::Tensor out(points.rows(), 4);
  const double r2 = sphere.radius * sphere.radius;
  for (ad::Index i = 0; i < points.rows(); ++i) {
    const bool inside = (points.row(i).transpose() - sphere.center).squaredNorm() < r2;
    if (inside) {
      out.block<1, 3>(i, 0) = sphere.color.transpose();
      out(i, 3) = sphere.inside_raw;
    } else {
      out.block<1, 3>(i, 0).setZero();
      out(i, 3) = kEmptyRaw;
    }
  }
  return out;
}

render::SceneFn sphere_scene(const Sphere& sphere) {
  return [sphere](const ad::Value& points) { return ad::Value::constant(sphere_field(sphere, points.data())); };
}

ad::Tensor render_sphere_closed_form(const Sphere& sphere, const render::CameraPose& pose,
                                     const render::RenderConfig& config) {
  require(sphere.inside_raw > 0.0, "render_sphere_closed_form: inside density must be positive");
  const render::RayBatch rays = render::rays_from_pose(pose, config);
  const int p = config.num_points_per_ray;
  const double gap = (config.far - config.near) / (p - 1);
  const double density = std::min(sphere.inside_raw + 0.1, 10.0);
  const double alpha = 1.0 - std::exp(-density * gap);
  const double alpha_last = 1.0 - std::exp(-density * 1e-3);
  const double q = 1.0 - alpha + 1e-10;
  ad::Tensor out(rays.size(), 3);
  for (ad::Index r = 0; r < rays.size(); ++r) {
    const Eigen::Vector3d o = rays.origins.row(r).transpose();
    const Eigen::Vector3d d = rays.directions.row(r).transpose();
    const Eigen::Vector3d oc = o - sphere.center;
    const double a = d.squaredNorm();
    const double b = 2.0 * d.dot(oc);
    const double c = oc.squaredNorm() - sphere.radius * sphere.radius;
    const double disc = b * b - 4.0 * a * c;
    int first = p, last = -1;
    if (disc > 0.0) {
      const double z1 = (-b - std::sqrt(disc)) / (2.0 * a);
      const double z2 = (-b + std::sqrt(disc)) / (2.0 * a);
      for (int k = 0; k < p; ++k) {
        const double z = rays.z[static_cast<std::size_t>(k)];
        if (z > z1 && z < z2) {
          first = std::min(first, k);
          last = std::max(last, k);
        }
      }
    }
    double acc = 0.0;
    if (last >= first) {
      const int interior = std::min(last, p - 2) - first + 1;
      acc = alpha * (1.0 - std::pow(q, interior)) / (1.0 - q);
      if (last == p - 1) acc += alpha_last * std::pow(q, interior);
    }
    for (int ch = 0; ch < 3; ++ch) {
      out(r, ch) = sphere.color(ch) * acc + (config.white_background ? 1.0 - acc : 0.0);
    }
  }
  return out;
}

double sphere_field_value(const std::vector<SphereFieldTerm>& terms, double lat, double lon) {
  double v = 0.5;
  for (const auto& t : terms) {
    v += t.amplitude * std::cos(lat) * std::sin(t.lat_freq * lat + t.lat_phase) *
         std::cos(t.lon_freq * lon + t.lon_phase);
  }
  return v;
}

// ---------------------------------------------------------------------------

SyntheticKind parse_kind(const std::string& name) {
  if (name == "blobs") return SyntheticKind::kBlobs;
  if (name == "voxels") return SyntheticKind::kVoxels;
  if (name == "scenes") return SyntheticKind::kScenes;
  if (name == "sphere-fields") return SyntheticKind::kSphereFields;
  throw ConfigError("unknown dataset kind '" + name + "' (expected blobs, voxels, scenes or sphere-fields)");
}

std::string kind_name(SyntheticKind kind) {
  switch (kind) {
    case SyntheticKind::kBlobs: return "blobs";
    case SyntheticKind::kVoxels: return "voxels";
    case SyntheticKind::kScenes: return "scenes";
    case SyntheticKind::kSphereFields: return "sphere-fields";
  }
  return "unknown";
}

int Dataset::channels() const {
  switch (spec.kind) {
    case SyntheticKind::kScenes: return 3;
    default: return 1;
  }
}

CoordGrid make_grid(const SyntheticSpec& spec) {
  require(spec.resolution >= 1, "dataset resolution must be >= 1");
  switch (spec.kind) {
    case SyntheticKind::kBlobs: return grid_2d(spec.resolution, spec.resolution);
    case SyntheticKind::kVoxels: return grid_3d(spec.resolution);
    case SyntheticKind::kScenes: return grid_2d(spec.resolution, spec.resolution);
    case SyntheticKind::kSphereFields:
      return sphere_coords(latitudes(spec.resolution), longitudes(2 * spec.resolution));
  }
  throw ConfigError("unknown dataset kind");
}

render::RenderConfig scene_render_config(const SyntheticSpec& spec) {
  render::RenderConfig c;
  c.height = spec.resolution;
  c.width = spec.resolution;
  c.num_points_per_ray = spec.points_per_ray;
  c.near = spec.near;
  c.far = spec.far;
  c.white_background = true;
  c.validate();
  return c;
}

Item make_item(const SyntheticSpec& spec, int index) {
  require(index >= 0, "make_item: negative index");
  Rng rng(mix_seed(spec.seed, static_cast<std::uint64_t>(index)));
  Item item;
  switch (spec.kind) {
    case SyntheticKind::kBlobs: {
      const int quadrant = static_cast<int>(rng.integer(0, 3));
      const double cy = rng.uniform(0.2, 0.45) + 0.35 * (quadrant / 2);
      const double cx = rng.uniform(0.2, 0.45) + 0.35 * (quadrant % 2);
      const double sigma = rng.uniform(0.06, 0.14);
      const double amplitude = rng.uniform(0.5, 0.7);
      const double background = rng.uniform(0.0, 0.3);
      item.targets = blob_image(spec.resolution, spec.resolution, {cy, cx}, sigma, amplitude).array() + background;
      item.label = quadrant;
      break;
    }
    case SyntheticKind::kVoxels: {
      VoxelShape shape;
      shape.kind = rng.bernoulli(0.5) ? ShapeKind::kBox : ShapeKind::kEllipsoid;
      for (int a = 0; a < 3; ++a) shape.center(a) = 0.5 + rng.uniform(-0.05, 0.05);
      for (int a = 0; a < 3; ++a) shape.radii(a) = rng.uniform(0.15, 0.3);
      Eigen::Vector3d scale;
      for (int a = 0; a < 3; ++a) scale(a) = rng.uniform(0.75, 1.25);
      item.targets = voxelize(shape, spec.resolution, scale);
      item.label = shape.kind == ShapeKind::kBox ? 1 : 0;
      break;
    }
    case SyntheticKind::kScenes: {
      Sphere sphere;
      for (int a = 0; a < 3; ++a) sphere.center(a) = rng.uniform(-0.15, 0.15);
      sphere.radius = rng.uniform(0.35, 0.6);
      for (int a = 0; a < 3; ++a) sphere.color(a) = rng.uniform(0.1, 0.9);
      Eigen::Index brightest = 0;
      sphere.color.maxCoeff(&brightest);
      item.label = static_cast<int>(brightest);
      const render::RenderConfig cfg = scene_render_config(spec);
      const double focal = 0.5 * spec.resolution / std::tan(kSceneFovDegrees * kPi / 360.0);
      for (int v = 0; v < spec.views; ++v) {
        const double azimuth = rng.uniform(0.0, 2.0 * kPi);
        const double elevation = rng.uniform(-kPi / 6, kPi / 3);
        const Eigen::Vector3d eye = spec.camera_distance * Eigen::Vector3d(std::cos(elevation) * std::cos(azimuth),
                                                                           std::cos(elevation) * std::sin(azimuth),
                                                                           std::sin(elevation));
        render::View view;
        view.pose = render::look_at(eye, Eigen::Vector3d::Zero(), focal);
        view.image = render::render_image(sphere_scene(sphere), view.pose, cfg);
        item.views.push_back(std::move(view));
      }
      break;
    }
    case SyntheticKind::kSphereFields: {
      std::vector<SphereFieldTerm> terms(3);
      for (auto& t : terms) {
        t.amplitude = rng.uniform(0.05, 0.15);
        t.lat_freq = static_cast<int>(rng.integer(1, 3));
        t.lon_freq = static_cast<int>(rng.integer(0, 3));
        t.lat_phase = rng.uniform(0.0, 2.0 * kPi);
        t.lon_phase = rng.uniform(0.0, 2.0 * kPi);
      }
      item.label = static_cast<int>(std::max_element(terms.begin(), terms.end(),
                                                     [](const auto& a, const auto& b) {
                                                       return a.amplitude < b.amplitude;
                                                     }) -
                                    terms.begin());
      const auto lat = latitudes(spec.resolution);
      const auto lon = longitudes(2 * spec.resolution);
      item.targets.resize(static_cast<ad::Index>(lat.size() * lon.size()), 1);
      ad::Index r = 0;
      for (double la : lat)
        for (double lo : lon) item.targets(r++, 0) = sphere_field_value(terms, la, lo);
      break;
    }
  }
  return item;
}

Dataset make_synthetic(const SyntheticSpec& spec) {
  require(spec.count >= 1, "make_synthetic: count must be >= 1");
  Dataset ds;
  ds.spec = spec;
  ds.grid = make_grid(spec);
  if (spec.kind == SyntheticKind::kScenes) ds.render = scene_render_config(spec);
  ds.items.reserve(static_cast<std::size_t>(spec.count));
  for (int i = 0; i < spec.count; ++i) ds.items.push_back(make_item(spec, i));
  return ds;
}

// ---------------------------------------------------------------------------
// Files

void save_image(const std::filesystem::path& path, const Image& image) {
  require(image.channels == 1 || image.channels == 3, "save_image: only 1 or 3 channels are supported");
  require(image.pixels.rows() == static_cast<ad::Index>(image.height) * image.width &&
              image.pixels.cols() == image.channels,
          "save_image: pixel buffer does not match the image size");
  std::string bytes = (image.channels == 1 ? "P5\n" : "P6\n") + std::to_string(image.width) + " " +
                      std::to_string(image.height) + "\n255\n";
  const std::size_t header = bytes.size();
  bytes.resize(header + static_cast<std::size_t>(image.pixels.size()));
  std::size_t k = header;
  for (ad::Index r = 0; r < image.pixels.rows(); ++r)
    for (ad::Index c = 0; c < image.pixels.cols(); ++c) bytes[k++] = static_cast<char>(quantize(image.pixels(r, c)));
  io::write_file(path, bytes);
}

Image load_image(const std::filesystem::path& path) {
  const std::string bytes = io::read_file(path);
  std::size_t pos = 0;
  const std::string magic = next_token(bytes, pos);
  Image img;
  if (magic == "P5") {
    img.channels = 1;
  } else if (magic == "P6") {
    img.channels = 3;
  } else {
    throw FormatError(path.string() + ": not a binary PGM/PPM file");
  }
  img.width = header_int(bytes, pos, "width");
  img.height = header_int(bytes, pos, "height");
  const int maxval = header_int(bytes, pos, "maxval");
  if (maxval > 255) throw FormatError(path.string() + ": only 8-bit images are supported");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw FormatError(path.string() + ": malformed header");
  }
  ++pos;
  const std::size_t need = static_cast<std::size_t>(img.width) * img.height * img.channels;
  if (bytes.size() - pos < need) throw TruncatedFile(path.string() + ": pixel data truncated");
  img.pixels.resize(static_cast<ad::Index>(img.width) * img.height, img.channels);
  for (ad::Index r = 0; r < img.pixels.rows(); ++r)
    for (ad::Index c = 0; c < img.channels; ++c) {
      img.pixels(r, c) = static_cast<unsigned char>(bytes[pos++]) / static_cast<double>(maxval);
    }
  return img;
}

void save_voxels(const std::filesystem::path& path, const ad::Tensor& occupancy, int resolution) {
  const ad::Index n = static_cast<ad::Index>(resolution) * resolution * resolution;
  require(resolution >= 1 && occupancy.size() == n, "save_voxels: occupancy does not match resolution");
  std::string bytes = "FUNCTA-VOXELS " + std::to_string(resolution) + "\n";
  const std::size_t header = bytes.size();
  bytes.resize(header + static_cast<std::size_t>(n));
  for (ad::Index i = 0; i < n; ++i) bytes[header + static_cast<std::size_t>(i)] = occupancy.data()[i] >= 0.5 ? 1 : 0;
  io::write_file(path, bytes);
}

ad::Tensor load_voxels(const std::filesystem::path& path, int* resolution) {
  const std::string bytes = io::read_file(path);
  std::size_t pos = 0;
  if (next_token(bytes, pos) != "FUNCTA-VOXELS") throw FormatError(path.string() + ": not a voxel file");
  const int r = header_int(bytes, pos, "resolution");
  if (pos >= bytes.size() || bytes[pos] != '\n') throw FormatError(path.string() + ": malformed header");
  ++pos;
  const std::size_t n = static_cast<std::size_t>(r) * r * r;
  if (bytes.size() - pos < n) throw TruncatedFile(path.string() + ": voxel payload truncated");
  ad::Tensor out(static_cast<ad::Index>(n), 1);
  for (std::size_t i = 0; i < n; ++i) {
    const auto b = static_cast<unsigned char>(bytes[pos + i]);
    if (b > 1) throw FormatError(path.string() + ": voxel values must be 0 or 1");
    out(static_cast<ad::Index>(i), 0) = b;
  }
  if (resolution != nullptr) *resolution = r;
  return out;
}

void save_poses(const std::filesystem::path& path, const std::vector<render::CameraPose>& poses) {
  std::ostringstream out;
  for (const auto& p : poses) {
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) out << (j ? " " : "") << io::format_double(p.matrix(i, j));
      out << "\n";
    }
    out << "focal " << io::format_double(p.focal) << "\n";
  }
  io::write_file(path, out.str());
}

std::vector<render::CameraPose> load_poses(const std::filesystem::path& path) {
  std::istringstream in(io::read_file(path));
  std::vector<render::CameraPose> poses;
  std::string tok;
  while (in >> tok) {
    render::CameraPose pose;
    pose.matrix(0, 0) = io::parse_double(tok);
    for (int k = 1; k < 16; ++k) {
      if (!(in >> tok)) throw TruncatedFile(path.string() + ": incomplete pose matrix");
      pose.matrix(k / 4, k % 4) = io::parse_double(tok);
    }
    if (!(in >> tok) || tok != "focal" || !(in >> tok)) {
      throw FormatError(path.string() + ": expected 'focal <value>' after each pose");
    }
    pose.focal = io::parse_double(tok);
    pose.validate();
    poses.push_back(pose);
  }
  if (poses.empty()) throw FormatError(path.string() + ": no poses");
  return poses;
}

}  // namespace functa::data

#include "common.hpp"

#include <charconv>
#include <sstream>

#include "functa/archive.hpp"
#include "functa/error.hpp"

namespace functa::cli {

Context::Context(const std::string& cmd, const std::string& help, std::ostream& log_stream)
    : app(help, "functa " + cmd), command(cmd), log(log_stream) {
  app.option_defaults()->always_capture_default();
  app.add_option("--out", out, "Output directory")->required();
  app.add_option("--config", config, "Flat key=value file; command-line flags take precedence");
  app.add_option("--seed", seed, "Random seed");
  app.add_option("--workers", workers, "Worker threads for per-item loops")->check(CLI::PositiveNumber);
}

CLI::Option* Context::input(const std::string& name, std::string& path, const std::string& help) {
  input_options_.emplace_back(name, &path);
  return app.add_option("--" + name, path, help);
}

void Context::record_input(const std::string& name, const std::string& digest) {
  const auto it = expected_inputs.find(name);
  if (it != expected_inputs.end() && !explicit_options.contains(name) && it->second != "sha256:" + digest) {
    throw DigestMismatch("input '" + name + "' does not match the digest recorded in " + config);
  }
  inputs.emplace_back(name, "sha256:" + digest);
}

void Context::digest_inputs() {
  for (const auto& [name, path] : input_options_) {
    if (!path->empty()) record_input(name, io::file_sha256(*path));
  }
}

fs::path Context::output(const std::string& file) {
  if (std::find(outputs.begin(), outputs.end(), file) == outputs.end()) outputs.push_back(file);
  return fs::path(out) / file;
}

void Context::write(const std::string& file, const std::string& text) { io::write_file(output(file), text); }

// ---------------------------------------------------------------------------

void DatasetOptions::add(CLI::App& app, int default_count) {
  count = std::max(default_count, 1);
  app.add_option("--dataset", kind, "blobs, voxels, scenes or sphere-fields");
  app.add_option("--resolution", resolution, "Image side, voxel side, view side or latitudes");
  app.add_option("--data-seed", data_seed, "Seed of the synthetic dataset");
  app.add_option("--views", views, "Posed views per scene");
  app.add_option("--points-per-ray", points_per_ray, "Samples per camera ray");
  if (default_count <= 0) return;
  app.add_option("--first", first, "First dataset item")->check(CLI::NonNegativeNumber);
  app.add_option("--count", count, "Number of dataset items")->check(CLI::PositiveNumber);
}

data::SyntheticSpec DatasetOptions::spec() const {
  data::SyntheticSpec s;
  try {
    s.kind = data::parse_kind(kind);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  s.count = count;
  s.resolution = resolution;
  s.seed = data_seed;
  s.views = views;
  s.points_per_ray = points_per_ray;
  if (resolution < 1 || views < 1 || points_per_ray < 2) throw ConfigError("invalid dataset options");
  return s;
}

std::vector<data::Item> DatasetOptions::items() const {
  const auto s = spec();
  std::vector<data::Item> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = first; i < first + count; ++i) out.push_back(data::make_item(s, i));
  return out;
}

std::vector<const meta::FitTask*> TaskSet::pointers(std::size_t begin, std::size_t end) const {
  std::vector<const meta::FitTask*> out;
  for (std::size_t i = begin; i < end; ++i) out.push_back(tasks[i].get());
  return out;
}

TaskSet make_tasks(const DatasetOptions& d, const std::vector<data::Item>& items, int sample_points) {
  TaskSet set;
  const auto spec = d.spec();
  if (d.scenes()) {
    const auto config = data::scene_render_config(spec);
    render::Subsample sub;
    sub.num_pixels = sample_points;
    for (const auto& item : items) {
      set.tasks.push_back(std::make_unique<meta::SceneTask>(item.views, config, sub));
      set.labels.push_back(item.label);
    }
    return set;
  }
  auto coords = std::make_shared<const ad::Tensor>(data::make_grid(spec).coords);
  for (const auto& item : items) {
    set.tasks.push_back(std::make_unique<meta::PointTask>(coords, item.targets, sample_points));
    set.labels.push_back(item.label);
  }
  return set;
}

std::pair<int, int> signal_dims(const DatasetOptions& d) {
  const auto spec = d.spec();
  if (spec.kind == data::SyntheticKind::kScenes) return {3, 4};
  return {static_cast<int>(data::make_grid(spec).coords.cols()), 1};
}

void check_model_matches(const inr::LatentModulatedSiren& model, const DatasetOptions& d) {
  const auto [in, out] = signal_dims(d);
  if (model.config().in_dim != in || model.config().out_dim != out) {
    throw ConfigError("the model maps " + std::to_string(model.config().in_dim) + " -> " +
                      std::to_string(model.config().out_dim) + " but dataset '" + d.kind + "' needs " +
                      std::to_string(in) + " -> " + std::to_string(out));
  }
}

std::string save_signal(Context& ctx, const std::string& stem, const data::CoordGrid& grid,
                        const ad::Tensor& values) {
  if (grid.geometry == data::Geometry::kCube) {
    const std::string file = stem + ".vox";
    const ad::Tensor occupancy = (values.array() > 0.5).cast<double>();
    data::save_voxels(ctx.output(file), occupancy, grid.shape.at(0));
    return file;
  }
  data::Image image;
  image.height = grid.shape.at(0);
  image.width = grid.shape.at(1);
  image.channels = 1;
  image.pixels = values.leftCols(1);
  const std::string file = stem + ".pgm";
  data::save_image(ctx.output(file), image);
  return file;
}

void save_rgb(Context& ctx, const std::string& file, int height, int width, const ad::Tensor& rgb) {
  data::Image image;
  image.height = height;
  image.width = width;
  image.channels = 3;
  image.pixels = rgb;
  data::save_image(ctx.output(file), image);
}

std::vector<int> load_mask(const fs::path& path, const data::CoordGrid& grid) {
  const auto ext = path.extension().string();
  std::vector<int> observed;
  if (ext == ".pgm" || ext == ".ppm") {
    const auto image = data::load_image(path);
    if (static_cast<ad::Index>(image.height) * image.width != grid.size()) {
      throw ConfigError("mask " + path.string() + " has " + std::to_string(image.height * image.width) +
                        " pixels, the grid has " + std::to_string(grid.size()));
    }
    for (ad::Index i = 0; i < image.pixels.rows(); ++i) {
      if (image.pixels(i, 0) >= 0.5) observed.push_back(static_cast<int>(i));
    }
    return observed;
  }
  std::istringstream in(io::read_file(path));
  std::string line;
  std::vector<bool> seen(static_cast<std::size_t>(grid.size()), false);
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream fields(line);
    long start = 0, count = 0;
    if (!(fields >> start)) continue;
    std::string rest;
    if (!(fields >> count) || (fields >> rest)) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected 'start count'");
    }
    if (start < 0 || count < 0 || start + count > grid.size()) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": run outside the grid");
    }
    for (long i = start; i < start + count; ++i) seen[static_cast<std::size_t>(i)] = true;
  }
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (seen[i]) observed.push_back(static_cast<int>(i));
  }
  return observed;
}

// ---------------------------------------------------------------------------

std::string f32(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, static_cast<float>(v));
  return std::string(buf, r.ptr);
}

std::string csv_row(const std::vector<std::string>& cells) {
  std::string line;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) line += ',';
    line += cells[i];
  }
  return line + '\n';
}

std::string matrix_csv(const ad::Tensor& m, const std::string& header_prefix) {
  std::vector<std::string> header;
  for (ad::Index j = 0; j < m.cols(); ++j) header.push_back(header_prefix + std::to_string(j));
  std::string text = csv_row(header);
  for (ad::Index i = 0; i < m.rows(); ++i) {
    std::vector<std::string> cells;
    for (ad::Index j = 0; j < m.cols(); ++j) cells.push_back(f32(m(i, j)));
    text += csv_row(cells);
  }
  return text;
}

ad::Tensor load_matrix_csv(const fs::path& path) {
  std::istringstream in(io::read_file(path));
  std::string line;
  std::vector<std::vector<double>> rows;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    std::vector<double> row;
    std::istringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) {
      try {
        row.push_back(io::parse_double(cell));
      } catch (const Error&) {
        throw FormatError(path.string() + ": not a number: '" + cell + "'");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size()) throw FormatError(path.string() + ": ragged rows");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw FormatError(path.string() + ": no data rows");
  ad::Tensor m(static_cast<ad::Index>(rows.size()), static_cast<ad::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(static_cast<ad::Index>(i), static_cast<ad::Index>(j)) = rows[i][j];
  }
  return m;
}

std::vector<int> parse_int_list(const std::string& s, const std::string& what) {
  std::vector<int> out;
  std::istringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    try {
      out.push_back(static_cast<int>(io::parse_long(item)));
    } catch (const Error&) {
      throw ConfigError(what + ": '" + item + "' is not an integer");
    }
  }
  return out;
}

}  // namespace functa::cli

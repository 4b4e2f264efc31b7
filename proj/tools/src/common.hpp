#pragma once

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "functa/ad.hpp"
#include "functa/data.hpp"
#include "functa/functaset.hpp"
#include "functa/inr.hpp"
#include "functa/metalearn.hpp"

namespace functa::cli {

namespace fs = std::filesystem;

/// State shared by every command: the option parser, the common options and
/// the bookkeeping that ends up in the run manifest.
class Context {
 public:
  Context(const std::string& command, const std::string& help, std::ostream& log);

  CLI::App app;
  std::string command;
  std::ostream& log;

  std::string out;
  std::string config;
  std::uint64_t seed = 0;
  int workers = 1;

  /// Adds a file option whose content digest is recorded as input.<name>.
  CLI::Option* input(const std::string& name, std::string& path, const std::string& help);
  /// Records an input digest computed by the command itself.
  void record_input(const std::string& name, const std::string& digest);
  /// Digests every non-empty input option; called once before the command runs.
  void digest_inputs();

  /// Path of `file` inside the output directory, recorded as an output.
  fs::path output(const std::string& file);
  void write(const std::string& file, const std::string& text);

  /// input.<name> digests found in the config file.
  std::map<std::string, std::string> expected_inputs;
  /// Option names given on the command line rather than by the config.
  std::set<std::string> explicit_options;

  std::vector<std::pair<std::string, std::string>> inputs;
  std::vector<std::string> outputs;

 private:
  std::vector<std::pair<std::string, std::string*>> input_options_;
};

using Runner = std::function<void()>;

struct CommandSpec {
  std::string name;
  std::string help;
  /// Adds the command's options to ctx.app and returns the action.
  std::function<Runner(Context&)> setup;
};

std::vector<CommandSpec> functa_commands();
std::vector<CommandSpec> generative_commands();
std::vector<CommandSpec> inference_commands();
std::vector<CommandSpec> classify_commands();

// ---------------------------------------------------------------------------
// Datasets

struct DatasetOptions {
  std::string kind = "blobs";
  int resolution = 32;
  std::uint64_t data_seed = 0;
  int views = 8;
  int points_per_ray = 24;
  int first = 0;
  int count = 16;

  /// Without a positive default count the --first/--count options are left out.
  void add(CLI::App& app, int default_count);
  data::SyntheticSpec spec() const;
  bool scenes() const { return spec().kind == data::SyntheticKind::kScenes; }
  /// Items first .. first + count - 1.
  std::vector<data::Item> items() const;
};

/// Reconstruction tasks for dataset items. Point datasets share one
/// coordinate grid; scenes are fitted through the renderer.
struct TaskSet {
  std::vector<std::unique_ptr<meta::FitTask>> tasks;
  std::vector<int> labels;

  std::vector<const meta::FitTask*> pointers(std::size_t begin, std::size_t end) const;
  std::vector<const meta::FitTask*> all() const { return pointers(0, tasks.size()); }
};

TaskSet make_tasks(const DatasetOptions& d, const std::vector<data::Item>& items, int sample_points);

/// SIREN input and output widths for a dataset kind.
std::pair<int, int> signal_dims(const DatasetOptions& d);
void check_model_matches(const inr::LatentModulatedSiren& model, const DatasetOptions& d);

/// Writes a dense signal over the dataset grid: PGM for images and sphere
/// grids, the voxel format (occupancy > 0.5) for voxel grids. Returns the
/// file name with its extension.
std::string save_signal(Context& ctx, const std::string& stem, const data::CoordGrid& grid,
                        const ad::Tensor& values);
void save_rgb(Context& ctx, const std::string& file, int height, int width, const ad::Tensor& rgb);

/// Observed coordinate indices from a PGM/PPM stencil (pixel >= 0.5 is
/// observed) or a run-length text file of "start count" lines.
std::vector<int> load_mask(const fs::path& path, const data::CoordGrid& grid);

// ---------------------------------------------------------------------------
// Formatting

/// Shortest decimal that round-trips the value rounded to float32.
std::string f32(double v);
std::string csv_row(const std::vector<std::string>& cells);
/// One row per tensor row, values as float32.
std::string matrix_csv(const ad::Tensor& m, const std::string& header_prefix);
ad::Tensor load_matrix_csv(const fs::path& path);
std::vector<int> parse_int_list(const std::string& s, const std::string& what);

}  // namespace functa::cli

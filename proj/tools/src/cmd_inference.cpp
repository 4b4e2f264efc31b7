// MAP inference from partial observations: imputation of masked signals and
// novel views of scenes.

#include <numeric>

#include "common.hpp"
#include "functa/error.hpp"
#include "functa/flow.hpp"
#include "functa/infer.hpp"

namespace functa::cli {

namespace {

struct PriorOptions {
  std::string flow;
  std::string functaset;
  int label = -1;
  double lambda = 1.0;
  int steps = 200;
  double lr = 1e-2;

  void add(Context& ctx) {
    ctx.input("flow", flow, "Flow prior; without it the fit is prior-free");
    ctx.input("functaset", functaset, "Functaset the flow was trained on (for its statistics)");
    ctx.app.add_option("--label", label, "Class for a conditional flow prior");
    ctx.app.add_option("--lambda", lambda, "Weight of the reconstruction term");
    ctx.app.add_option("--steps", steps, "Adam steps");
    ctx.app.add_option("--lr", lr, "Adam learning rate");
  }

  infer::MapConfig map_config() const {
    infer::MapConfig c;
    c.lambda = lambda;
    c.steps = steps;
    c.lr = lr;
    c.validate();
    return c;
  }
};

// Loaded prior; the term refers to the members, so the object must outlive it.
struct Prior {
  flow::FlowModel model;
  Functaset set;
  infer::Term term;

  Prior(const PriorOptions& o, const inr::LatentModulatedSiren& siren, const std::string& digest) {
    if (o.flow.empty()) {
      if (!o.functaset.empty()) throw ConfigError("--functaset is only used together with --flow");
      return;
    }
    if (o.functaset.empty()) throw ConfigError("--flow needs the --functaset it was trained on");
    model = flow::load_flow(o.flow);
    set = load_functaset(o.functaset);
    if (set.base_digest != digest) throw ConfigError("the functaset was fitted with a different base network");
    if (model.config().dim != siren.latent_dim()) throw ConfigError("the flow dimension differs from the latent size");
    const int classes = model.config().num_classes;
    if (classes > 0 ? (o.label < 0 || o.label >= classes) : o.label >= 0) {
      throw ConfigError("--label must name a class of a conditional flow and be omitted otherwise");
    }
    term = infer::flow_prior(model, set.stats, o.label);
  }
  Prior(const Prior&) = delete;
};

Runner impute(Context& ctx) {
  struct Opts {
    std::string meta;
    DatasetOptions data;
    std::string mask;
    bool half = false;
    PriorOptions prior;
  };
  auto o = std::make_shared<Opts>();
  auto& app = ctx.app;
  ctx.input("meta", o->meta, "Meta-learned checkpoint")->required();
  o->data.add(app, 4);
  ctx.input("mask", o->mask, "Observed region: PGM stencil or run-length text of 'start count' lines");
  app.add_option("--half", o->half, "Observe the first half of the grid (top rows of an image)");
  o->prior.add(ctx);

  return [&ctx, o] {
    const auto state = meta::load_checkpoint(o->meta);
    const auto& model = state.model;
    check_model_matches(model, o->data);
    if (o->data.scenes()) throw ConfigError("impute works on point datasets; use novel-view for scenes");
    if (o->mask.empty() == !o->half) throw ConfigError("impute: give exactly one of --mask and --half");
    const auto cfg = o->prior.map_config();
    const Prior prior(o->prior, model, state.digest());

    const auto grid = data::make_grid(o->data.spec());
    std::vector<int> observed;
    if (o->half) {
      observed.resize(static_cast<std::size_t>(grid.size() / 2));
      std::iota(observed.begin(), observed.end(), 0);
    } else {
      observed = load_mask(o->mask, grid);
    }
    std::vector<bool> is_observed(static_cast<std::size_t>(grid.size()), false);
    for (int i : observed) is_observed[static_cast<std::size_t>(i)] = true;
    std::vector<int> hidden;
    for (int i = 0; i < grid.size(); ++i) {
      if (!is_observed[static_cast<std::size_t>(i)]) hidden.push_back(i);
    }
    if (observed.empty() && !prior.term) throw ConfigError("impute: nothing observed and no prior");
    ctx.log << observed.size() << " observed and " << hidden.size() << " hidden coordinates\n";

    const bool voxels = grid.geometry == data::Geometry::kCube;
    std::string text = voxels ? "item,label,observed_mse,hidden_mse,hidden_psnr,hidden_accuracy,best_step\n"
                              : "item,label,observed_mse,hidden_mse,hidden_psnr,best_step\n";
    const auto items = o->data.items();
    ad::Tensor phis(static_cast<ad::Index>(items.size()), model.latent_dim());
    for (std::size_t k = 0; k < items.size(); ++k) {
      const int index = o->data.first + static_cast<int>(k);
      const auto& targets = items[k].targets;
      ad::Tensor oc, ot, hc, ht;
      infer::select_rows(grid.coords, targets, observed, &oc, &ot);
      infer::select_rows(grid.coords, targets, hidden, &hc, &ht);
      const infer::Term recon = observed.empty() ? infer::Term{} : infer::point_likelihood(model, oc, ot);
      const auto fit = infer::map_fit(model.latent_dim(), prior.term, recon, cfg);
      phis.row(static_cast<ad::Index>(k)) = fit.phi;
      const ad::Tensor full = infer::impute(model, fit.phi, grid.coords);

      std::vector<std::string> cells{std::to_string(index), std::to_string(items[k].label)};
      cells.push_back(observed.empty() ? "nan" : f32(inr::mean_squared_error(model.evaluate(fit.phi, oc), ot)));
      if (hidden.empty()) {
        cells.insert(cells.end(), voxels ? 3 : 2, "nan");
      } else {
        const ad::Tensor hp = model.evaluate(fit.phi, hc);
        const double mse = inr::mean_squared_error(hp, ht);
        cells.push_back(f32(mse));
        cells.push_back(f32(inr::psnr(mse)));
        if (voxels) cells.push_back(f32(inr::voxel_accuracy(hp, ht)));
      }
      cells.push_back(std::to_string(fit.best_step));
      text += csv_row(cells);

      save_signal(ctx, "impute_" + std::to_string(index), grid, full);
      if (!voxels) {
        ad::Tensor shown = targets;
        for (int i : hidden) shown.row(i).setZero();
        save_signal(ctx, "observed_" + std::to_string(index), grid, shown);
      }
    }
    ctx.write("metrics.csv", text);
    ctx.write("modulations.csv", matrix_csv(round_to_float32(phis), "m"));
  };
}

Runner novel_view(Context& ctx) {
  struct Opts {
    std::string meta;
    DatasetOptions data;
    int item = 0;
    std::string observed_views = "0";
    std::string pose_file;
    PriorOptions prior;
  };
  auto o = std::make_shared<Opts>();
  auto& app = ctx.app;
  ctx.input("meta", o->meta, "Meta-learned checkpoint of a scene dataset")->required();
  o->data.kind = "scenes";
  o->data.add(app, 0);
  app.add_option("--item", o->item, "Scene index")->check(CLI::NonNegativeNumber);
  app.add_option("--observed-views", o->observed_views, "Comma-separated views whose pixels are observed");
  ctx.input("pose-file", o->pose_file, "Poses to render; default every view of the scene");
  o->prior.add(ctx);

  return [&ctx, o] {
    if (!o->data.scenes()) throw ConfigError("novel-view needs --dataset scenes");
    const auto state = meta::load_checkpoint(o->meta);
    const auto& model = state.model;
    check_model_matches(model, o->data);
    const auto cfg = o->prior.map_config();
    const Prior prior(o->prior, model, state.digest());

    const auto spec = o->data.spec();
    const auto config = data::scene_render_config(spec);
    const auto item = data::make_item(spec, o->item);
    std::vector<int> all_pixels(static_cast<std::size_t>(config.height * config.width));
    std::iota(all_pixels.begin(), all_pixels.end(), 0);
    std::vector<render::ViewSelection> observed;
    for (int v : parse_int_list(o->observed_views, "--observed-views")) {
      if (v < 0 || v >= static_cast<int>(item.views.size())) throw ConfigError("observed view " + std::to_string(v) + " does not exist");
      observed.push_back({v, all_pixels});
    }
    if (observed.empty() && !prior.term) throw ConfigError("novel-view: nothing observed and no prior");

    std::vector<render::CameraPose> targets;
    const bool ground_truth = o->pose_file.empty();
    if (ground_truth) {
      for (const auto& v : item.views) targets.push_back(v.pose);
    } else {
      targets = data::load_poses(o->pose_file);
    }
    infer::MapResult fit;
    const auto images = infer::novel_view(model, prior.term, item.views, observed, targets, config, cfg, &fit);

    std::string text = ground_truth ? "view,observed,psnr\n" : "view\n";
    for (std::size_t k = 0; k < images.size(); ++k) {
      save_rgb(ctx, "view_" + std::to_string(k) + ".ppm", config.height, config.width, images[k]);
      if (!ground_truth) {
        text += std::to_string(k) + "\n";
        continue;
      }
      bool seen = false;
      for (const auto& s : observed) seen = seen || s.view == static_cast<int>(k);
      const double p = inr::psnr(inr::mean_squared_error(images[k], item.views[k].image));
      text += csv_row({std::to_string(k), seen ? "1" : "0", f32(p)});
      ctx.log << "view " << k << (seen ? " (observed)" : "") << " PSNR " << p << " dB\n";
    }
    ctx.write("metrics.csv", text);
    ctx.write("modulations.csv", matrix_csv(round_to_float32(fit.phi), "m"));
  };
}

}  // namespace

std::vector<CommandSpec> inference_commands() {
  return {
      {"impute", "Fit a modulation to the observed part of each item and fill in the rest", impute},
      {"novel-view", "Fit a scene from some views and render new poses", novel_view},
  };
}

}  // namespace functa::cli

// Commands that produce or inspect functa: meta-learning, functaset fitting,
// rendering of modulations, perturbation analysis and the PSNR report.

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>

#include "common.hpp"
#include "functa/archive.hpp"
#include "functa/error.hpp"
#include "functa/render.hpp"
#include "functa/rng.hpp"

namespace functa::cli {

namespace {

Runner meta_train(Context& ctx) {
  struct Opts {
    DatasetOptions data;
    int eval_count = 8;
    int latent_dim = 64;
    int width = 32;
    int depth = 3;
    double omega0 = 30.0;
    int inner_steps = 3;
    double inner_lr = 1e-2;
    bool meta_sgd = true;
    double outer_lr = 3e-6;
    long iters = 100;
    int batch_size = 8;
    int sample_points = 0;
    long eval_every = 0;
  };
  auto o = std::make_shared<Opts>();
  auto& app = ctx.app;
  o->data.add(app, 64);
  app.add_option("--eval-count", o->eval_count, "Items after the training range used for evaluation")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--latent-dim", o->latent_dim, "Modulation size");
  app.add_option("--width", o->width, "SIREN width");
  app.add_option("--depth", o->depth, "Number of sine layers");
  app.add_option("--omega0", o->omega0, "SIREN frequency scale");
  app.add_option("--inner-steps", o->inner_steps, "Inner-loop gradient steps");
  app.add_option("--inner-lr", o->inner_lr, "Inner step size when meta-SGD is off");
  app.add_option("--meta-sgd", o->meta_sgd, "Learn per-dimension inner learning rates");
  app.add_option("--outer-lr", o->outer_lr, "Outer Adam learning rate");
  app.add_option("--iters", o->iters, "Outer iterations");
  app.add_option("--batch-size", o->batch_size, "Items per outer step");
  app.add_option("--sample-points", o->sample_points, "Coordinates (or pixels per view) per loss; 0 uses all");
  app.add_option("--eval-every", o->eval_every, "Evaluate every this many outer steps; 0 only at the end");

  return [&ctx, o] {
    if (o->iters < 1 || o->batch_size < 1 || o->latent_dim < 1) throw ConfigError("meta-train: iters, batch-size and latent-dim must be positive");
    DatasetOptions all = o->data;
    all.count = o->data.count + o->eval_count;
    const auto tasks = make_tasks(all, all.items(), o->sample_points);
    const auto train = tasks.pointers(0, static_cast<std::size_t>(o->data.count));
    const auto eval = tasks.pointers(static_cast<std::size_t>(o->data.count), tasks.tasks.size());

    const auto [in, out] = signal_dims(o->data);
    inr::SirenConfig sc;
    sc.in_dim = in;
    sc.out_dim = out;
    sc.width = o->width;
    sc.depth = o->depth;
    sc.omega0 = o->omega0;
    sc.validate();
    meta::InnerLoopConfig ic;
    ic.n_inner = o->inner_steps;
    ic.fixed_lr = o->inner_lr;
    ic.use_meta_sgd = o->meta_sgd;
    ic.validate();
    auto state = meta::MetaState::create(sc, o->latent_dim, ic, o->outer_lr, ctx.seed);

    meta::MetaTrainConfig mc;
    mc.iters = o->iters;
    mc.batch_size = o->batch_size;
    mc.seed = ctx.seed;
    mc.workers = ctx.workers;
    mc.eval_every = o->eval_count > 0 ? o->eval_every : 0;
    const long report_every = std::max(1L, o->iters / 10);
    mc.on_step = [&ctx, report_every](long iter, const meta::MetaStepResult& r) {
      if (iter % report_every == 0) ctx.log << "iter " << iter << " loss " << r.loss << "\n";
    };
    auto result = meta::meta_train(state, train, eval, mc);
    if (o->eval_count > 0 && (result.evals.empty() || result.evals.back().first != state.iter)) {
      result.evals.emplace_back(state.iter,
                                meta::evaluate_steps(state, eval, mix_seed(ctx.seed, 7), ctx.workers).mean_psnr());
    }

    meta::save_checkpoint(ctx.output("meta.ckpt"), state);
    std::string losses = "iter,loss\n";
    for (std::size_t i = 0; i < result.losses.size(); ++i) losses += csv_row({std::to_string(i + 1), f32(result.losses[i])});
    ctx.write("losses.csv", losses);
    if (!result.evals.empty()) {
      std::vector<std::string> header{"iter"};
      for (std::size_t k = 0; k < result.evals.front().second.size(); ++k) header.push_back("step" + std::to_string(k));
      std::string text = csv_row(header);
      for (const auto& [iter, psnr] : result.evals) {
        std::vector<std::string> cells{std::to_string(iter)};
        for (double p : psnr) cells.push_back(f32(p));
        text += csv_row(cells);
      }
      ctx.write("eval.csv", text);
      const auto& last = result.evals.back().second;
      ctx.log << "eval PSNR step 0 " << last.front() << " dB, step " << last.size() - 1 << " " << last.back()
              << " dB\n";
    }
  };
}

Runner fit_functaset(Context& ctx) {
  struct Opts {
    std::string meta;
    DatasetOptions data;
    std::string split = "train";
    std::string train_stats;
    double norm_factor = 4.0;
    int sample_points = 0;
  };
  auto o = std::make_shared<Opts>();
  auto& app = ctx.app;
  ctx.input("meta", o->meta, "Meta-learned checkpoint")->required();
  o->data.add(app, 16);
  app.add_option("--split", o->split, "train or test")->check(CLI::IsMember({"train", "test"}));
  ctx.input("train-stats", o->train_stats, "Training functaset whose statistics normalise a test split");
  app.add_option("--norm-factor", o->norm_factor, "Extra divisor of the normalised modulations");
  app.add_option("--sample-points", o->sample_points, "Coordinates (or pixels per view) per inner step; 0 uses all");

  return [&ctx, o] {
    const auto state = meta::load_checkpoint(o->meta);
    check_model_matches(state.model, o->data);
    if (o->split == "test" && o->train_stats.empty()) throw ConfigError("fit-functaset: a test split needs --train-stats");
    Functaset train_set;
    const NormStats* stats = nullptr;
    if (!o->train_stats.empty()) {
      train_set = load_functaset(o->train_stats);
      if (train_set.base_digest != state.digest()) {
        throw ConfigError("fit-functaset: --train-stats was fitted with a different base network");
      }
      stats = &train_set.stats;
    }
    if (!(o->norm_factor > 0.0)) throw ConfigError("fit-functaset: norm-factor must be positive");
    const auto tasks = make_tasks(o->data, o->data.items(), o->sample_points);
    auto set = meta::create_functaset(state, tasks.all(), tasks.labels, o->split, stats, ctx.seed, ctx.workers,
                                      o->norm_factor);
    for (int& i : set.source_index) i += o->data.first;
    for (int& i : set.excluded) i += o->data.first;
    save_functaset(ctx.output("functaset.funta"), set);

    std::string text = "row,item,label,mse,psnr\n";
    double mean_mse = 0.0;
    for (int r = 0; r < set.size(); ++r) {
      const auto i = static_cast<std::size_t>(r);
      text += csv_row({std::to_string(r), std::to_string(set.source_index[i]), std::to_string(set.labels[i]),
                       f32(set.metrics[i]), f32(inr::psnr(set.metrics[i]))});
      mean_mse += set.metrics[i] / set.size();
    }
    ctx.write("metrics.csv", text);
    ctx.log << "fitted " << set.size() << " modulations, dataset PSNR " << inr::psnr(mean_mse) << " dB";
    if (!set.excluded.empty()) ctx.log << ", " << set.excluded.size() << " excluded";
    ctx.log << "\n";
  };
}

// Rows of a functaset or of a modulation CSV, with their row numbers.
struct Modulations {
  ad::Tensor rows;
  std::vector<int> index;
};

Modulations select_modulations(const std::string& functaset, const std::string& csv, const std::string& rows,
                               int limit, const std::string& digest) {
  if (functaset.empty() == csv.empty()) throw ConfigError("give exactly one of --functaset and --modulations");
  ad::Tensor all;
  if (!functaset.empty()) {
    const auto set = load_functaset(functaset);
    if (set.base_digest != digest) throw ConfigError("the functaset was fitted with a different base network");
    all = set.modulations;
  } else {
    all = load_matrix_csv(csv);
  }
  Modulations m;
  m.index = parse_int_list(rows, "--rows");
  if (m.index.empty()) {
    for (int i = 0; i < std::min<int>(limit, static_cast<int>(all.rows())); ++i) m.index.push_back(i);
  }
  m.rows.resize(static_cast<ad::Index>(m.index.size()), all.cols());
  for (std::size_t k = 0; k < m.index.size(); ++k) {
    if (m.index[k] < 0 || m.index[k] >= all.rows()) throw ConfigError("row " + std::to_string(m.index[k]) + " is out of range");
    m.rows.row(static_cast<ad::Index>(k)) = all.row(m.index[k]);
  }
  return m;
}

Runner render_cmd(Context& ctx) {
  struct Opts {
    std::string meta;
    std::string functaset;
    std::string modulations;
    std::string rows;
    int limit = 16;
    DatasetOptions data;
    std::string pose_file;
  };
  auto o = std::make_shared<Opts>();
  auto& app = ctx.app;
  ctx.input("meta", o->meta, "Meta-learned checkpoint")->required();
  ctx.input("functaset", o->functaset, "Functaset whose rows are rendered");
  ctx.input("modulations", o->modulations, "CSV of modulations, e.g. from flow-sample");
  app.add_option("--rows", o->rows, "Comma-separated rows; default the first --limit rows");
  app.add_option("--limit", o->limit, "Rows rendered when --rows is empty");
  o->data.add(app, 0);
  ctx.input("pose-file", o->pose_file, "Camera poses for scenes; default the dataset orbit");

  return [&ctx, o] {
    const auto state = meta::load_checkpoint(o->meta);
    const auto& model = state.model;
    check_model_matches(model, o->data);
    const auto m = select_modulations(o->functaset, o->modulations, o->rows, o->limit, state.digest());
    if (m.rows.cols() != model.latent_dim()) throw ConfigError("modulation width does not match the model");
    const auto spec = o->data.spec();
    if (o->data.scenes()) {
      std::vector<render::CameraPose> poses;
      if (!o->pose_file.empty()) {
        poses = data::load_poses(o->pose_file);
      } else {
        for (const auto& v : data::make_item(spec, 0).views) poses.push_back(v.pose);
      }
      const auto config = data::scene_render_config(spec);
      for (std::size_t k = 0; k < m.index.size(); ++k) {
        const auto scene = render::siren_scene(model, ad::Value::constant(m.rows.row(static_cast<ad::Index>(k))));
        for (std::size_t v = 0; v < poses.size(); ++v) {
          const auto rgb = render::render_image(scene, poses[v], config);
          save_rgb(ctx, "render_" + std::to_string(m.index[k]) + "_view" + std::to_string(v) + ".ppm", config.height,
                   config.width, rgb);
        }
      }
    } else {
      const auto grid = data::make_grid(spec);
      for (std::size_t k = 0; k < m.index.size(); ++k) {
        const auto values = model.evaluate(m.rows.row(static_cast<ad::Index>(k)), grid.coords);
        save_signal(ctx, "render_" + std::to_string(m.index[k]), grid, values);
      }
    }
    ctx.log << "rendered " << m.index.size() << " modulations\n";
  };
}

Runner perturb_analyze(Context& ctx) {
  struct Opts {
    std::string meta;
    std::string functaset;
    std::string rows = "0";
    double delta = -0.01;
    int maps = 0;
    DatasetOptions data;
  };
  auto o = std::make_shared<Opts>();
  auto& app = ctx.app;
  ctx.input("meta", o->meta, "Meta-learned checkpoint")->required();
  ctx.input("functaset", o->functaset, "Functaset holding the modulations to perturb")->required();
  app.add_option("--rows", o->rows, "Comma-separated functaset rows");
  app.add_option("--delta", o->delta, "Perturbation added to one shift at a time");
  app.add_option("--maps", o->maps, "Per layer, save L1 error maps of this many highest-RMSE units");
  o->data.add(app, 0);

  return [&ctx, o] {
    const auto state = meta::load_checkpoint(o->meta);
    const auto& model = state.model;
    check_model_matches(model, o->data);
    if (o->data.scenes()) throw ConfigError("perturb-analyze works on point datasets, not scenes");
    const auto set = load_functaset(o->functaset);
    if (set.base_digest != state.digest()) throw ConfigError("the functaset was fitted with a different base network");
    const auto spec = o->data.spec();
    const auto grid = data::make_grid(spec);
    const auto rows = parse_int_list(o->rows, "--rows");
    if (rows.empty()) throw ConfigError("--rows is empty");

    std::string text = "row,shift,layer,unit,rmse,rmse_to_targets\n";
    const int depth = model.config().depth;
    std::vector<double> layer_rmse(static_cast<std::size_t>(depth), 0.0);
    std::vector<int> layer_count(static_cast<std::size_t>(depth), 0);
    for (int row : rows) {
      if (row < 0 || row >= set.size()) throw ConfigError("row " + std::to_string(row) + " is out of range");
      const int item = set.source_index.empty() ? row : set.source_index[static_cast<std::size_t>(row)];
      const auto targets = data::make_item(spec, item).targets;
      const ad::Tensor phi = set.modulations.row(row);
      std::vector<inr::PerturbationResult> results;
      for (int s = 0; s < model.shift_dim(); ++s) {
        auto r = inr::perturb_modulation_rmse(model, phi, s, o->delta, grid.coords, targets);
        text += csv_row({std::to_string(row), std::to_string(s), std::to_string(r.layer), std::to_string(r.unit),
                         f32(r.rmse), f32(r.rmse_to_targets)});
        layer_rmse[static_cast<std::size_t>(r.layer)] += r.rmse;
        layer_count[static_cast<std::size_t>(r.layer)] += 1;
        results.push_back(std::move(r));
      }
      if (o->maps <= 0) continue;
      for (int layer = 0; layer < depth; ++layer) {
        std::vector<const inr::PerturbationResult*> in_layer;
        for (const auto& r : results) {
          if (r.layer == layer) in_layer.push_back(&r);
        }
        std::stable_sort(in_layer.begin(), in_layer.end(), [](auto* a, auto* b) { return a->rmse > b->rmse; });
        for (int k = 0; k < std::min<int>(o->maps, static_cast<int>(in_layer.size())); ++k) {
          const auto* r = in_layer[static_cast<std::size_t>(k)];
          const double peak = r->l1_map.maxCoeff();
          const ad::Tensor scaled = peak > 0.0 ? ad::Tensor(r->l1_map / peak) : r->l1_map;
          save_signal(ctx, "l1_row" + std::to_string(row) + "_layer" + std::to_string(layer) + "_unit" +
                               std::to_string(r->unit),
                      grid, scaled);
        }
      }
    }
    ctx.write("perturb.csv", text);
    std::string summary = "layer,mean_rmse\n";
    for (int l = 0; l < depth; ++l) {
      const auto i = static_cast<std::size_t>(l);
      summary += csv_row({std::to_string(l), f32(layer_rmse[i] / std::max(1, layer_count[i]))});
      ctx.log << "layer " << l << " mean RMSE " << layer_rmse[i] / std::max(1, layer_count[i]) << "\n";
    }
    ctx.write("perturb_layers.csv", summary);
  };
}

std::map<std::string, std::string> read_manifest(const fs::path& path) {
  std::map<std::string, std::string> kv;
  std::istringstream in(io::read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

Runner report(Context& ctx) {
  struct Opts {
    std::string runs;
  };
  auto o = std::make_shared<Opts>();
  ctx.app.add_option("--runs", o->runs, "Comma-separated meta-train output directories")->required();

  return [&ctx, o] {
    struct Run {
      std::string dir;
      int latent_dim = 0;
      std::vector<std::string> header;
      std::vector<std::vector<double>> rows;  // iter, step0..stepN
    };
    std::vector<Run> runs;
    std::string digests;
    std::istringstream list(o->runs);
    std::string dir;
    while (std::getline(list, dir, ',')) {
      if (dir.empty()) continue;
      Run run;
      run.dir = dir;
      const auto manifest = read_manifest(fs::path(dir) / "manifest.txt");
      if (!manifest.contains("command") || manifest.at("command") != "meta-train") {
        throw ConfigError(dir + " is not a meta-train run");
      }
      run.latent_dim = static_cast<int>(io::parse_long(manifest.at("latent-dim")));
      const fs::path eval = fs::path(dir) / "eval.csv";
      digests += io::file_sha256(eval);
      const auto table = load_matrix_csv(eval);
      std::istringstream first_line(io::read_file(eval));
      std::string header;
      std::getline(first_line, header);
      std::istringstream cells(header);
      std::string cell;
      while (std::getline(cells, cell, ',')) run.header.push_back(cell);
      for (ad::Index i = 0; i < table.rows(); ++i) {
        run.rows.emplace_back(table.row(i).data(), table.row(i).data() + table.cols());
      }
      runs.push_back(std::move(run));
    }
    if (runs.empty()) throw ConfigError("report: --runs is empty");
    ctx.record_input("runs", io::sha256_hex(digests));

    std::size_t steps = 0;
    for (const auto& r : runs) steps = std::max(steps, r.header.size() - 1);
    std::vector<std::string> header{"run", "latent_dim", "iter"};
    for (std::size_t k = 0; k < steps; ++k) header.push_back("step" + std::to_string(k));
    std::string csv = csv_row(header);
    std::string md = "# Reconstruction PSNR\n\n## Mean PSNR (dB) after each inner step\n\n| run | latent dim | iter |";
    for (std::size_t k = 0; k < steps; ++k) md += " step " + std::to_string(k) + " |";
    md += "\n|---|---|---|";
    for (std::size_t k = 0; k < steps; ++k) md += "---|";
    md += "\n";
    for (const auto& r : runs) {
      for (const auto& row : r.rows) {
        std::vector<std::string> cells{r.dir, std::to_string(r.latent_dim), std::to_string(static_cast<long>(row[0]))};
        md += "| " + r.dir + " | " + std::to_string(r.latent_dim) + " | " + std::to_string(static_cast<long>(row[0])) + " |";
        for (std::size_t k = 1; k < row.size(); ++k) {
          cells.push_back(f32(row[k]));
          md += " " + fixed2(row[k]) + " |";
        }
        csv += csv_row(cells);
        md += "\n";
      }
    }

    // Final-step PSNR of the last evaluation of each run, grouped by latent size.
    std::map<int, std::vector<double>> by_dim;
    for (const auto& r : runs) by_dim[r.latent_dim].push_back(r.rows.back().back());
    md += "\n## Final-step PSNR (dB) by latent dimension\n\n| latent dim | runs | mean PSNR |\n|---|---|---|\n";
    std::string grid = "latent_dim,runs,psnr\n";
    for (const auto& [dim, values] : by_dim) {
      double mean = 0.0;
      for (double v : values) mean += v / static_cast<double>(values.size());
      md += "| " + std::to_string(dim) + " | " + std::to_string(values.size()) + " | " + fixed2(mean) + " |\n";
      grid += csv_row({std::to_string(dim), std::to_string(values.size()), f32(mean)});
    }
    ctx.write("report.csv", csv);
    ctx.write("report_latent.csv", grid);
    ctx.write("report.md", md);
    ctx.log << "report over " << runs.size() << " runs\n";
  };
}

}  // namespace

std::vector<CommandSpec> functa_commands() {
  return {
      {"meta-train", "Meta-learn a base network and latent map on a synthetic dataset", meta_train},
      {"fit-functaset", "Fit one modulation per dataset item and save a functaset", fit_functaset},
      {"render", "Render modulations through a meta-learned network", render_cmd},
      {"perturb-analyze", "RMSE of the reconstruction when single shifts are perturbed", perturb_analyze},
      {"report", "Aggregate per-step PSNR tables of meta-train runs", report},
  };
}

}  // namespace functa::cli

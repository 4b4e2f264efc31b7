// Generative models over functasets: neural spline flows and DDPM.

#include "common.hpp"
#include "functa/diffusion.hpp"
#include "functa/error.hpp"
#include "functa/flow.hpp"
#include "functa/rng.hpp"

namespace functa::cli {

namespace {

std::string loss_csv(const std::vector<double>& losses, const std::string& name) {
  std::string text = "iter," + name + "\n";
  for (std::size_t i = 0; i < losses.size(); ++i) text += csv_row({std::to_string(i + 1), f32(losses[i])});
  return text;
}

// Samples are drawn in normalised space and written as raw modulations.
void write_samples(Context& ctx, const ad::Tensor& normalized, const Functaset& set) {
  const ad::Tensor raw = round_to_float32(denormalize(normalized, set.stats));
  if (!raw.allFinite()) throw NumericalError("sampling produced non-finite modulations");
  ctx.write("samples.csv", matrix_csv(raw, "m"));
}

Runner flow_train(Context& ctx) {
  struct Opts {
    std::string functaset;
    std::string test_functaset;
    int layers = 4;
    int hidden = 128;
    double dropout = 0.0;
    bool conditional = false;
    int label_dim = 32;
    double base_std = 0.25;
    long iters = 1000;
    int batch_size = 128;
    double lr = 1e-3;
    long warmup = 100;
    long eval_every = 0;
  };
  auto o = std::make_shared<Opts>();
  auto& app = ctx.app;
  ctx.input("functaset", o->functaset, "Training functaset")->required();
  ctx.input("test-functaset", o->test_functaset, "Held-out functaset for test NLL");
  app.add_option("--layers", o->layers, "Coupling layers");
  app.add_option("--hidden", o->hidden, "Conditioner width");
  app.add_option("--dropout", o->dropout, "Conditioner dropout");
  app.add_option("--conditional", o->conditional, "Condition on class labels");
  app.add_option("--label-dim", o->label_dim, "Label embedding size");
  app.add_option("--base-std", o->base_std, "Standard deviation of the base Gaussian");
  app.add_option("--iters", o->iters, "Training iterations");
  app.add_option("--batch-size", o->batch_size, "Rows per step");
  app.add_option("--lr", o->lr, "Peak learning rate");
  app.add_option("--warmup", o->warmup, "Linear warmup iterations");
  app.add_option("--eval-every", o->eval_every, "Record the test NLL every this many iterations");

  return [&ctx, o] {
    const auto train = load_functaset(o->functaset);
    flow::FlowConfig fc;
    fc.dim = train.latent_dim;
    fc.num_layers = o->layers;
    fc.hidden = o->hidden;
    fc.dropout = o->dropout;
    fc.base_std = o->base_std;
    fc.label_dim = o->label_dim;
    if (o->conditional) {
      if (!train.labelled()) throw ConfigError("flow-train: --conditional needs a labelled functaset");
      fc.num_classes = train.num_classes();
    }
    auto model = flow::FlowModel::create(fc, ctx.seed);

    flow::FlowTrainConfig tc;
    tc.iters = o->iters;
    tc.batch_size = o->batch_size;
    tc.schedule = {o->lr, o->warmup};
    tc.seed = ctx.seed;
    tc.eval_every = o->eval_every;
    const std::vector<int> no_labels;
    const auto& labels = o->conditional ? train.labels : no_labels;
    ad::Tensor test_data;
    Functaset test;
    if (!o->test_functaset.empty()) {
      test = load_functaset(o->test_functaset);
      if (test.base_digest != train.base_digest) throw ConfigError("flow-train: functasets come from different base networks");
      test_data = normalize(test.modulations, train.stats);
    }
    const bool has_test = test_data.size() > 0;
    const auto& test_labels = o->conditional ? test.labels : no_labels;
    const auto result = flow::train_flow(model, train.normalized(), labels, tc, has_test ? &test_data : nullptr,
                                         has_test ? &test_labels : nullptr);

    flow::save_flow(ctx.output("flow.ckpt"), model);
    ctx.write("losses.csv", loss_csv(result.nll, "nll"));
    std::string summary = "split,nll\n";
    const double train_nll = flow::mean_nll(model, train.normalized(), labels);
    summary += csv_row({"train", f32(train_nll)});
    ctx.log << "train NLL " << train_nll;
    if (has_test) {
      const double test_nll = flow::mean_nll(model, test_data, test_labels);
      summary += csv_row({"test", f32(test_nll)});
      ctx.log << ", test NLL " << test_nll;
      std::string curve = "iter,test_nll\n";
      for (const auto& [iter, nll] : result.test_nll) curve += csv_row({std::to_string(iter), f32(nll)});
      ctx.write("test_nll.csv", curve);
    }
    ctx.log << "\n";
    ctx.write("nll.csv", summary);
  };
}

Runner flow_sample(Context& ctx) {
  struct Opts {
    std::string flow;
    std::string functaset;
    int n = 16;
    double temperature = 1.0;
    int label = -1;
  };
  auto o = std::make_shared<Opts>();
  auto& app = ctx.app;
  ctx.input("flow", o->flow, "Flow checkpoint")->required();
  ctx.input("functaset", o->functaset, "Functaset the flow was trained on (for its statistics)")->required();
  app.add_option("--n", o->n, "Number of samples")->check(CLI::PositiveNumber);
  app.add_option("--temperature", o->temperature, "Scale of the base noise; 0 gives the image of the mode");
  app.add_option("--label", o->label, "Class for a conditional flow");

  return [&ctx, o] {
    const auto model = flow::load_flow(o->flow);
    const auto set = load_functaset(o->functaset);
    if (model.config().dim != set.latent_dim) throw ConfigError("flow-sample: flow and functaset dimensions differ");
    std::vector<int> labels;
    if (model.config().num_classes > 0) {
      if (o->label < 0 || o->label >= model.config().num_classes) throw ConfigError("flow-sample: a conditional flow needs a valid --label");
      labels.assign(static_cast<std::size_t>(o->n), o->label);
    } else if (o->label >= 0) {
      throw ConfigError("flow-sample: --label given for an unconditional flow");
    }
    Rng rng(ctx.seed);
    write_samples(ctx, model.sample(o->n, o->temperature, rng, labels), set);
    ctx.log << "drew " << o->n << " samples\n";
  };
}

Runner flow_logprob(Context& ctx) {
  struct Opts {
    std::string flow;
    std::string functaset;
  };
  auto o = std::make_shared<Opts>();
  ctx.input("flow", o->flow, "Flow checkpoint")->required();
  ctx.input("functaset", o->functaset, "Functaset whose rows are scored")->required();

  return [&ctx, o] {
    const auto model = flow::load_flow(o->flow);
    const auto set = load_functaset(o->functaset);
    if (model.config().dim != set.latent_dim) throw ConfigError("flow-logprob: flow and functaset dimensions differ");
    std::vector<int> labels;
    if (model.config().num_classes > 0) {
      if (!set.labelled()) throw ConfigError("flow-logprob: a conditional flow needs a labelled functaset");
      labels = set.labels;
    }
    const ad::Tensor lp = model.log_prob(set.normalized(), labels);
    std::string text = "row,log_prob\n";
    for (ad::Index i = 0; i < lp.rows(); ++i) text += csv_row({std::to_string(i), f32(lp(i, 0))});
    ctx.write("logprob.csv", text);
    ctx.log << "mean NLL " << -lp.mean() << "\n";
  };
}

Runner ddpm_train(Context& ctx) {
  struct Opts {
    std::string functaset;
    int width = 256;
    int blocks = 4;
    double dropout = 0.0;
    int timesteps = 1000;
    long iters = 1000;
    int batch_size = 128;
    double lr = 3e-4;
    long warmup = 100;
  };
  auto o = std::make_shared<Opts>();
  auto& app = ctx.app;
  ctx.input("functaset", o->functaset, "Training functaset")->required();
  app.add_option("--width", o->width, "Residual block width");
  app.add_option("--blocks", o->blocks, "Residual blocks");
  app.add_option("--dropout", o->dropout, "Dropout inside the blocks");
  app.add_option("--timesteps", o->timesteps, "Diffusion steps");
  app.add_option("--iters", o->iters, "Training iterations");
  app.add_option("--batch-size", o->batch_size, "Rows per step");
  app.add_option("--lr", o->lr, "Peak learning rate");
  app.add_option("--warmup", o->warmup, "Linear warmup iterations");

  return [&ctx, o] {
    const auto train = load_functaset(o->functaset);
    diffusion::EpsNetConfig ec;
    ec.dim = train.latent_dim;
    ec.width = o->width;
    ec.blocks = o->blocks;
    ec.dropout = o->dropout;
    if (o->timesteps < 1) throw ConfigError("ddpm-train: timesteps must be positive");
    auto model = diffusion::DdpmModel::create(ec, ctx.seed, o->timesteps);
    diffusion::DdpmTrainConfig tc;
    tc.iters = o->iters;
    tc.batch_size = o->batch_size;
    tc.schedule = {o->lr, o->warmup};
    tc.seed = ctx.seed;
    const auto losses = diffusion::train_ddpm(model, train.normalized(), tc);
    diffusion::save_ddpm(ctx.output("ddpm.ckpt"), model);
    ctx.write("losses.csv", loss_csv(losses, "loss"));
    if (!losses.empty()) ctx.log << "final loss " << losses.back() << "\n";
  };
}

Runner ddpm_sample(Context& ctx) {
  struct Opts {
    std::string ddpm;
    std::string functaset;
    int n = 16;
  };
  auto o = std::make_shared<Opts>();
  ctx.input("ddpm", o->ddpm, "DDPM checkpoint")->required();
  ctx.input("functaset", o->functaset, "Functaset the model was trained on (for its statistics)")->required();
  ctx.app.add_option("--n", o->n, "Number of samples")->check(CLI::PositiveNumber);

  return [&ctx, o] {
    const auto model = diffusion::load_ddpm(o->ddpm);
    const auto set = load_functaset(o->functaset);
    if (model.dim() != set.latent_dim) throw ConfigError("ddpm-sample: model and functaset dimensions differ");
    Rng rng(ctx.seed);
    write_samples(ctx, diffusion::sample(model, o->n, rng), set);
    ctx.log << "drew " << o->n << " samples\n";
  };
}

}  // namespace

std::vector<CommandSpec> generative_commands() {
  return {
      {"flow-train", "Train a neural spline flow on a functaset", flow_train},
      {"flow-sample", "Sample modulations from a trained flow", flow_sample},
      {"flow-logprob", "Log density of functaset rows under a flow", flow_logprob},
      {"ddpm-train", "Train a DDPM on a functaset", ddpm_train},
      {"ddpm-sample", "Sample modulations from a trained DDPM", ddpm_sample},
  };
}

}  // namespace functa::cli

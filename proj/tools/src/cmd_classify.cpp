#include "common.hpp"
#include "functa/classify.hpp"
#include "functa/error.hpp"

namespace functa::cli {

namespace {

Runner classify_train(Context& ctx) {
  struct Opts {
    std::string functaset;
    std::string test_functaset;
    classify::ClassifierConfig cfg;
  };
  auto o = std::make_shared<Opts>();
  o->cfg.num_classes = 0;
  o->cfg.iters = 1000;
  auto& app = ctx.app;
  auto& c = o->cfg;
  ctx.input("functaset", o->functaset, "Labelled training functaset")->required();
  ctx.input("test-functaset", o->test_functaset, "Labelled test functaset tracked during training");
  app.add_option("--width", c.width, "Hidden width");
  app.add_option("--depth", c.depth, "Hidden layers");
  app.add_option("--num-classes", c.num_classes, "Classes; 0 takes the count from the functaset");
  app.add_option("--dropout", c.dropout, "Dropout after each hidden layer");
  app.add_option("--lr", c.lr, "Adam learning rate");
  app.add_option("--batch-size", c.batch_size, "Rows per step");
  app.add_option("--iters", c.iters, "Training iterations");
  app.add_option("--ema-decay", c.ema_decay, "Decay of the accuracy moving averages");
  app.add_option("--eval-every", c.eval_every, "Record the curve every this many iterations");

  return [&ctx, o] {
    const auto train = load_functaset(o->functaset);
    Functaset test;
    if (!o->test_functaset.empty()) {
      test = load_functaset(o->test_functaset);
      if (test.base_digest != train.base_digest) throw ConfigError("classify-train: functasets come from different base networks");
    }
    auto cfg = o->cfg;
    cfg.input_dim = train.latent_dim;
    cfg.seed = ctx.seed;
    if (cfg.num_classes == 0) cfg.num_classes = std::max(train.num_classes(), test.num_classes());
    const auto r = classify::train_classifier(train, o->test_functaset.empty() ? nullptr : &test, cfg);

    classify::save_classifier(ctx.output("classifier.ckpt"), r.model);
    std::string losses = "iter,loss\n";
    for (std::size_t i = 0; i < r.losses.size(); ++i) losses += csv_row({std::to_string(i + 1), f32(r.losses[i])});
    ctx.write("losses.csv", losses);
    std::string curve = "iter,loss,train_accuracy_ema,test_accuracy,test_accuracy_ema\n";
    for (const auto& p : r.curve) {
      curve += csv_row({std::to_string(p.iter), f32(p.loss), f32(p.train_accuracy_ema), f32(p.test_accuracy),
                        f32(p.test_accuracy_ema)});
    }
    ctx.write("curve.csv", curve);
    const auto e = classify::evaluate(r.model, train);
    ctx.log << "train accuracy " << e.accuracy;
    if (!o->test_functaset.empty()) ctx.log << ", test accuracy " << classify::evaluate(r.model, test).accuracy;
    ctx.log << "\n";
  };
}

Runner classify_eval(Context& ctx) {
  struct Opts {
    std::string classifier;
    std::string functaset;
  };
  auto o = std::make_shared<Opts>();
  ctx.input("classifier", o->classifier, "Classifier checkpoint")->required();
  ctx.input("functaset", o->functaset, "Labelled functaset to evaluate on")->required();

  return [&ctx, o] {
    const auto model = classify::load_classifier(o->classifier);
    const auto set = load_functaset(o->functaset);
    if (!set.labelled()) throw ConfigError("classify-eval: the functaset has no labels");
    if (set.latent_dim != model.config().input_dim) throw ConfigError("classify-eval: modulation width differs from the classifier input");
    const auto predicted = model.predict(set.modulations);
    const auto e = classify::evaluate_predictions(predicted, set.labels, model.config().num_classes);

    std::string metrics = "class,count,accuracy\n";
    for (std::size_t k = 0; k < e.per_class.size(); ++k) {
      metrics += csv_row({std::to_string(k), std::to_string(e.class_counts[k]), f32(e.per_class[k])});
    }
    metrics += csv_row({"all", std::to_string(set.size()), f32(e.accuracy)});
    ctx.write("metrics.csv", metrics);

    std::vector<std::string> header{"true"};
    for (std::size_t k = 0; k < e.confusion.size(); ++k) header.push_back("pred" + std::to_string(k));
    std::string confusion = csv_row(header);
    for (std::size_t t = 0; t < e.confusion.size(); ++t) {
      std::vector<std::string> cells{std::to_string(t)};
      for (auto n : e.confusion[t]) cells.push_back(std::to_string(n));
      confusion += csv_row(cells);
    }
    ctx.write("confusion.csv", confusion);

    std::string rows = "row,label,predicted\n";
    for (std::size_t i = 0; i < predicted.size(); ++i) {
      rows += csv_row({std::to_string(i), std::to_string(set.labels[i]), std::to_string(predicted[i])});
    }
    ctx.write("predictions.csv", rows);
    ctx.log << "accuracy " << e.accuracy << " on " << set.size() << " rows\n";
  };
}

}  // namespace

std::vector<CommandSpec> classify_commands() {
  return {
      {"classify-train", "Train an MLP classifier on a labelled functaset", classify_train},
      {"classify-eval", "Accuracy, per-class accuracy and confusion of a classifier", classify_eval},
  };
}

}  // namespace functa::cli

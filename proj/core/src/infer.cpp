#include "functa/infer.hpp"

#include <cmath>
#include <memory>

#include "functa/error.hpp"
#include "functa/optim.hpp"

namespace functa::infer {

void MapConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("map: lambda must be finite and >= 0");
  if (steps < 1) throw ConfigError("map: steps must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("map: learning rate must be positive");
}

MapResult map_fit(int latent_dim, const Term& log_prior, const Term& recon, const MapConfig& cfg) {
  cfg.validate();
  require(latent_dim >= 1, "map: latent_dim must be >= 1");
  require(log_prior || recon, "map: need a prior or a likelihood");
  ad::Value phi = ad::Value::parameter(ad::Tensor::Zero(1, latent_dim));
  std::vector<ad::Value> params{phi};
  AdamState adam;
  MapResult r;
  auto objective = [&] {
    ad::Value total = ad::Value::zeros(1, 1);
    if (log_prior) total = ad::sub(total, log_prior(phi));
    if (recon && cfg.lambda > 0.0) total = ad::add(total, ad::scale(recon(phi), cfg.lambda));
    return total;
  };
  for (int step = 0; step <= cfg.steps; ++step) {
    const ad::Value obj = objective();
    const double value = obj.item();
    if (!std::isfinite(value)) throw NumericalError("map: non-finite objective at step " + std::to_string(step));
    r.trace.push_back(value);
    if (step == 0 || value < r.objective) {
      r.objective = value;
      r.phi = phi.data();
      r.best_step = step;
    }
    if (step == cfg.steps) break;
    adam_step(params, nn::gradients(obj, params), adam, cfg.lr);
  }
  return r;
}

Term flow_prior(const flow::FlowModel& prior, const NormStats& stats, int label) {
  require(prior.config().dim == stats.dim(), "map: flow dimension differs from the modulation statistics");
  require(prior.config().conditional() == (label >= 0), "map: a label is required exactly for conditional flows");
  return [&prior, &stats, label](const ad::Value& phi) {
    const std::vector<int> labels = label >= 0 ? std::vector<int>{label} : std::vector<int>{};
    return prior.log_prob(normalize(phi, stats), labels);
  };
}

Term point_likelihood(const inr::LatentModulatedSiren& model, ad::Tensor coords, ad::Tensor targets) {
  require(coords.rows() >= 1 && coords.rows() == targets.rows(), "map: observations must be non-empty and aligned");
  auto c = std::make_shared<const ad::Tensor>(std::move(coords));
  auto t = std::make_shared<const ad::Tensor>(std::move(targets));
  return [&model, c, t](const ad::Value& phi) { return inr::recon_loss(model, phi, *c, *t); };
}

Term scene_likelihood(const inr::LatentModulatedSiren& model, std::vector<render::View> views,
                      std::vector<render::ViewSelection> observed, render::RenderConfig config) {
  require(!views.empty() && !observed.empty(), "map: at least one posed observation is required");
  auto v = std::make_shared<const std::vector<render::View>>(std::move(views));
  auto o = std::make_shared<const std::vector<render::ViewSelection>>(std::move(observed));
  return [&model, v, o, config](const ad::Value& phi) {
    return render::scene_recon_loss(render::siren_scene(model, phi), *v, *o, config);
  };
}

void select_rows(const ad::Tensor& coords, const ad::Tensor& targets, const std::vector<int>& index,
                 ad::Tensor* coords_out, ad::Tensor* targets_out) {
  require(coords.rows() == targets.rows(), "select_rows: coordinates and targets are not aligned");
  coords_out->resize(static_cast<ad::Index>(index.size()), coords.cols());
  targets_out->resize(static_cast<ad::Index>(index.size()), targets.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    require(index[i] >= 0 && index[i] < coords.rows(), "select_rows: index out of range");
    coords_out->row(static_cast<ad::Index>(i)) = coords.row(index[i]);
    targets_out->row(static_cast<ad::Index>(i)) = targets.row(index[i]);
  }
}

ad::Tensor impute(const inr::LatentModulatedSiren& model, const ad::Tensor& phi, const ad::Tensor& coords) {
  return model.evaluate(phi, coords);
}

std::vector<ad::Tensor> novel_view(const inr::LatentModulatedSiren& model, const Term& log_prior,
                                   const std::vector<render::View>& views,
                                   const std::vector<render::ViewSelection>& observed,
                                   const std::vector<render::CameraPose>& targets,
                                   const render::RenderConfig& config, const MapConfig& cfg, MapResult* fit) {
  const Term recon = scene_likelihood(model, views, observed, config);
  MapResult r = map_fit(model.latent_dim(), log_prior, recon, cfg);
  const auto scene = render::siren_scene(model, ad::Value::constant(r.phi));
  std::vector<ad::Tensor> out;
  for (const auto& pose : targets) out.push_back(render::render_image(scene, pose, config));
  if (fit != nullptr) *fit = std::move(r);
  return out;
}

}  // namespace functa::infer

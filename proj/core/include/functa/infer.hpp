#pragma once

// MAP inference of a modulation from partial observations:
//   min_phi  -log p(normalize(phi)) + lambda * recon(phi)
// with a flow prior and a mean-squared reconstruction term.

#include <functional>
#include <vector>

#include "functa/ad.hpp"
#include "functa/flow.hpp"
#include "functa/functaset.hpp"
#include "functa/inr.hpp"
#include "functa/render.hpp"

namespace functa::infer {

struct MapConfig {
  double lambda = 1.0;
  int steps = 200;
  double lr = 1e-2;

  void validate() const;
};

/// Scalar term of phi (1 x latent_dim) returning a 1 x 1 value.
using Term = std::function<ad::Value(const ad::Value& phi)>;

struct MapResult {
  /// Lowest-objective iterate seen.
  ad::Tensor phi;
  double objective = 0.0;
  int best_step = 0;
  /// Objective at phi_0 .. phi_steps.
  std::vector<double> trace;
};

/// Adam from phi = 0. Either term may be empty: no prior gives the
/// prior-free fit, no likelihood gives the prior mode. Throws NumericalError
/// on a non-finite objective.
MapResult map_fit(int latent_dim, const Term& log_prior, const Term& recon, const MapConfig& cfg);

/// log p(normalize(phi)) under the flow; `label` < 0 for unconditional flows.
Term flow_prior(const flow::FlowModel& prior, const NormStats& stats, int label = -1);
/// Mean squared error of the SIREN on observed coordinates.
Term point_likelihood(const inr::LatentModulatedSiren& model, ad::Tensor coords, ad::Tensor targets);
/// Mean squared error of rendered pixels on the observed part of posed views.
Term scene_likelihood(const inr::LatentModulatedSiren& model, std::vector<render::View> views,
                      std::vector<render::ViewSelection> observed, render::RenderConfig config);

/// Rows of `coords`/`targets` listed in `index`.
void select_rows(const ad::Tensor& coords, const ad::Tensor& targets, const std::vector<int>& index,
                 ad::Tensor* coords_out, ad::Tensor* targets_out);

/// Dense evaluation of the fitted signal on every coordinate.
ad::Tensor impute(const inr::LatentModulatedSiren& model, const ad::Tensor& phi, const ad::Tensor& coords);

/// MAP fit on the observed pixels of `views`, then renders each target pose.
std::vector<ad::Tensor> novel_view(const inr::LatentModulatedSiren& model, const Term& log_prior,
                                   const std::vector<render::View>& views,
                                   const std::vector<render::ViewSelection>& observed,
                                   const std::vector<render::CameraPose>& targets,
                                   const render::RenderConfig& config, const MapConfig& cfg,
                                   MapResult* fit = nullptr);

}  // namespace functa::infer

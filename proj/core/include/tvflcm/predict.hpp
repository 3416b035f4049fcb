#pragma once

// Subject-level survival from a fitted route and landmark-chained dynamic
// prediction.

#include "tvflcm/routes.hpp"

#include <optional>
#include <vector>

namespace tvflcm {

struct SubjectData {
  std::vector<double> x;            // scalar covariates
  std::vector<double> z;            // functional predictor on the fit grid
  std::optional<double> followed_to;  // known event-free time, checked against landmark risk sets
};

struct SurvivalCurve {
  std::vector<double> time;         // origin first, then jump times
  std::vector<double> survival;
  std::optional<double> origin;     // landmark time s_l
};

/// Right-continuous step evaluation; 1 before the first time.
double survival_at(const SurvivalCurve& curve, double t);

/// Linear predictor of `subject` in stratum `stratum` (landmark route), or at
/// time t (poisson route; `stratum` ignored).
double subject_eta(const RouteFit& fit, const SubjectData& subject, int stratum, double t = 0.0);

/// Landmark route: S(t) = exp(-H_l(t) exp(eta_l)) over the window of stratum l.
/// Poisson route: S(t) = exp(-sum_{t_k <= t} dH_k exp(eta(t_k))) from time 0.
SurvivalCurve survival_curve(const RouteFit& fit, const SubjectData& subject, int stratum = 0);

struct DynamicPrediction {
  double t_star = 0.0;
  double direct = 1.0;              // from the origin window alone (chained when it does not reach t_star)
  bool direct_covers = false;
  double chained = 1.0;             // product of conditional survivals over consecutive landmarks
  double difference = 0.0;          // |direct - chained|
  std::vector<double> factors;
};

/// P(T > t_star | T > s_origin). Throws ValidationError when t_star lies beyond
/// the covered range.
DynamicPrediction dynamic_predict(const RouteFit& fit, const SubjectData& subject, double t_star, int origin = 0);

}  // namespace tvflcm

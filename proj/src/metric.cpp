#include "bnwvad/metric.hpp"

#include <stdexcept>

namespace bnwvad {

std::string to_string(DfmMetric metric) {
  switch (metric) {
    case DfmMetric::Mahalanobis: return "mahalanobis";
    case DfmMetric::Euclidean: return "euclidean";
    case DfmMetric::Cosine: return "cosine";
    case DfmMetric::FeatureMagnitude: return "fm";
  }
  return "unknown";
}

DfmMetric parse_metric(std::string_view name) {
  if (name == "mahalanobis") return DfmMetric::Mahalanobis;
  if (name == "euclidean") return DfmMetric::Euclidean;
  if (name == "cosine") return DfmMetric::Cosine;
  if (name == "fm" || name == "feature_magnitude") return DfmMetric::FeatureMagnitude;
  throw std::invalid_argument("unknown metric: " + std::string(name));
}

}  // namespace bnwvad

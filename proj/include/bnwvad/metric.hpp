#pragma once

#include <string>
#include <string_view>

namespace bnwvad {

/// Abnormality criterion used to score a snippet against the running statistics.
/// Every variant is oriented so that larger means more abnormal.
enum class DfmMetric { Mahalanobis, Euclidean, Cosine, FeatureMagnitude };

std::string to_string(DfmMetric metric);
/// Accepts "mahalanobis", "euclidean", "cosine", "fm" / "feature_magnitude".
DfmMetric parse_metric(std::string_view name);

}  // namespace bnwvad

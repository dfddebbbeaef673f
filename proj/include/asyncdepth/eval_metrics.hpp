#pragma once

#include <algorithm>
#include <cmath>

#include "asyncdepth/depth_renderer.hpp"
#include "asyncdepth/errors.hpp"

namespace asyncdepth {

/// Aggregated true-positive errors of a detector.
struct TPMetrics {
  double ate = 0.0;  // meters
  double ase = 0.0;  // 1 - IoU after alignment
  double aoe = 0.0;  // radians
};

/// DS = (3 mAP + sum over TP metrics of (1 - min(1, mTP))) / 6.
inline double detection_score(double mean_ap, const TPMetrics& tp) {
  if (!(mean_ap >= 0.0 && mean_ap <= 1.0)) {
    throw ContractViolation("detection_score: mAP must lie in [0, 1]");
  }
  for (double m : {tp.ate, tp.ase, tp.aoe}) {
    if (!(m >= 0.0)) throw ContractViolation("detection_score: TP metrics must be >= 0");
  }
  double sum = 3.0 * mean_ap;
  for (double m : {tp.ate, tp.ase, tp.aoe}) sum += 1.0 - std::min(1.0, m);
  return sum / 6.0;
}

/// Mean absolute depth difference over pixels valid in both maps.
inline double depth_l1(const DepthMap& pred, const DepthMap& gt) {
  if (pred.width != gt.width || pred.height != gt.height) {
    throw ContractViolation("depth_l1: dimension mismatch");
  }
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    if (pred.data[i] == kEmptyDepth || gt.data[i] == kEmptyDepth) continue;
    sum += std::abs(static_cast<double>(pred.data[i]) - static_cast<double>(gt.data[i]));
    ++n;
  }
  if (n == 0) throw ContractViolation("depth_l1: no pixel is valid in both maps");
  return sum / static_cast<double>(n);
}

}  // namespace asyncdepth

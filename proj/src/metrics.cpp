// Copyright 2026 The OASIS Engine Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "oasis/metrics.hpp"

#include <string>

#include "oasis/error.hpp"

namespace oasis {

ClassOverlap class_overlap(const Mask& pred, const Mask& gt, int classes) {
  if (pred.height != gt.height || pred.width != gt.width ||
      pred.labels.size() != gt.labels.size()) {
    throw Error(ErrorKind::kShape, "prediction " + std::to_string(pred.height) + "x" +
                                       std::to_string(pred.width) + " vs ground truth " +
                                       std::to_string(gt.height) + "x" +
                                       std::to_string(gt.width));
  }
  const auto n = static_cast<std::size_t>(classes);
  ClassOverlap o{std::vector<long>(n, 0), std::vector<long>(n, 0), std::vector<long>(n, 0)};
  for (std::size_t i = 0; i < gt.labels.size(); ++i) {
    const int p = pred.labels[i];
    const int g = gt.labels[i];
    if (p < 0 || p >= classes || g < 0 || g >= classes) {
      throw Error(ErrorKind::kShape, "label outside [0, " + std::to_string(classes) + ")");
    }
    const auto pi = static_cast<std::size_t>(p), gi = static_cast<std::size_t>(g);
    ++o.gt_pixels[gi];
    if (p == g) {
      ++o.intersection[gi];
      ++o.uni[gi];
    } else {
      ++o.uni[gi];
      ++o.uni[pi];
    }
  }
  return o;
}

double frame_miou(const Mask& pred, const Mask& gt, int classes) {
  const ClassOverlap o = class_overlap(pred, gt, classes);
  double sum = 0.0;
  int present = 0;
  for (std::size_t c = 0; c < o.gt_pixels.size(); ++c) {
    if (o.gt_pixels[c] == 0) continue;
    sum += static_cast<double>(o.intersection[c]) / static_cast<double>(o.uni[c]);
    ++present;
  }
  if (present == 0) throw Error(ErrorKind::kShape, "ground truth mask is empty");
  return sum / present;
}

int count_classes(const Mask& mask, int classes) {
  std::vector<bool> seen(static_cast<std::size_t>(classes), false);
  int n = 0;
  for (int v : mask.labels) {
    if (v < 0 || v >= classes) continue;
    if (!seen[static_cast<std::size_t>(v)]) {
      seen[static_cast<std::size_t>(v)] = true;
      ++n;
    }
  }
  return n;
}

}  // namespace oasis

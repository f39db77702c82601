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

#pragma once

#include <vector>

#include "oasis/image.hpp"

namespace oasis {

/// Per-class pixel intersection and union between a prediction and a mask.
struct ClassOverlap {
  std::vector<long> intersection;
  std::vector<long> uni;
  std::vector<long> gt_pixels;
};

ClassOverlap class_overlap(const Mask& pred, const Mask& gt, int classes);

/// Mean IoU over the classes present in `gt`. Classes that are only predicted
/// do not enter the average.
double frame_miou(const Mask& pred, const Mask& gt, int classes);

/// Number of distinct classes occupying at least one pixel.
int count_classes(const Mask& mask, int classes);

}  // namespace oasis

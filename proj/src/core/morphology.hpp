/*
 * Copyright 2026 The matedit Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <string>
#include <vector>

#include "core/image.hpp"

namespace matedit {

enum class MorphOp { Erode, Dilate, Open };

MorphOp parse_morph_op(const std::string& name);

/// What the structuring element sees beyond the frame.
enum class MorphBoundary { Background, Foreground };

/// Half-widths of a disc of the given radius: row dy in [-r, r] spans
/// [-w, w] with w = half_widths[dy + r].
std::vector<int> disc_half_widths(int radius);

Mask erode(const Mask& m, int radius, MorphBoundary boundary = MorphBoundary::Background);
Mask dilate(const Mask& m, int radius, MorphBoundary boundary = MorphBoundary::Background);
/// dilate(erode(m)).
Mask open(const Mask& m, int radius);
Mask morphology(const Mask& m, MorphOp op, int radius);

}  // namespace matedit

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

#include <array>
#include <cstdint>

#include "core/image.hpp"

namespace matedit {

/// The four texels and weights a bilinear read at uv touches. Coordinates
/// clamp to the atlas edge, so neighbouring taps may coincide.
struct BilinearTaps {
    std::array<int, 4> x;
    std::array<int, 4> y;
    std::array<double, 4> w;
};

BilinearTaps bilinear_taps(int width, int height, Vec2 uv);

/// Bilinear read of channel c.
double sample_uv(const Image& texture, Vec2 uv, int c = 0);
Vec3 sample_uv_rgb(const Image& texture, Vec2 uv);

/// Adjoint of sample_uv: adds upstream * weight into each tap of `gradient`.
void splat_uv(Image& gradient, Vec2 uv, double upstream, int c = 0);
void splat_uv_rgb(Image& gradient, Vec2 uv, const Vec3& upstream);

/// Nearest-texel lookup (label atlases are not interpolated).
std::uint16_t sample_label(const LabelImage& labels, Vec2 uv);
std::pair<int, int> nearest_texel(int width, int height, Vec2 uv);

}  // namespace matedit

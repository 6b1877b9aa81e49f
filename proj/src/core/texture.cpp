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

#include "core/texture.hpp"

namespace matedit {

BilinearTaps bilinear_taps(int width, int height, Vec2 uv) {
    const double u = std::clamp(uv.x, 0.0, 1.0);
    const double v = std::clamp(uv.y, 0.0, 1.0);
    const double fx = u * width - 0.5;
    const double fy = v * height - 0.5;
    const double x0f = std::floor(fx);
    const double y0f = std::floor(fy);
    const double ax = fx - x0f;
    const double ay = fy - y0f;
    const int x0 = static_cast<int>(x0f);
    const int y0 = static_cast<int>(y0f);
    auto cx = [&](int x) { return std::clamp(x, 0, width - 1); };
    auto cy = [&](int y) { return std::clamp(y, 0, height - 1); };
    BilinearTaps t;
    t.x = {cx(x0), cx(x0 + 1), cx(x0), cx(x0 + 1)};
    t.y = {cy(y0), cy(y0), cy(y0 + 1), cy(y0 + 1)};
    t.w = {(1 - ax) * (1 - ay), ax * (1 - ay), (1 - ax) * ay, ax * ay};
    return t;
}

double sample_uv(const Image& texture, Vec2 uv, int c) {
    const BilinearTaps t = bilinear_taps(texture.width(), texture.height(), uv);
    double v = 0;
    for (int k = 0; k < 4; ++k) v += t.w[k] * texture.at(t.x[k], t.y[k], c);
    return v;
}

Vec3 sample_uv_rgb(const Image& texture, Vec2 uv) {
    const BilinearTaps t = bilinear_taps(texture.width(), texture.height(), uv);
    Vec3 v;
    for (int k = 0; k < 4; ++k) v += t.w[k] * rgb_at(texture, t.x[k], t.y[k]);
    return v;
}

void splat_uv(Image& gradient, Vec2 uv, double upstream, int c) {
    const BilinearTaps t = bilinear_taps(gradient.width(), gradient.height(), uv);
    for (int k = 0; k < 4; ++k) gradient.at(t.x[k], t.y[k], c) += t.w[k] * upstream;
}

void splat_uv_rgb(Image& gradient, Vec2 uv, const Vec3& upstream) {
    const BilinearTaps t = bilinear_taps(gradient.width(), gradient.height(), uv);
    for (int k = 0; k < 4; ++k)
        for (int c = 0; c < 3; ++c) gradient.at(t.x[k], t.y[k], c) += t.w[k] * upstream[c];
}

std::pair<int, int> nearest_texel(int width, int height, Vec2 uv) {
    const int x = std::clamp(static_cast<int>(std::floor(uv.x * width)), 0, width - 1);
    const int y = std::clamp(static_cast<int>(std::floor(uv.y * height)), 0, height - 1);
    return {x, y};
}

std::uint16_t sample_label(const LabelImage& labels, Vec2 uv) {
    const auto [x, y] = nearest_texel(labels.width(), labels.height(), uv);
    return labels.at(x, y);
}

}  // namespace matedit

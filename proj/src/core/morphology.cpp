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

#include "core/morphology.hpp"

#include "core/parallel.hpp"

namespace matedit {

namespace {

// Per-row prefix counts of set pixels; row y occupies [y*(w+1), (y+1)*(w+1)).
std::vector<int> row_prefix(const Mask& m) {
    const int w = m.width();
    std::vector<int> p(static_cast<size_t>(m.height()) * (w + 1), 0);
    for (int y = 0; y < m.height(); ++y) {
        int* row = &p[static_cast<size_t>(y) * (w + 1)];
        for (int x = 0; x < w; ++x) row[x + 1] = row[x] + (m.at(x, y) != 0);
    }
    return p;
}

template <bool kErode>
Mask apply(const Mask& m, int radius, MorphBoundary boundary) {
    require(radius >= 1, "morphology radius must be >= 1");
    const int w = m.width(), h = m.height();
    const bool outside = boundary == MorphBoundary::Foreground;
    const auto half = disc_half_widths(radius);
    const auto prefix = row_prefix(m);
    Mask out(w, h);
    parallel_rows(h, 16, [&](int, int y0, int y1) {
        for (int y = y0; y < y1; ++y)
            for (int x = 0; x < w; ++x) {
                bool result = kErode;
                for (int dy = -radius; dy <= radius && result == kErode; ++dy) {
                    const int yy = y + dy, hw = half[dy + radius];
                    const int a = x - hw, b = x + hw;
                    if (yy < 0 || yy >= h) {
                        if (outside != kErode) result = !kErode;
                        continue;
                    }
                    const bool clipped = a < 0 || b >= w;
                    if (clipped && outside != kErode) {
                        result = !kErode;
                        continue;
                    }
                    const int lo = std::max(a, 0), hi = std::min(b, w - 1);
                    const int* row = &prefix[static_cast<size_t>(yy) * (w + 1)];
                    const int ones = row[hi + 1] - row[lo];
                    if (kErode ? ones != hi - lo + 1 : ones > 0) result = !kErode;
                }
                out.at(x, y) = result ? 1 : 0;
            }
    });
    return out;
}

}  // namespace

MorphOp parse_morph_op(const std::string& name) {
    if (name == "erode") return MorphOp::Erode;
    if (name == "dilate") return MorphOp::Dilate;
    if (name == "open") return MorphOp::Open;
    fail(ErrorCode::InvalidArgument, "unknown morphology op '" + name + "'");
}

std::vector<int> disc_half_widths(int radius) {
    std::vector<int> half(2 * radius + 1);
    for (int dy = -radius; dy <= radius; ++dy) {
        int hw = 0;
        while ((hw + 1) * (hw + 1) + dy * dy <= radius * radius) ++hw;
        half[dy + radius] = hw;
    }
    return half;
}

Mask erode(const Mask& m, int radius, MorphBoundary boundary) { return apply<true>(m, radius, boundary); }
Mask dilate(const Mask& m, int radius, MorphBoundary boundary) { return apply<false>(m, radius, boundary); }
Mask open(const Mask& m, int radius) { return dilate(erode(m, radius), radius); }

Mask morphology(const Mask& m, MorphOp op, int radius) {
    switch (op) {
        case MorphOp::Erode: return erode(m, radius);
        case MorphOp::Dilate: return dilate(m, radius);
        case MorphOp::Open: return open(m, radius);
    }
    return m;
}

}  // namespace matedit

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

#include "core/semantics.hpp"

#include <cmath>
#include <numeric>

#include <json.hpp>

#include "core/parallel.hpp"

namespace matedit {

Vec3 rgb_to_hsv(const Vec3& rgb) {
    const double mx = max_component(rgb);
    const double mn = std::min({rgb.x, rgb.y, rgb.z});
    const double delta = mx - mn;
    double h = 0;
    if (delta > 0) {
        if (mx == rgb.x) h = std::fmod((rgb.y - rgb.z) / delta + 6.0, 6.0);
        else if (mx == rgb.y) h = (rgb.z - rgb.x) / delta + 2.0;
        else h = (rgb.x - rgb.y) / delta + 4.0;
        h /= 6.0;
    }
    const double s = mx > 0 ? delta / mx : 0.0;
    return {h, s, mx};
}

Feature color_feature(const Vec3& rgb) {
    const Vec3 hsv = rgb_to_hsv(rgb);
    return {rgb.x, rgb.y, rgb.z, hsv.x, hsv.y, hsv.z};
}

double feature_similarity(const Feature& a, const Feature& b) {
    require(a.size() == b.size(), "feature_similarity: feature lengths differ");
    double ab = 0, aa = 0, bb = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    if (aa == 0 && bb == 0) return 1.0;
    if (aa == 0 || bb == 0) return 0.0;
    return ab / std::sqrt(aa * bb);
}

void SegmentSet::validate() const {
    if (segments.empty()) fail(ErrorCode::EmptyInput, "segment set is empty");
    Mask seen(width, height);
    for (size_t i = 0; i < segments.size(); ++i) {
        const Segment& s = segments[i];
        require(s.mask.width() == width && s.mask.height() == height,
                "segment " + std::to_string(i) + " has a different resolution");
        require(s.area == popcount(s.mask), "segment " + std::to_string(i) + " area differs from its mask");
        require(!s.feature.empty() && s.feature.size() == segments.front().feature.size(),
                "segment features must be non-empty and equally long");
        for (size_t p = 0; p < seen.pixel_count(); ++p) {
            if (!s.mask[p]) continue;
            require(!seen[p], "segments overlap");
            seen[p] = 1;
        }
    }
}

SegmentSet make_segment_set(const Image& image, const std::vector<Mask>& masks) {
    require(image.channels() == 3, "segment image must be RGB");
    SegmentSet set;
    set.width = image.width();
    set.height = image.height();
    for (const Mask& m : masks) {
        if (!m.same_shape(Mask(image.width(), image.height())))
            fail(ErrorCode::ResolutionMismatch, "mask and image differ in resolution");
        Segment s;
        s.mask = m;
        s.feature.assign(6, 0.0);
        for (int y = 0; y < m.height(); ++y)
            for (int x = 0; x < m.width(); ++x) {
                if (!m.at(x, y)) continue;
                const Feature f = color_feature(rgb_at(image, x, y));
                for (size_t k = 0; k < f.size(); ++k) s.feature[k] += f[k];
                ++s.area;
            }
        if (s.area == 0) continue;
        for (double& v : s.feature) v /= static_cast<double>(s.area);
        set.segments.push_back(std::move(s));
    }
    set.validate();
    return set;
}

SegmentSet load_segment_manifest(const std::filesystem::path& manifest) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(manifest));
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::InvalidArgument, std::string("segment manifest: ") + e.what());
    }
    require(j.contains("image") && j.contains("masks") && j["masks"].is_array(),
            "segment manifest needs \"image\" and \"masks\"");
    const auto base = manifest.parent_path();
    const Image image = read_image(base / j["image"].get<std::string>());
    std::vector<Mask> masks;
    for (const auto& name : j["masks"]) masks.push_back(read_mask(base / name.get<std::string>()));
    if (!j.contains("features")) return make_segment_set(image, masks);

    const auto& rows = j["features"];
    require(rows.is_array() && rows.size() == masks.size(), "segment manifest: one feature row per mask");
    SegmentSet set;
    set.width = image.width();
    set.height = image.height();
    for (size_t i = 0; i < masks.size(); ++i) {
        Segment s;
        s.mask = masks[i];
        s.area = popcount(s.mask);
        if (s.area == 0) continue;
        s.feature = rows[i].get<Feature>();
        set.segments.push_back(std::move(s));
    }
    set.validate();
    return set;
}

void SemanticLabelMap::validate() const {
    require(static_cast<int>(library.size()) == label_count, "label library size differs from label count");
    for (auto l : labels.values())
        require(l == kUnlabeled || l < label_count, "label id out of range");
}

SemanticLabelMap cluster_segments(const SegmentSet& segments, double similarity_threshold) {
    segments.validate();
    std::vector<size_t> order(segments.segments.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return segments.segments[a].area < segments.segments[b].area;
    });

    SemanticLabelMap out;
    out.labels = LabelImage(segments.width, segments.height);
    std::ranges::fill(out.labels.values(), kUnlabeled);
    std::vector<Feature> sums;  // area-weighted feature sums
    for (size_t idx : order) {
        const Segment& s = segments.segments[idx];
        int best = -1;
        double best_sim = -2;
        for (int l = 0; l < out.label_count; ++l) {
            const double sim = feature_similarity(s.feature, out.library[l]);
            if (sim > best_sim) {
                best_sim = sim;
                best = l;
            }
        }
        int target = best;
        if (best < 0 || !(best_sim > similarity_threshold)) {
            target = out.label_count++;
            out.library.emplace_back(s.feature.size(), 0.0);
            sums.emplace_back(s.feature.size(), 0.0);
            out.areas.push_back(0);
        }
        out.areas[target] += s.area;
        for (size_t k = 0; k < s.feature.size(); ++k) {
            sums[target][k] += s.feature[k] * static_cast<double>(s.area);
            out.library[target][k] = sums[target][k] / static_cast<double>(out.areas[target]);
        }
        for (size_t p = 0; p < s.mask.pixel_count(); ++p)
            if (s.mask[p]) out.labels[p] = static_cast<std::uint16_t>(target);
    }
    require(out.label_count < kUnlabeled, "too many semantic labels");
    return out;
}

std::vector<std::vector<double>> region_average(const Image& image, const LabelImage& labels, int label_count) {
    if (image.width() != labels.width() || image.height() != labels.height())
        fail(ErrorCode::ResolutionMismatch, "image and labels differ in resolution");
    const int ch = image.channels();
    // Accumulate deviations from each region's first pixel so that constant
    // regions average exactly.
    std::vector<std::vector<double>> first(label_count), sums(label_count, std::vector<double>(ch, 0.0));
    std::vector<size_t> counts(label_count, 0);
    for (int y = 0; y < image.height(); ++y)
        for (int x = 0; x < image.width(); ++x) {
            const auto l = labels.at(x, y);
            if (l == kUnlabeled) continue;
            require(l < label_count, "label id out of range");
            if (counts[l]++ == 0)
                for (int c = 0; c < ch; ++c) first[l].push_back(image.at(x, y, c));
            for (int c = 0; c < ch; ++c) sums[l][c] += image.at(x, y, c) - first[l][c];
        }
    for (int l = 0; l < label_count; ++l) {
        if (counts[l] == 0) fail(ErrorCode::EmptyRegion, "label " + std::to_string(l) + " has no pixels");
        for (int c = 0; c < ch; ++c) sums[l][c] = first[l][c] + sums[l][c] / static_cast<double>(counts[l]);
    }
    return sums;
}

SemanticLabelMap assign_pseudo_labels(const Image& view, const std::vector<Feature>& library, double assign_threshold,
                                      const Mask* coverage) {
    if (library.empty()) fail(ErrorCode::EmptyInput, "label library is empty");
    require(view.channels() == 3, "pseudo-labelling needs an RGB view");
    for (const auto& f : library) require(f.size() == 6, "pseudo-labelling needs color library features");
    if (coverage && !coverage->same_shape(Mask(view.width(), view.height())))
        fail(ErrorCode::ResolutionMismatch, "coverage and view differ in resolution");

    SemanticLabelMap out;
    out.label_count = static_cast<int>(library.size());
    out.library = library;
    out.areas.assign(library.size(), 0);
    out.labels = LabelImage(view.width(), view.height());
    parallel_rows(view.height(), 16, [&](int, int y0, int y1) {
        for (int y = y0; y < y1; ++y)
            for (int x = 0; x < view.width(); ++x) {
                std::uint16_t label = kUnlabeled;
                if (!coverage || coverage->at(x, y)) {
                    const Feature f = color_feature(rgb_at(view, x, y));
                    double best_sim = -2;
                    size_t best = 0;
                    for (size_t l = 0; l < library.size(); ++l) {
                        const double sim = feature_similarity(f, library[l]);
                        if (sim > best_sim) {
                            best_sim = sim;
                            best = l;
                        }
                    }
                    if (best_sim > assign_threshold) label = static_cast<std::uint16_t>(best);
                }
                out.labels.at(x, y) = label;
            }
    });
    for (auto l : out.labels.values())
        if (l != kUnlabeled) ++out.areas[l];
    return out;
}

void save_label_map(const std::filesystem::path& stem, const SemanticLabelMap& map) {
    map.validate();
    auto pgm = stem;
    pgm += ".pgm";
    auto sidecar = stem;
    sidecar += ".json";
    write_pgm16(pgm, map.labels);
    nlohmann::json j;
    j["version"] = 1;
    j["label_count"] = map.label_count;
    j["unlabeled"] = kUnlabeled;
    j["library"] = map.library;
    j["areas"] = map.areas;
    write_file(sidecar, j.dump(2) + "\n");
}

SemanticLabelMap load_label_map(const std::filesystem::path& stem) {
    auto pgm = stem;
    pgm += ".pgm";
    auto sidecar = stem;
    sidecar += ".json";
    SemanticLabelMap map;
    map.labels = read_pgm16(pgm);
    try {
        const auto j = nlohmann::json::parse(read_file(sidecar));
        map.label_count = j.at("label_count").get<int>();
        map.library = j.at("library").get<std::vector<Feature>>();
        map.areas = j.value("areas", std::vector<size_t>{});
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::Io, std::string("label sidecar: ") + e.what());
    }
    map.validate();
    return map;
}

}  // namespace matedit

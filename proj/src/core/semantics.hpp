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

#include <filesystem>
#include <vector>

#include "core/image.hpp"

namespace matedit {

using Feature = std::vector<double>;

inline constexpr double kDefaultSimilarityThreshold = 0.92;
inline constexpr double kDefaultAssignThreshold = 0.85;

Vec3 rgb_to_hsv(const Vec3& rgb);
/// Mean RGB followed by mean HSV (6 values), plus any extra channels.
Feature color_feature(const Vec3& rgb);
/// Cosine similarity; two zero vectors are identical, one zero vector is
/// unrelated to anything else.
double feature_similarity(const Feature& a, const Feature& b);

struct Segment {
    Mask mask;
    Feature feature;
    size_t area = 0;
};

/// Over-segmentation of one image into mutually exclusive regions.
struct SegmentSet {
    int width = 0, height = 0;
    std::vector<Segment> segments;

    void validate() const;
};

/// Builds segments from masks, computing each feature as the mean color
/// feature over the mask. Empty masks are dropped.
SegmentSet make_segment_set(const Image& image, const std::vector<Mask>& masks);

/// Manifest JSON: {"image": "view.pfm", "masks": ["m0.pgm", ...]} with paths
/// relative to the manifest. Optional "features": [[...], ...] replaces the
/// color features (one row per mask, e.g. for externally computed embeddings).
SegmentSet load_segment_manifest(const std::filesystem::path& manifest);

struct SemanticLabelMap {
    LabelImage labels;  // kUnlabeled outside every segment
    int label_count = 0;
    std::vector<Feature> library;
    std::vector<size_t> areas;

    void validate() const;
};

SemanticLabelMap cluster_segments(const SegmentSet& segments, double similarity_threshold = kDefaultSimilarityThreshold);

/// Mean of each label's pixels; kUnlabeled pixels are skipped.
std::vector<std::vector<double>> region_average(const Image& image, const LabelImage& labels, int label_count);

/// Per-pixel argmax of feature similarity against the library; pixels whose
/// best similarity does not exceed the threshold (or outside `coverage`, if
/// given) are kUnlabeled.
SemanticLabelMap assign_pseudo_labels(const Image& view, const std::vector<Feature>& library,
                                      double assign_threshold = kDefaultAssignThreshold,
                                      const Mask* coverage = nullptr);

/// Writes `<stem>.pgm` (16-bit ids) and `<stem>.json` (label count, library, areas).
void save_label_map(const std::filesystem::path& stem, const SemanticLabelMap& map);
SemanticLabelMap load_label_map(const std::filesystem::path& stem);

}  // namespace matedit

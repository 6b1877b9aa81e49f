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
#include <filesystem>
#include <vector>

#include "core/image.hpp"
#include "core/mesh.hpp"

namespace matedit {

inline constexpr size_t kDefaultChamferSamples = 30000;

struct PointCloud {
    std::vector<Vec3> points;

    size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
};

/// Squared distance from every query point to its nearest reference point.
std::vector<double> nearest_squared_distances(const PointCloud& query, const PointCloud& reference);

/// Mean squared nearest distance a->b plus b->a.
double chamfer_full(const PointCloud& a, const PointCloud& b);
/// Mean squared nearest distance gt->pred only.
double chamfer_partial(const PointCloud& gt, const PointCloud& pred);

/// Area-weighted uniform samples on the surface; deterministic per seed.
PointCloud sample_mesh_surface(const TriangleMesh& mesh, size_t n, std::uint64_t seed);

/// 10 log10(1 / MSE) over all channels; +infinity for identical images.
double psnr(const Image& a, const Image& b);

struct Similarity {
    std::array<double, 16> matrix{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};  // row-major
    Vec3 apply(const Vec3& p) const;
};

struct IcpResult {
    Similarity transform;
    int iterations = 0;
    double rms = 0;  // after alignment
};

/// Iterative closest point with a similarity (scale, rotation, translation)
/// fitted by Umeyama's method each round.
IcpResult icp_align(const PointCloud& source, const PointCloud& target, int max_iterations = 50,
                    double tolerance = 1e-9);

PointCloud transformed(const PointCloud& cloud, const Similarity& t);

/// .obj meshes are sampled (or read as vertices when they have no faces);
/// .xyz/.txt files hold one "x y z" per line.
PointCloud load_point_cloud(const std::filesystem::path& path, size_t samples, std::uint64_t seed);

}  // namespace matedit

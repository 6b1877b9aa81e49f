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
#include <optional>
#include <string>
#include <vector>

#include "core/common.hpp"

namespace matedit {

struct TriangleMesh {
    std::vector<Vec3> positions;
    std::vector<Vec3> normals;
    std::vector<Vec2> uvs;
    std::vector<std::array<std::uint32_t, 3>> triangles;
    bool has_uvs = false;

    bool empty() const { return triangles.empty(); }
    double triangle_area(size_t t) const;
    void validate() const;
};

/// Wavefront OBJ (v/vt/vn/f). Polygons are fan-triangulated, zero-area
/// triangles dropped, and missing normals replaced by area-weighted vertex
/// normals.
TriangleMesh load_obj(const std::filesystem::path& path);
TriangleMesh parse_obj(const std::string& text);
std::string to_obj_text(const TriangleMesh& mesh);
void save_obj(const std::filesystem::path& path, const TriangleMesh& mesh);

/// Latitude/longitude sphere with a single equirectangular UV chart
/// (u = azimuth / 2pi, v = polar angle / pi from +Y).
TriangleMesh make_uv_sphere(double radius, int segments, int rings);

struct Aabb {
    Vec3 lo{1e300, 1e300, 1e300};
    Vec3 hi{-1e300, -1e300, -1e300};
    void grow(const Vec3& p);
    void grow(const Aabb& b);
    Vec3 center() const { return (lo + hi) * 0.5; }
    bool valid() const { return lo.x <= hi.x; }
};

struct Ray {
    Vec3 origin;
    Vec3 direction;  // unit
};

struct Hit {
    double t = 0;
    std::uint32_t triangle = 0;
    double b1 = 0, b2 = 0;  // barycentrics of vertices 1 and 2
};

/// Median-split bounding volume hierarchy over a mesh's triangles.
class Bvh {
public:
    Bvh() = default;
    explicit Bvh(const TriangleMesh& mesh);

    std::optional<Hit> intersect(const TriangleMesh& mesh, const Ray& ray) const;
    const Aabb& bounds() const;

private:
    struct Node {
        Aabb box;
        std::uint32_t first = 0;  // child index (inner) or first primitive (leaf)
        std::uint32_t count = 0;  // 0 for inner nodes
    };
    void build(const TriangleMesh& mesh, std::uint32_t node, std::uint32_t begin, std::uint32_t end,
               const std::vector<Aabb>& boxes, const std::vector<Vec3>& centroids);

    std::vector<Node> nodes_;
    std::vector<std::uint32_t> order_;
};

struct Camera {
    Vec3 position{0, 0, 3};
    Vec3 look_at{0, 0, 0};
    Vec3 up{0, 1, 0};
    double fov_deg = 40;
    int width = 256;
    int height = 256;

    void validate() const;
    Ray primary_ray(int x, int y) const;

    /// Camera on a sphere of `distance` around `target`: yaw about +Y from +Z,
    /// pitch towards +Y.
    static Camera orbit(const Vec3& target, double distance, double yaw_deg, double pitch_deg, double fov_deg,
                        int width, int height);
};

}  // namespace matedit

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

#include "core/metrics.hpp"

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <boost/geometry.hpp>
#include <boost/geometry/index/rtree.hpp>
#include <limits>
#include <random>
#include <sstream>

#include "core/parallel.hpp"

namespace matedit {

namespace bg = boost::geometry;
namespace bgi = boost::geometry::index;

namespace {

using BPoint = bg::model::point<double, 3, bg::cs::cartesian>;
using Tree = bgi::rtree<BPoint, bgi::quadratic<16>>;

BPoint to_b(const Vec3& v) { return BPoint(v.x, v.y, v.z); }

double squared(const Vec3& a, const BPoint& b) {
    const double dx = a.x - bg::get<0>(b), dy = a.y - bg::get<1>(b), dz = a.z - bg::get<2>(b);
    return dx * dx + dy * dy + dz * dz;
}

void require_points(const PointCloud& c, const char* what) {
    if (c.empty()) fail(ErrorCode::EmptyInput, std::string(what) + " point cloud is empty");
}

double mean(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

}  // namespace

std::vector<double> nearest_squared_distances(const PointCloud& query, const PointCloud& reference) {
    require_points(query, "query");
    require_points(reference, "reference");
    std::vector<BPoint> pts;
    pts.reserve(reference.size());
    for (const auto& p : reference.points) pts.push_back(to_b(p));
    const Tree tree(pts.begin(), pts.end());
    std::vector<double> out(query.size());
    const int chunk = 2048;
    parallel_tasks(static_cast<int>((query.size() + chunk - 1) / chunk), [&](int k) {
        const size_t end = std::min(query.size(), static_cast<size_t>(k + 1) * chunk);
        std::vector<BPoint> hit;
        for (size_t i = static_cast<size_t>(k) * chunk; i < end; ++i) {
            hit.clear();
            tree.query(bgi::nearest(to_b(query.points[i]), 1), std::back_inserter(hit));
            out[i] = squared(query.points[i], hit.front());
        }
    });
    return out;
}

double chamfer_full(const PointCloud& a, const PointCloud& b) {
    return mean(nearest_squared_distances(a, b)) + mean(nearest_squared_distances(b, a));
}

double chamfer_partial(const PointCloud& gt, const PointCloud& pred) {
    return mean(nearest_squared_distances(gt, pred));
}

PointCloud sample_mesh_surface(const TriangleMesh& mesh, size_t n, std::uint64_t seed) {
    require(n >= 1, "sample count must be >= 1");
    if (mesh.triangles.empty()) fail(ErrorCode::EmptyScene, "cannot sample a mesh without triangles");
    std::vector<double> areas;
    areas.reserve(mesh.triangles.size());
    for (const auto& t : mesh.triangles)
        areas.push_back(0.5 * norm(cross(mesh.positions[t[1]] - mesh.positions[t[0]],
                                         mesh.positions[t[2]] - mesh.positions[t[0]])));
    // Cumulative areas, searched with an explicit uniform draw so the result
    // does not depend on the standard library's distribution algorithms.
    std::vector<double> cdf(areas.size());
    double total = 0;
    for (size_t i = 0; i < areas.size(); ++i) cdf[i] = total += areas[i];
    if (!(total > 0)) fail(ErrorCode::EmptyScene, "mesh has zero surface area");
    std::mt19937_64 rng(seed);
    auto uniform = [&] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
    PointCloud out;
    out.points.reserve(n);
    for (size_t k = 0; k < n; ++k) {
        const double r = uniform() * total;
        const size_t i = std::min(areas.size() - 1,
                                  static_cast<size_t>(std::upper_bound(cdf.begin(), cdf.end(), r) - cdf.begin()));
        const auto& t = mesh.triangles[i];
        const double s = std::sqrt(uniform()), u = uniform();
        const Vec3 a = mesh.positions[t[0]], b = mesh.positions[t[1]], c = mesh.positions[t[2]];
        out.points.push_back(a * (1 - s) + b * (s * (1 - u)) + c * (s * u));
    }
    return out;
}

double psnr(const Image& a, const Image& b) {
    if (!a.same_shape(b) || a.channels() != b.channels())
        fail(ErrorCode::ResolutionMismatch, "psnr inputs differ in resolution");
    require(!a.empty(), "psnr of empty images");
    double se = 0;
    for (size_t i = 0; i < a.values().size(); ++i) se += (a[i] - b[i]) * (a[i] - b[i]);
    if (se == 0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(static_cast<double>(a.values().size()) / se);
}

Vec3 Similarity::apply(const Vec3& p) const {
    const auto& m = matrix;
    return {m[0] * p.x + m[1] * p.y + m[2] * p.z + m[3], m[4] * p.x + m[5] * p.y + m[6] * p.z + m[7],
            m[8] * p.x + m[9] * p.y + m[10] * p.z + m[11]};
}

PointCloud transformed(const PointCloud& cloud, const Similarity& t) {
    PointCloud out;
    out.points.reserve(cloud.size());
    for (const auto& p : cloud.points) out.points.push_back(t.apply(p));
    return out;
}

IcpResult icp_align(const PointCloud& source, const PointCloud& target, int max_iterations, double tolerance) {
    require_points(source, "source");
    require_points(target, "target");
    std::vector<BPoint> pts;
    for (const auto& p : target.points) pts.push_back(to_b(p));
    const Tree tree(pts.begin(), pts.end());

    IcpResult res;
    Eigen::Matrix4d total = Eigen::Matrix4d::Identity();
    PointCloud cur = source;
    double prev = std::numeric_limits<double>::infinity();
    Eigen::Matrix3Xd src(3, source.size()), dst(3, source.size());
    std::vector<BPoint> hit;
    for (int it = 0; it < max_iterations; ++it) {
        double se = 0;
        for (size_t i = 0; i < cur.size(); ++i) {
            hit.clear();
            tree.query(bgi::nearest(to_b(cur.points[i]), 1), std::back_inserter(hit));
            se += squared(cur.points[i], hit.front());
            src.col(i) << cur.points[i].x, cur.points[i].y, cur.points[i].z;
            dst.col(i) << bg::get<0>(hit.front()), bg::get<1>(hit.front()), bg::get<2>(hit.front());
        }
        res.rms = std::sqrt(se / cur.size());
        if (res.rms <= tolerance || prev - res.rms < tolerance) break;
        prev = res.rms;
        const Eigen::Matrix4d step = Eigen::umeyama(src, dst, true);
        total = step * total;
        for (size_t i = 0; i < cur.size(); ++i) {
            const Eigen::Vector4d q = step * Eigen::Vector4d(src(0, i), src(1, i), src(2, i), 1.0);
            cur.points[i] = {q.x(), q.y(), q.z()};
        }
        res.iterations = it + 1;
    }
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) res.transform.matrix[r * 4 + c] = total(r, c);
    return res;
}

PointCloud load_point_cloud(const std::filesystem::path& path, size_t samples, std::uint64_t seed) {
    const auto ext = path.extension().string();
    if (ext == ".obj") {
        const TriangleMesh mesh = load_obj(path);
        if (!mesh.triangles.empty()) return sample_mesh_surface(mesh, samples, seed);
        PointCloud c{mesh.positions};
        require_points(c, path.string().c_str());
        return c;
    }
    if (ext == ".xyz" || ext == ".txt") {
        std::istringstream in(read_file(path));
        PointCloud c;
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty() || line[0] == '#') continue;
            std::istringstream ls(line);
            Vec3 p;
            if (!(ls >> p.x >> p.y >> p.z)) fail(ErrorCode::InvalidArgument, "bad point line in " + path.string());
            c.points.push_back(p);
        }
        require_points(c, path.string().c_str());
        return c;
    }
    fail(ErrorCode::InvalidArgument, "unsupported point cloud format '" + ext + "'");
}

}  // namespace matedit

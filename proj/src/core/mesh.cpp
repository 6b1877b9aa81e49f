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

#include "core/mesh.hpp"

#include <iomanip>
#include <map>
#include <sstream>
#include <tuple>

#include "core/image.hpp"

namespace matedit {

double TriangleMesh::triangle_area(size_t t) const {
    const auto& tri = triangles[t];
    return 0.5 * norm(cross(positions[tri[1]] - positions[tri[0]], positions[tri[2]] - positions[tri[0]]));
}

void TriangleMesh::validate() const {
    require(normals.size() == positions.size() && uvs.size() == positions.size(),
            "mesh attribute arrays must have one entry per vertex");
    for (const auto& tri : triangles)
        for (auto i : tri) require(i < positions.size(), "triangle index out of range");
    for (const auto& n : normals) require(is_unit(n, 1e-6), "mesh normals must be unit length");
}

namespace {

int resolve_index(const std::string& token, size_t count, int line_no) {
    int idx = 0;
    try {
        idx = std::stoi(token);
    } catch (const std::logic_error&) {
        fail(ErrorCode::Io, "obj line " + std::to_string(line_no) + ": bad index '" + token + "'");
    }
    const long resolved = idx < 0 ? static_cast<long>(count) + idx : static_cast<long>(idx) - 1;
    if (idx == 0 || resolved < 0 || resolved >= static_cast<long>(count))
        fail(ErrorCode::Io, "obj line " + std::to_string(line_no) + ": index out of range");
    return static_cast<int>(resolved);
}

}  // namespace

TriangleMesh parse_obj(const std::string& text) {
    std::vector<Vec3> pos, nrm;
    std::vector<Vec2> tex;
    using Corner = std::tuple<int, int, int>;  // position, uv, normal (-1 if absent)
    std::vector<std::array<Corner, 3>> faces;

    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag) || tag[0] == '#') continue;
        if (tag == "v") {
            Vec3 p;
            if (!(ls >> p.x >> p.y >> p.z)) fail(ErrorCode::Io, "obj line " + std::to_string(line_no) + ": bad vertex");
            pos.push_back(p);
        } else if (tag == "vt") {
            Vec2 t;
            if (!(ls >> t.x >> t.y)) fail(ErrorCode::Io, "obj line " + std::to_string(line_no) + ": bad uv");
            tex.push_back(t);
        } else if (tag == "vn") {
            Vec3 n;
            if (!(ls >> n.x >> n.y >> n.z)) fail(ErrorCode::Io, "obj line " + std::to_string(line_no) + ": bad normal");
            nrm.push_back(n);
        } else if (tag == "f") {
            std::vector<Corner> poly;
            std::string item;
            while (ls >> item) {
                std::string parts[3];
                int k = 0;
                for (char ch : item) {
                    if (ch == '/') {
                        if (++k > 2) fail(ErrorCode::Io, "obj line " + std::to_string(line_no) + ": bad face corner");
                    } else {
                        parts[k] += ch;
                    }
                }
                const int vi = resolve_index(parts[0], pos.size(), line_no);
                const int ti = parts[1].empty() ? -1 : resolve_index(parts[1], tex.size(), line_no);
                const int ni = parts[2].empty() ? -1 : resolve_index(parts[2], nrm.size(), line_no);
                poly.emplace_back(vi, ti, ni);
            }
            if (poly.size() < 3) fail(ErrorCode::Io, "obj line " + std::to_string(line_no) + ": face needs 3 corners");
            for (size_t i = 1; i + 1 < poly.size(); ++i) faces.push_back({poly[0], poly[i], poly[i + 1]});
        }
    }

    // Drop zero-area faces before any normal accumulation.
    double extent = 0;
    for (const auto& p : pos) extent = std::max(extent, max_component({std::abs(p.x), std::abs(p.y), std::abs(p.z)}));
    const double min_area = 1e-14 * std::max(extent * extent, 1e-30);
    std::vector<std::array<Corner, 3>> kept;
    for (const auto& f : faces) {
        const Vec3& a = pos[std::get<0>(f[0])];
        const Vec3& b = pos[std::get<0>(f[1])];
        const Vec3& c = pos[std::get<0>(f[2])];
        if (0.5 * norm(cross(b - a, c - a)) > min_area) kept.push_back(f);
    }

    std::vector<Vec3> smooth(pos.size());
    for (const auto& f : kept) {
        const Vec3& a = pos[std::get<0>(f[0])];
        const Vec3 n = cross(pos[std::get<0>(f[1])] - a, pos[std::get<0>(f[2])] - a);  // area weighted
        for (const auto& c : f) smooth[std::get<0>(c)] += n;
    }

    TriangleMesh mesh;
    mesh.has_uvs = !tex.empty();
    std::map<Corner, std::uint32_t> unique;
    for (const auto& f : kept) {
        std::array<std::uint32_t, 3> tri;
        for (int k = 0; k < 3; ++k) {
            auto [it, inserted] = unique.try_emplace(f[k], static_cast<std::uint32_t>(mesh.positions.size()));
            if (inserted) {
                const auto [vi, ti, ni] = f[k];
                mesh.positions.push_back(pos[vi]);
                Vec3 n = ni >= 0 ? nrm[ni] : smooth[vi];
                const double len = norm(n);
                mesh.normals.push_back(len > 0 ? n / len : Vec3{0, 1, 0});
                mesh.uvs.push_back(ti >= 0 ? tex[ti] : Vec2{0, 0});
            }
            tri[k] = it->second;
        }
        mesh.triangles.push_back(tri);
    }
    mesh.validate();
    return mesh;
}

TriangleMesh load_obj(const std::filesystem::path& path) { return parse_obj(read_file(path)); }

std::string to_obj_text(const TriangleMesh& mesh) {
    std::ostringstream out;
    out << std::setprecision(17);
    for (const auto& p : mesh.positions) out << "v " << p.x << ' ' << p.y << ' ' << p.z << '\n';
    for (const auto& t : mesh.uvs) out << "vt " << t.x << ' ' << t.y << '\n';
    for (const auto& n : mesh.normals) out << "vn " << n.x << ' ' << n.y << ' ' << n.z << '\n';
    for (const auto& tri : mesh.triangles) {
        out << 'f';
        for (auto i : tri) out << ' ' << i + 1 << '/' << i + 1 << '/' << i + 1;
        out << '\n';
    }
    return out.str();
}

void save_obj(const std::filesystem::path& path, const TriangleMesh& mesh) { write_file(path, to_obj_text(mesh)); }

TriangleMesh make_uv_sphere(double radius, int segments, int rings) {
    require(radius > 0 && segments >= 3 && rings >= 2, "make_uv_sphere: bad parameters");
    TriangleMesh mesh;
    mesh.has_uvs = true;
    for (int i = 0; i <= rings; ++i) {
        const double theta = kPi * i / rings;
        for (int j = 0; j <= segments; ++j) {
            const double phi = 2.0 * kPi * j / segments;
            const Vec3 n{std::sin(theta) * std::cos(phi), std::cos(theta), std::sin(theta) * std::sin(phi)};
            mesh.positions.push_back(n * radius);
            mesh.normals.push_back(normalize(n));
            mesh.uvs.push_back({static_cast<double>(j) / segments, static_cast<double>(i) / rings});
        }
    }
    const auto id = [&](int i, int j) { return static_cast<std::uint32_t>(i * (segments + 1) + j); };
    for (int i = 0; i < rings; ++i)
        for (int j = 0; j < segments; ++j) {
            if (i != 0) mesh.triangles.push_back({id(i, j), id(i, j + 1), id(i + 1, j)});
            if (i != rings - 1) mesh.triangles.push_back({id(i, j + 1), id(i + 1, j + 1), id(i + 1, j)});
        }
    mesh.validate();
    return mesh;
}

// ---------------------------------------------------------------------------

void Aabb::grow(const Vec3& p) {
    lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
    hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
}

void Aabb::grow(const Aabb& b) {
    grow(b.lo);
    grow(b.hi);
}

namespace {

bool hit_box(const Aabb& b, const Ray& r, const Vec3& inv, double t_max) {
    double t0 = 0, t1 = t_max;
    for (int a = 0; a < 3; ++a) {
        double tn = (b.lo[a] - r.origin[a]) * inv[a];
        double tf = (b.hi[a] - r.origin[a]) * inv[a];
        if (tn > tf) std::swap(tn, tf);
        t0 = std::max(t0, tn);
        t1 = std::min(t1, tf);
        if (t0 > t1) return false;
    }
    return true;
}

// Moller-Trumbore, two-sided.
bool hit_triangle(const Vec3& p0, const Vec3& p1, const Vec3& p2, const Ray& r, double& t, double& b1, double& b2) {
    const Vec3 e1 = p1 - p0;
    const Vec3 e2 = p2 - p0;
    const Vec3 pv = cross(r.direction, e2);
    const double det = dot(e1, pv);
    if (std::abs(det) < 1e-300) return false;
    const double inv = 1.0 / det;
    const Vec3 tv = r.origin - p0;
    b1 = dot(tv, pv) * inv;
    if (b1 < 0.0 || b1 > 1.0) return false;
    const Vec3 qv = cross(tv, e1);
    b2 = dot(r.direction, qv) * inv;
    if (b2 < 0.0 || b1 + b2 > 1.0) return false;
    t = dot(e2, qv) * inv;
    return t > 1e-9;
}

}  // namespace

Bvh::Bvh(const TriangleMesh& mesh) {
    if (mesh.empty()) fail(ErrorCode::EmptyScene, "cannot build a BVH over an empty mesh");
    const auto n = static_cast<std::uint32_t>(mesh.triangles.size());
    std::vector<Aabb> boxes(n);
    std::vector<Vec3> centroids(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        for (auto v : mesh.triangles[i]) boxes[i].grow(mesh.positions[v]);
        centroids[i] = boxes[i].center();
    }
    order_.resize(n);
    for (std::uint32_t i = 0; i < n; ++i) order_[i] = i;
    nodes_.reserve(2 * n);
    nodes_.push_back({});
    build(mesh, 0, 0, n, boxes, centroids);
}

void Bvh::build(const TriangleMesh& mesh, std::uint32_t node, std::uint32_t begin, std::uint32_t end,
                const std::vector<Aabb>& boxes, const std::vector<Vec3>& centroids) {
    Aabb box, cbox;
    for (auto i = begin; i < end; ++i) {
        box.grow(boxes[order_[i]]);
        cbox.grow(centroids[order_[i]]);
    }
    nodes_[node].box = box;
    const auto count = end - begin;
    if (count <= 4) {
        nodes_[node].first = begin;
        nodes_[node].count = count;
        return;
    }
    const Vec3 ext = cbox.hi - cbox.lo;
    const int axis = ext.x >= ext.y && ext.x >= ext.z ? 0 : (ext.y >= ext.z ? 1 : 2);
    const auto mid = begin + count / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) {
                         if (centroids[a][axis] != centroids[b][axis]) return centroids[a][axis] < centroids[b][axis];
                         return a < b;
                     });
    const auto left = static_cast<std::uint32_t>(nodes_.size());
    nodes_.push_back({});
    nodes_.push_back({});
    nodes_[node].first = left;
    nodes_[node].count = 0;
    build(mesh, left, begin, mid, boxes, centroids);
    build(mesh, left + 1, mid, end, boxes, centroids);
}

const Aabb& Bvh::bounds() const {
    static const Aabb empty;
    return nodes_.empty() ? empty : nodes_.front().box;
}

std::optional<Hit> Bvh::intersect(const TriangleMesh& mesh, const Ray& ray) const {
    if (nodes_.empty()) return std::nullopt;
    const Vec3 inv{1.0 / ray.direction.x, 1.0 / ray.direction.y, 1.0 / ray.direction.z};
    std::optional<Hit> best;
    double t_max = 1e300;
    std::uint32_t stack[128];
    int top = 0;
    stack[top++] = 0;
    while (top > 0) {
        const Node& n = nodes_[stack[--top]];
        if (!hit_box(n.box, ray, inv, t_max)) continue;
        if (n.count > 0) {
            for (auto i = n.first; i < n.first + n.count; ++i) {
                const auto tri_index = order_[i];
                const auto& tri = mesh.triangles[tri_index];
                double t, b1, b2;
                if (hit_triangle(mesh.positions[tri[0]], mesh.positions[tri[1]], mesh.positions[tri[2]], ray, t, b1,
                                 b2) &&
                    (t < t_max || (t == t_max && best && tri_index < best->triangle))) {
                    t_max = t;
                    best = Hit{t, tri_index, b1, b2};
                }
            }
        } else {
            stack[top++] = n.first;
            stack[top++] = n.first + 1;
        }
    }
    return best;
}

// ---------------------------------------------------------------------------

void Camera::validate() const {
    require(fov_deg > 0 && fov_deg < 180, "camera fov must lie in (0, 180) degrees");
    require(width >= 1 && height >= 1, "camera resolution must be at least 1x1");
    require(norm(look_at - position) > 0, "camera position and look-at coincide");
    require(norm(cross(look_at - position, up)) > 0, "camera up is parallel to the view direction");
}

Ray Camera::primary_ray(int x, int y) const {
    const Vec3 f = normalize(look_at - position);
    const Vec3 r = normalize(cross(f, up));
    const Vec3 u = cross(r, f);
    const double tan_half = std::tan(0.5 * fov_deg * kPi / 180.0);
    const double aspect = static_cast<double>(width) / height;
    const double px = (2.0 * (x + 0.5) / width - 1.0) * tan_half * aspect;
    const double py = (1.0 - 2.0 * (y + 0.5) / height) * tan_half;
    return {position, normalize(f + px * r + py * u)};
}

Camera Camera::orbit(const Vec3& target, double distance, double yaw_deg, double pitch_deg, double fov_deg,
                     int width, int height) {
    const double yaw = yaw_deg * kPi / 180.0;
    const double pitch = pitch_deg * kPi / 180.0;
    Camera c;
    c.look_at = target;
    c.position = target + distance * Vec3{std::cos(pitch) * std::sin(yaw), std::sin(pitch),
                                          std::cos(pitch) * std::cos(yaw)};
    c.up = {0, 1, 0};
    c.fov_deg = fov_deg;
    c.width = width;
    c.height = height;
    c.validate();
    return c;
}

}  // namespace matedit

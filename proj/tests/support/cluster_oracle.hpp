// Brute-force reference for segment clustering: enumerates every
// join-or-found decision sequence and keeps the branches that obey the
// greedy merge rule at each step. Group features are recomputed from the
// member list every time instead of being maintained incrementally.

#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "core/semantics.hpp"

namespace matedit::oracle {

struct ClusterResult {
    LabelImage labels;
    int label_count = 0;
};

inline double cosine(const Feature& a, const Feature& b) {
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

inline ClusterResult cluster_oracle(const SegmentSet& set, double tau) {
    const size_t n = set.segments.size();
    std::vector<size_t> order;
    std::vector<bool> taken(n, false);
    for (size_t step = 0; step < n; ++step) {
        size_t pick = n;
        for (size_t i = 0; i < n; ++i)
            if (!taken[i] && (pick == n || set.segments[i].area < set.segments[pick].area)) pick = i;
        taken[pick] = true;
        order.push_back(pick);
    }

    auto group_feature = [&](const std::vector<size_t>& members) {
        Feature f(set.segments[members[0]].feature.size(), 0.0);
        double area = 0;
        for (size_t m : members) {
            area += static_cast<double>(set.segments[m].area);
            for (size_t k = 0; k < f.size(); ++k)
                f[k] += set.segments[m].feature[k] * static_cast<double>(set.segments[m].area);
        }
        for (double& v : f) v /= area;
        return f;
    };

    std::vector<std::vector<std::vector<size_t>>> survivors;
    std::function<void(size_t, std::vector<std::vector<size_t>>&)> explore =
        [&](size_t step, std::vector<std::vector<size_t>>& groups) {
            if (step == n) {
                survivors.push_back(groups);
                return;
            }
            const size_t seg = order[step];
            double best_sim = -2;
            size_t best = 0;
            for (size_t g = 0; g < groups.size(); ++g) {
                const double s = cosine(set.segments[seg].feature, group_feature(groups[g]));
                if (s > best_sim) {
                    best_sim = s;
                    best = g;
                }
            }
            for (size_t choice = 0; choice <= groups.size(); ++choice) {
                const bool found = choice == groups.size();
                const bool allowed = found ? (groups.empty() || !(best_sim > tau)) : (choice == best && best_sim > tau);
                if (!allowed) continue;
                if (found) groups.push_back({seg});
                else groups[choice].push_back(seg);
                explore(step + 1, groups);
                if (found) groups.pop_back();
                else groups[choice].pop_back();
            }
        };
    std::vector<std::vector<size_t>> groups;
    explore(0, groups);

    ClusterResult r;
    r.labels = LabelImage(set.width, set.height);
    for (auto& v : r.labels.values()) v = kUnlabeled;
    if (survivors.size() != 1) return r;  // label_count 0 flags an oracle failure
    r.label_count = static_cast<int>(survivors[0].size());
    for (size_t g = 0; g < survivors[0].size(); ++g)
        for (size_t m : survivors[0][g])
            for (size_t p = 0; p < set.segments[m].mask.pixel_count(); ++p)
                if (set.segments[m].mask[p]) r.labels[p] = static_cast<std::uint16_t>(g);
    return r;
}

/// Voronoi partition of a w x h frame into `count` regions (some pixels left
/// uncovered) with features drawn around three random cluster centers.
inline SegmentSet random_segment_set(std::mt19937_64& rng, int count, int w, int h) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Feature> centers(3, Feature(6));
    for (auto& c : centers)
        for (double& v : c) v = u(rng);
    std::vector<std::pair<double, double>> seeds;
    for (int i = 0; i < count; ++i) seeds.emplace_back(u(rng) * w, u(rng) * h);
    SegmentSet set;
    set.width = w;
    set.height = h;
    std::vector<Mask> masks(count, Mask(w, h));
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (u(rng) < 0.1) continue;
            int best = 0;
            double bd = 1e300;
            for (int i = 0; i < count; ++i) {
                const double d = std::pow(x + 0.5 - seeds[i].first, 2) + std::pow(y + 0.5 - seeds[i].second, 2);
                if (d < bd) {
                    bd = d;
                    best = i;
                }
            }
            masks[best].at(x, y) = 1;
        }
    for (int i = 0; i < count; ++i) {
        Segment s;
        s.mask = masks[i];
        s.area = popcount(s.mask);
        if (s.area == 0) continue;
        const Feature& c = centers[rng() % 3];
        for (double v : c) s.feature.push_back(std::max(0.0, v + 0.15 * (u(rng) - 0.5)));
        set.segments.push_back(std::move(s));
    }
    if (set.segments.empty()) return random_segment_set(rng, count, w, h);
    return set;
}

}  // namespace matedit::oracle

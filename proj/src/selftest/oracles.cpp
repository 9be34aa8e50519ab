#include "obsr/selftest/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numbers>
#include <set>
#include <stdexcept>

namespace obsr::oracle {

std::vector<CellId> geometric_neighbors(CellId c) {
    const GeoPoint center = centroid(c);
    const std::vector<GeoPoint> verts = boundary(c);
    std::set<CellId> found;
    for (std::size_t i = 0; i < verts.size(); ++i) {
        const GeoPoint& a = verts[i];
        const GeoPoint& b = verts[(i + 1) % verts.size()];
        const double mid_lat = 0.5 * (a.lat() + b.lat());
        const double mid_lon = 0.5 * (a.lon() + b.lon());
        // push the midpoint outward by half the center-to-edge distance
        const GeoPoint probe(center.lat() + 1.5 * (mid_lat - center.lat()),
                             center.lon() + 1.5 * (mid_lon - center.lon()));
        const CellId n = cell_of(probe, c.resolution());
        if (n != c) found.insert(n);
    }
    return {found.begin(), found.end()};
}

std::unordered_map<CellId, int> bfs_distances(CellId origin, int depth) {
    std::unordered_map<CellId, int> dist{{origin, 0}};
    std::deque<CellId> queue{origin};
    while (!queue.empty()) {
        const CellId cur = queue.front();
        queue.pop_front();
        const int d = dist.at(cur);
        if (d == depth) continue;
        for (CellId n : geometric_neighbors(cur)) {
            if (dist.emplace(n, d + 1).second) queue.push_back(n);
        }
    }
    return dist;
}

GeoPoint random_point(const GeoPoint& center, double half_extent_deg, CounterRng& rng) {
    return GeoPoint(center.lat() + rng.uniform(-half_extent_deg, half_extent_deg),
                    center.lon() + rng.uniform(-half_extent_deg, half_extent_deg));
}

double cosine_law_distance_m(const GeoPoint& a, const GeoPoint& b) {
    constexpr double kRadius = 6371008.8;
    const double to_rad = std::numbers::pi / 180.0;
    const double p1 = a.lat() * to_rad;
    const double p2 = b.lat() * to_rad;
    const double dl = (b.lon() - a.lon()) * to_rad;
    const double c = std::sin(p1) * std::sin(p2) + std::cos(p1) * std::cos(p2) * std::cos(dl);
    return kRadius * std::acos(std::clamp(c, -1.0, 1.0));
}

namespace {

double best_path(const std::vector<std::vector<double>>& cost, std::size_t i, std::size_t j) {
    // cheapest monotone path from (0,0) ending at (i,j), enumerated without memoization
    const double here = cost[i][j];
    if (i == 0 && j == 0) return here;
    double best = std::numeric_limits<double>::infinity();
    if (i > 0) best = std::min(best, best_path(cost, i - 1, j));
    if (j > 0) best = std::min(best, best_path(cost, i, j - 1));
    if (i > 0 && j > 0) best = std::min(best, best_path(cost, i - 1, j - 1));
    return here + best;
}

}  // namespace

double recursive_dtw(const std::vector<std::vector<double>>& cost) {
    if (cost.empty() || cost.front().empty()) throw std::invalid_argument("empty cost matrix");
    return best_path(cost, cost.size() - 1, cost.front().size() - 1);
}

std::vector<double> least_squares(const std::vector<std::vector<double>>& x, std::span<const double> y) {
    const std::size_t n = x.size();
    const std::size_t p = x.front().size() + 1;
    std::vector<std::vector<double>> a(p, std::vector<double>(p + 1, 0.0));
    for (std::size_t r = 0; r < n; ++r) {
        std::vector<double> row(x[r]);
        row.push_back(1.0);
        for (std::size_t i = 0; i < p; ++i) {
            for (std::size_t j = 0; j < p; ++j) a[i][j] += row[i] * row[j];
            a[i][p] += row[i] * y[r];
        }
    }
    for (std::size_t col = 0; col < p; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < p; ++r) {
            if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
        }
        std::swap(a[col], a[piv]);
        if (std::abs(a[col][col]) < 1e-300) throw std::runtime_error("singular normal equations");
        for (std::size_t r = 0; r < p; ++r) {
            if (r == col) continue;
            const double f = a[r][col] / a[col][col];
            for (std::size_t k = col; k <= p; ++k) a[r][k] -= f * a[col][k];
        }
    }
    std::vector<double> beta(p);
    for (std::size_t i = 0; i < p; ++i) beta[i] = a[i][p] / a[i][i];
    return beta;
}

double histogram_w1(std::span<const double> a, std::span<const double> b, int bins) {
    const auto [amin, amax] = std::minmax_element(a.begin(), a.end());
    const auto [bmin, bmax] = std::minmax_element(b.begin(), b.end());
    const double lo = std::min(*amin, *bmin);
    const double hi = std::max(*amax, *bmax);
    if (hi <= lo) return 0.0;
    auto hist = [&](std::span<const double> v) {
        std::vector<double> h(static_cast<std::size_t>(bins), 0.0);
        for (double x : v) {
            auto i = static_cast<std::size_t>((x - lo) / (hi - lo) * bins);
            h[std::min(i, h.size() - 1)] += 1.0 / static_cast<double>(v.size());
        }
        return h;
    };
    const auto ha = hist(a);
    const auto hb = hist(b);
    double ca = 0.0, cb = 0.0, w = 0.0;
    for (int i = 0; i < bins; ++i) {
        ca += ha[i];
        cb += hb[i];
        w += std::abs(ca - cb) / bins;
    }
    return w;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace obsr::oracle

#pragma once

// Brute-force reference computations used by the unit tests, the acceptance
// suite and `obsr selftest`. Nothing here shares code paths with the
// implementations it checks.

#include <map>
#include <span>
#include <unordered_map>
#include <vector>

#include "obsr/hexgrid.hpp"
#include "obsr/random.hpp"

namespace obsr::oracle {

/// Neighbors found geometrically: probe just outside every boundary edge
/// midpoint and index the probe point.
std::vector<CellId> geometric_neighbors(CellId c);

/// Breadth-first search over geometric_neighbors up to `depth` steps.
std::unordered_map<CellId, int> bfs_distances(CellId origin, int depth);

/// Uniform random point in a lat/lon box around `center`.
GeoPoint random_point(const GeoPoint& center, double half_extent_deg, CounterRng& rng);

/// Great-circle distance by the spherical law of cosines (not haversine).
double cosine_law_distance_m(const GeoPoint& a, const GeoPoint& b);

/// Exhaustive recursive DTW over an explicit cost matrix.
double recursive_dtw(const std::vector<std::vector<double>>& cost);

/// Ordinary least squares with intercept via normal equations (Gaussian
/// elimination with partial pivoting). Returns coefficients, intercept last.
std::vector<double> least_squares(const std::vector<std::vector<double>>& x, std::span<const double> y);

/// Wasserstein-1 distance between the normalized histograms of two samples
/// over their common range, as a fraction of that range.
double histogram_w1(std::span<const double> a, std::span<const double> b, int bins);

double median(std::vector<double> v);

}  // namespace obsr::oracle

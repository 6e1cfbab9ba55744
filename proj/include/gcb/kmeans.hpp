// Lloyd's k-means with k-means++ seeding and empty-cluster reseeding.

#pragma once

#include <cstdio>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "gcb/common.hpp"

namespace gcb {

template <class S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

template <class S>
struct KmeansResult {
    Matrix<S> centroids;           // K x d
    std::vector<int> assignments;  // N, centroid index per point
    double sse = 0.0;
    std::vector<double> sse_history;  // per-iteration SSE after assignment
    bool degenerate = false;          // identical points with K > 1
};

namespace detail {

template <class S>
int nearest_centroid(const Matrix<S>& centroids, const Eigen::Matrix<S, 1, Eigen::Dynamic>& p,
                     double* dist_out) {
    int best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (int c = 0; c < centroids.rows(); ++c) {
        const double d = (centroids.row(c) - p).squaredNorm();
        if (d < best_dist) {  // strict: ties keep the lowest index
            best_dist = d;
            best = c;
        }
    }
    if (dist_out) *dist_out = best_dist;
    return best;
}

// k-means++: first centroid uniform, the rest D^2-weighted.
template <class S>
Matrix<S> kmeanspp_seed(const Matrix<S>& points, int k, Rng& rng) {
    const int n = static_cast<int>(points.rows());
    Matrix<S> centroids(k, points.cols());
    centroids.row(0) = points.row(static_cast<int>(rng.index(n)));
    std::vector<double> dist2(n);
    for (int i = 0; i < n; ++i) {
        dist2[i] = (points.row(i) - centroids.row(0)).squaredNorm();
    }
    for (int c = 1; c < k; ++c) {
        double total = 0.0;
        for (double d : dist2) total += d;
        int pick;
        if (total <= 0.0) {
            pick = static_cast<int>(rng.index(n));  // all points already covered
        } else {
            double r = rng.uniform() * total;
            pick = n - 1;
            double acc = 0.0;
            for (int i = 0; i < n; ++i) {
                acc += dist2[i];
                if (r < acc) {
                    pick = i;
                    break;
                }
            }
        }
        centroids.row(c) = points.row(pick);
        for (int i = 0; i < n; ++i) {
            const double d = (points.row(i) - centroids.row(c)).squaredNorm();
            if (d < dist2[i]) dist2[i] = d;
        }
    }
    return centroids;
}

template <class S>
KmeansResult<S> lloyd(const Matrix<S>& points, int k, int max_iters, Rng& rng) {
    const int n = static_cast<int>(points.rows());
    KmeansResult<S> res;
    res.centroids = kmeanspp_seed(points, k, rng);
    res.assignments.assign(n, -1);

    double prev_sse = std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < max_iters; ++iter) {
        bool changed = false;
        double sse = 0.0;
        for (int i = 0; i < n; ++i) {
            double d;
            const int c = nearest_centroid(res.centroids, points.row(i), &d);
            if (c != res.assignments[i]) {
                changed = true;
                res.assignments[i] = c;
            }
            sse += d;
        }
        GCB_CHECK(sse <= prev_sse + 1e-9 * (1.0 + prev_sse), ErrorCode::InvariantViolated,
                  "k-means SSE increased across an iteration");
        prev_sse = sse;
        res.sse_history.push_back(sse);
        res.sse = sse;
        if (!changed && iter > 0) break;

        // Centroid update.
        Matrix<S> sums = Matrix<S>::Zero(k, points.cols());
        std::vector<int> counts(k, 0);
        for (int i = 0; i < n; ++i) {
            sums.row(res.assignments[i]) += points.row(i);
            ++counts[res.assignments[i]];
        }
        std::vector<int> empties;
        for (int c = 0; c < k; ++c) {
            if (counts[c] > 0) {
                res.centroids.row(c) = sums.row(c) / static_cast<S>(counts[c]);
            } else {
                empties.push_back(c);
            }
        }
        // Re-seed each empty cluster with the point farthest from its centroid.
        std::vector<bool> taken(n, false);
        for (int c : empties) {
            int far_idx = -1;
            double far_dist = -1.0;
            for (int i = 0; i < n; ++i) {
                if (taken[i]) continue;
                const double d = (points.row(i) - res.centroids.row(res.assignments[i])).squaredNorm();
                if (d > far_dist) {
                    far_dist = d;
                    far_idx = i;
                }
            }
            if (far_idx >= 0) {
                res.centroids.row(c) = points.row(far_idx);
                taken[far_idx] = true;
            }
        }
        if (!changed && empties.empty()) break;
    }
    return res;
}

}  // namespace detail

// restarts > 1 keeps the run with the lowest final SSE (earliest wins ties).
// All points identical with K > 1 is flagged degenerate and warned once;
// duplicate centroids are allowed in that case.
template <class S>
KmeansResult<S> kmeans(const Matrix<S>& points, int k, int max_iters, std::uint64_t seed,
                       int restarts = 1, bool quiet = false) {
    GCB_CHECK(points.rows() >= 1, ErrorCode::ConfigError, "k-means needs at least one point");
    GCB_CHECK(k >= 1, ErrorCode::ConfigError, "k-means needs K >= 1");
    GCB_CHECK(max_iters >= 1, ErrorCode::ConfigError, "k-means needs max_iters >= 1");
    GCB_CHECK(restarts >= 1, ErrorCode::ConfigError, "k-means needs restarts >= 1");

    const bool all_identical = [&] {
        for (int i = 1; i < points.rows(); ++i) {
            if (points.row(i) != points.row(0)) return false;
        }
        return true;
    }();

    Rng rng(seed);
    KmeansResult<S> best;
    bool have_best = false;
    for (int r = 0; r < restarts; ++r) {
        KmeansResult<S> run = detail::lloyd(points, k, max_iters, rng);
        if (!have_best || run.sse < best.sse) {
            best = std::move(run);
            have_best = true;
        }
    }
    if (all_identical && k > 1) {
        best.degenerate = true;
        if (!quiet) {
            std::fprintf(stderr,
                         "warning: k-means input is degenerate (all points identical, K=%d)\n",
                         k);
        }
    }
    return best;
}

}  // namespace gcb

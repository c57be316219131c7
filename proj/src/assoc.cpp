#include "hgt/assoc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace hgt {

double iou(const Box& a, const Box& b) {
    if (!a.valid() || !b.valid()) throw AssocError("iou on degenerate box");
    double ix = std::min(a.right(), b.right()) - std::max(a.left(), b.left());
    double iy = std::min(a.bottom(), b.bottom()) - std::max(a.top(), b.top());
    if (ix <= 0.0 || iy <= 0.0) return 0.0;
    double inter = ix * iy;
    double uni = a.w * a.h + b.w * b.h - inter;
    return inter / uni;
}

namespace {

constexpr double kInfeasible = 1e8;

}  // namespace

Assignment hungarian(const std::vector<std::vector<double>>& cost, double gate,
                     int ncols_hint) {
    int m = static_cast<int>(cost.size());
    int ncols = m > 0 ? static_cast<int>(cost[0].size()) : ncols_hint;
    for (const auto& row : cost)
        if (static_cast<int>(row.size()) != ncols) throw AssocError("ragged cost matrix");
    for (const auto& row : cost)
        for (double c : row)
            if (!std::isfinite(c)) throw AssocError("non-finite cost");

    Assignment out;
    if (m == 0 || ncols == 0) {
        for (int j = 0; j < ncols; ++j) out.unmatched_cols.push_back(j);
        for (int i = 0; i < m; ++i) out.unmatched_rows.push_back(i);
        return out;
    }

    // Square padded matrix; dummy entries share one constant so padding only
    // decides which rows/cols stay unmatched, never which feasible pair wins.
    int n = std::max(m, ncols);
    auto a = [&](int i, int j) -> double {
        if (i >= m || j >= ncols) return kInfeasible * 2.0;
        double c = cost[i][j];
        return c < gate ? c : kInfeasible;
    };

    // Shortest augmenting path assignment (rows 1..n, cols 1..n).
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, false);
        do {
            used[j0] = true;
            int i0 = p[j0], j1 = -1;
            double delta = inf;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }

    std::vector<int> row_of_col(ncols, -1);
    for (int j = 1; j <= n; ++j) {
        int i = p[j];
        if (i >= 1 && i <= m && j <= ncols && cost[i - 1][j - 1] < gate)
            row_of_col[j - 1] = i - 1;
    }
    std::vector<char> row_matched(m, false);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < ncols; ++j)
            if (row_of_col[j] == i) {
                out.matches.emplace_back(i, j);
                row_matched[i] = true;
            }
    std::sort(out.matches.begin(), out.matches.end());
    for (int i = 0; i < m; ++i)
        if (!row_matched[i]) out.unmatched_rows.push_back(i);
    for (int j = 0; j < ncols; ++j)
        if (row_of_col[j] < 0) out.unmatched_cols.push_back(j);
    return out;
}

CrossModalResult cross_modal_match(const std::vector<Detection>& thermal,
                                   const std::vector<Detection>& visible) {
    std::vector<std::vector<double>> cost(thermal.size(),
                                          std::vector<double>(visible.size(), 1.0));
    for (size_t i = 0; i < thermal.size(); ++i)
        for (size_t j = 0; j < visible.size(); ++j)
            cost[i][j] = 1.0 - iou(thermal[i].box, visible[j].box);

    CrossModalResult res;
    res.assignment = hungarian(cost, 1.0);
    res.thermal_labels.assign(thermal.size(), Visibility::TOnly);
    res.visible_labels.assign(visible.size(), Visibility::VOnly);
    for (auto [ti, vi] : res.assignment.matches) {
        res.thermal_labels[ti] = Visibility::Both;
        res.visible_labels[vi] = Visibility::Both;
    }
    return res;
}

Assignment associate(const std::vector<std::vector<double>>& affinity, double min_affinity,
                     int num_tracks_hint) {
    std::vector<std::vector<double>> cost(affinity.size());
    for (size_t i = 0; i < affinity.size(); ++i) {
        cost[i].resize(affinity[i].size());
        for (size_t j = 0; j < affinity[i].size(); ++j) cost[i][j] = 1.0 - affinity[i][j];
    }
    return hungarian(cost, 1.0 - min_affinity, num_tracks_hint);
}

}  // namespace hgt

#include "hgt/losses.hpp"

#include <algorithm>
#include <cmath>

namespace hgt {

namespace {

constexpr double kClamp = 1e-12;

double clamp01(double v) { return std::clamp(v, kClamp, 1.0 - kClamp); }

}  // namespace

double gaussian_radius(double w, double h, double min_overlap) {
    // Three shift cases from the CornerNet radius derivation.
    double a1 = 1.0;
    double b1 = h + w;
    double c1 = w * h * (1.0 - min_overlap) / (1.0 + min_overlap);
    double sq1 = std::sqrt(std::max(0.0, b1 * b1 - 4.0 * a1 * c1));
    double r1 = (b1 - sq1) / (2.0 * a1);

    double a2 = 4.0;
    double b2 = 2.0 * (h + w);
    double c2 = (1.0 - min_overlap) * w * h;
    double sq2 = std::sqrt(std::max(0.0, b2 * b2 - 4.0 * a2 * c2));
    double r2 = (b2 - sq2) / (2.0 * a2);

    double a3 = 4.0 * min_overlap;
    double b3 = -2.0 * min_overlap * (h + w);
    double c3 = (min_overlap - 1.0) * w * h;
    double sq3 = std::sqrt(std::max(0.0, b3 * b3 - 4.0 * a3 * c3));
    double r3 = (b3 + sq3) / (2.0 * a3);

    return std::max(1.0, std::min({r1, r2, r3}));
}

Tensor render_heatmap(const std::vector<GtTarget>& targets, int gh, int gw, int num_classes) {
    Tensor y = Tensor::zeros({gh, gw, num_classes});
    auto& d = y.data_mut();
    for (const auto& t : targets) {
        if (t.class_id < 0 || t.class_id >= num_classes)
            throw TensorError("render_heatmap class channel out of range");
        int cx = static_cast<int>(std::floor(t.center.x));
        int cy = static_cast<int>(std::floor(t.center.y));
        if (cx < 0 || cx >= gw || cy < 0 || cy >= gh)
            throw TensorError("render_heatmap center outside grid");
        double radius = gaussian_radius(t.w, t.h);
        double sigma = radius / 3.0;
        int r = static_cast<int>(std::ceil(radius));
        for (int yy = std::max(0, cy - r); yy <= std::min(gh - 1, cy + r); ++yy)
            for (int xx = std::max(0, cx - r); xx <= std::min(gw - 1, cx + r); ++xx) {
                double dx = xx - cx, dy = yy - cy;
                double v = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
                double& cell = d[(yy * gw + xx) * num_classes + t.class_id];
                cell = std::max(cell, v);
            }
        d[(cy * gw + cx) * num_classes + t.class_id] = 1.0;
    }
    return y;
}

Tensor focal_loss(const Tensor& c_hat, const Tensor& y, double alpha, double beta) {
    if (c_hat.shape() != y.shape()) throw TensorError("focal_loss shape mismatch");
    const auto& cd = c_hat.data();
    const auto& yd = y.data();
    int num_pos = 0;
    for (double v : yd)
        if (v == 1.0) ++num_pos;
    double norm = std::max(1, num_pos);

    double loss = 0.0;
    for (size_t i = 0; i < cd.size(); ++i) {
        double c = clamp01(cd[i]);
        if (yd[i] == 1.0) {
            loss -= std::pow(1.0 - c, alpha) * std::log(c);
        } else {
            loss -= std::pow(1.0 - yd[i], beta) * std::pow(c, alpha) * std::log(1.0 - c);
        }
    }
    loss /= norm;

    return custom_op(
        {1}, {loss}, {c_hat, y},
        [alpha, beta, norm](const std::vector<double>& g,
                            const std::vector<const std::vector<double>*>& in,
                            const std::vector<std::vector<double>*>& grads) {
            if (!grads[0]) return;
            const auto& cd = *in[0];
            const auto& yd = *in[1];
            auto& gc = *grads[0];
            for (size_t i = 0; i < cd.size(); ++i) {
                double c = clamp01(cd[i]);
                double dc;
                if (yd[i] == 1.0) {
                    dc = alpha * std::pow(1.0 - c, alpha - 1.0) * std::log(c) -
                         std::pow(1.0 - c, alpha) / c;
                } else {
                    double w = std::pow(1.0 - yd[i], beta);
                    dc = w * (-alpha * std::pow(c, alpha - 1.0) * std::log(1.0 - c) +
                              std::pow(c, alpha) / (1.0 - c));
                }
                gc[i] += g[0] * dc / norm;
            }
        });
}

Tensor sparse_l1(const Tensor& pred, const std::vector<SparseTarget>& targets) {
    if (pred.ndim() != 2) throw TensorError("sparse_l1 expects a 2-d prediction");
    int rows = pred.dim(0), cols = pred.dim(1);
    if (targets.empty()) return Tensor::scalar(0.0);
    for (const auto& t : targets) {
        if (t.row < 0 || t.row >= rows) throw TensorError("sparse_l1 target row out of grid");
        if (static_cast<int>(t.value.size()) != cols)
            throw TensorError("sparse_l1 target width mismatch");
    }
    double n = static_cast<double>(targets.size());
    const auto& pd = pred.data();
    double loss = 0.0;
    for (const auto& t : targets)
        for (int c = 0; c < cols; ++c) loss += std::abs(pd[t.row * cols + c] - t.value[c]);
    loss /= n;

    return custom_op(
        {1}, {loss}, {pred},
        [targets, cols, n](const std::vector<double>& g,
                           const std::vector<const std::vector<double>*>& in,
                           const std::vector<std::vector<double>*>& grads) {
            if (!grads[0]) return;
            const auto& pd = *in[0];
            auto& gp = *grads[0];
            for (const auto& t : targets)
                for (int c = 0; c < cols; ++c) {
                    double diff = pd[t.row * cols + c] - t.value[c];
                    double s = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
                    gp[t.row * cols + c] += g[0] * s / n;
                }
        });
}

Tensor matching_loss_bce(const Tensor& a) {
    if (a.ndim() != 2 || a.dim(0) != a.dim(1)) throw TensorError("matching loss needs square A");
    int n = a.dim(0);
    const auto& ad = a.data();
    double loss = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double v = clamp01(ad[i * n + j]);
            double tgt = i == j ? 1.0 : 0.0;
            loss -= tgt * std::log(v) + (1.0 - tgt) * std::log(1.0 - v);
        }
    loss /= static_cast<double>(n) * n;

    return custom_op(
        {1}, {loss}, {a},
        [n](const std::vector<double>& g, const std::vector<const std::vector<double>*>& in,
            const std::vector<std::vector<double>*>& grads) {
            if (!grads[0]) return;
            const auto& ad = *in[0];
            auto& ga = *grads[0];
            double norm = static_cast<double>(n) * n;
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) {
                    double v = clamp01(ad[i * n + j]);
                    double tgt = i == j ? 1.0 : 0.0;
                    ga[i * n + j] += g[0] * (-(tgt / v) + (1.0 - tgt) / (1.0 - v)) / norm;
                }
        });
}

namespace {

// Row softmax Q and column softmax P of a square matrix.
void softmaxes(const std::vector<double>& a, int n, std::vector<double>& row_sm,
               std::vector<double>& col_sm) {
    row_sm.assign(a.size(), 0.0);
    col_sm.assign(a.size(), 0.0);
    for (int i = 0; i < n; ++i) {
        double mx = a[i * n];
        for (int j = 1; j < n; ++j) mx = std::max(mx, a[i * n + j]);
        double s = 0.0;
        for (int j = 0; j < n; ++j) s += std::exp(a[i * n + j] - mx);
        for (int j = 0; j < n; ++j) row_sm[i * n + j] = std::exp(a[i * n + j] - mx) / s;
    }
    for (int j = 0; j < n; ++j) {
        double mx = a[j];
        for (int i = 1; i < n; ++i) mx = std::max(mx, a[i * n + j]);
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += std::exp(a[i * n + j] - mx);
        for (int i = 0; i < n; ++i) col_sm[i * n + j] = std::exp(a[i * n + j] - mx) / s;
    }
}

}  // namespace

Tensor matching_loss_ce(const Tensor& a, bool identity_target) {
    if (a.ndim() != 2 || a.dim(0) != a.dim(1)) throw TensorError("matching loss needs square A");
    int n = a.dim(0);
    const auto& ad = a.data();
    std::vector<double> q, p;  // row softmax, column softmax
    softmaxes(ad, n, q, p);

    double loss = 0.0;
    if (identity_target) {
        for (int i = 0; i < n; ++i) loss -= std::log(std::max(kClamp, q[i * n + i]));
        for (int j = 0; j < n; ++j) loss -= std::log(std::max(kClamp, p[j * n + j]));
    } else {
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                loss -= ad[i * n + j] * std::log(std::max(kClamp, p[i * n + j]));
                loss -= ad[i * n + j] * std::log(std::max(kClamp, q[i * n + j]));
            }
    }
    loss /= n;

    return custom_op(
        {1}, {loss}, {a},
        [n, identity_target](const std::vector<double>& g,
                             const std::vector<const std::vector<double>*>& in,
                             const std::vector<std::vector<double>*>& grads) {
            if (!grads[0]) return;
            const auto& ad = *in[0];
            auto& ga = *grads[0];
            std::vector<double> q, p;
            softmaxes(ad, n, q, p);
            if (identity_target) {
                for (int k = 0; k < n; ++k)
                    for (int l = 0; l < n; ++l) {
                        double d = (q[k * n + l] - (l == k ? 1.0 : 0.0)) +
                                   (p[k * n + l] - (k == l ? 1.0 : 0.0));
                        ga[k * n + l] += g[0] * d / n;
                    }
                return;
            }
            std::vector<double> colsum(n, 0.0), rowsum(n, 0.0);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) {
                    colsum[j] += ad[i * n + j];
                    rowsum[i] += ad[i * n + j];
                }
            for (int k = 0; k < n; ++k)
                for (int l = 0; l < n; ++l) {
                    double dcol = std::log(std::max(kClamp, p[k * n + l])) + ad[k * n + l] -
                                  p[k * n + l] * colsum[l];
                    double drow = std::log(std::max(kClamp, q[k * n + l])) + ad[k * n + l] -
                                  q[k * n + l] * rowsum[k];
                    ga[k * n + l] += -g[0] * (dcol + drow) / n;
                }
        });
}

Tensor matching_loss(const Tensor& a, bool identity_target) {
    return add(matching_loss_bce(a), matching_loss_ce(a, identity_target));
}

Tensor total_loss(const LossComponents& c, const LossWeights& w) {
    Tensor t = mul_scalar(c.cf, w.w_cf);
    t = add(t, mul_scalar(c.bs, w.w_bs));
    t = add(t, mul_scalar(c.r, w.w_r));
    t = add(t, mul_scalar(c.td, w.w_td));
    t = add(t, mul_scalar(c.match, w.w_match));
    return t;
}

}  // namespace hgt

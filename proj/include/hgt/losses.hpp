#pragma once

#include <vector>

#include "hgt/common.hpp"
#include "hgt/tensor.hpp"

namespace hgt {

/// Ground-truth target on the feature grid: fractional center, size, class.
struct GtTarget {
    Vec2 center;   // feature-grid units
    double w = 1.0;  // feature-grid units
    double h = 1.0;
    int class_id = 0;  // 0-based channel
};

/// CornerNet-style radius: largest Gaussian radius keeping IoU of a shifted
/// box above min_overlap. Floored at 1.
double gaussian_radius(double w, double h, double min_overlap = 0.7);

/// Renders the ground-truth heatmap (gh, gw, num_classes): exactly 1 at each
/// annotated center cell, Gaussian splat elsewhere, max-combined.
Tensor render_heatmap(const std::vector<GtTarget>& targets, int gh, int gw, int num_classes);

/// Center focal loss; N = number of exact-1 entries in y, else-branch only
/// when N is zero (normalized by 1). Predictions clamp at 1e-12.
Tensor focal_loss(const Tensor& c_hat, const Tensor& y, double alpha, double beta);

struct SparseTarget {
    int row;
    std::vector<double> value;
};

/// (1/N) sum of elementwise L1 at the listed rows of a (rows, channels)
/// prediction; 0 when the target list is empty.
Tensor sparse_l1(const Tensor& pred, const std::vector<SparseTarget>& targets);

/// Binary cross-entropy of a square affinity matrix against identity.
Tensor matching_loss_bce(const Tensor& a);

/// Row/column softmax cross-entropy term. identity_target=false follows the
/// literal formulation (each log-softmax entry weighted by the matrix value);
/// true scores the diagonal directly.
Tensor matching_loss_ce(const Tensor& a, bool identity_target = false);

Tensor matching_loss(const Tensor& a, bool identity_target = false);

struct LossWeights {
    double w_cf = 1.0;
    double w_bs = 0.1;
    double w_r = 1.0;
    double w_td = 1.0;
    double w_match = 1.0;
};

struct LossComponents {
    Tensor cf;
    Tensor bs;
    Tensor r;
    Tensor td;
    Tensor match;
};

Tensor total_loss(const LossComponents& c, const LossWeights& w);

}  // namespace hgt

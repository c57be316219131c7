#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "hgt/assoc.hpp"
#include "hgt/graph.hpp"
#include "hgt/tensor.hpp"

namespace hgt {

struct ModelConfig {
    bool use_hgt = true;
    bool use_dh_edges = true;  // false selects the single-modality variant
    int layers = 1;            // 1..4
    bool single_class = false;
    int num_classes = 7;
    int dim = 32;
    int heads = 4;
    int r = 4;      // image-to-feature downscale of the finest stage
    int k_pts = 4;  // deformable attention sampling points

    int classes() const { return single_class ? 1 : num_classes; }
    void check() const;
};

/// Spatial feature map stored as a (h, w, c) tensor.
struct FeatMap {
    Tensor t;
    int h = 0;
    int w = 0;
};

/// Node features for one graph: detection grids (cells, dim) and tracking
/// rows (n, dim); tracking tensors are undefined when the modality is empty.
struct NodeFeats {
    std::array<Tensor, 2> det;
    std::array<Tensor, 2> trk;
};

/// Encoder updates detection sinks (plus tracking sinks over TT); the decoder
/// updates tracking sinks only, reading detection sources over reversed
/// temporal/hetero edges.
enum class Direction { Encoder, Decoder };

/// One graph-transformer layer: per-node-kind Q/K projections and distinct
/// per-edge-kind attention/message matrices, all per head.
struct HgtLayerParams {
    std::array<std::vector<Tensor>, 4> q;    // [node kind][head]: (dim, dh)
    std::array<std::vector<Tensor>, 4> k;    // [node kind][head]: (dim, dh)
    std::array<std::vector<Tensor>, 3> att;  // [edge kind][head]: (dh, dh)
    std::array<std::vector<Tensor>, 3> msg;  // [edge kind][head]: (dh, dh)
};

NodeFeats hgt_layer(const HeteroGraph& g, const NodeFeats& f, const HgtLayerParams& p,
                    Direction dir, bool use_dh_edges, int heads);

struct HeadMaps {
    FeatMap c;  // (h, w, classes) in [0,1]
    FeatMap s;  // (h, w, 2) positive
    FeatMap r;  // (h, w, 2) raw refine offsets
};

struct EncodeResult {
    std::array<FeatMap, 2> dtilde;    // aggregated queries at the finest grid
    std::array<Tensor, 2> trk_feats;  // hybrid tracking features, finest stage
};

class Model {
public:
    Model(const ModelConfig& cfg, unsigned seed);

    ModelConfig cfg;

    // Modal-specific input projections, then a shared strided pyramid.
    std::array<Tensor, 2> proj_w, proj_b;      // V: 3->dim, T: 1->dim
    std::array<Tensor, 2> down_w, down_b;      // full res -> H/r (two halvings)
    std::array<Tensor, 3> stage_w, stage_b;    // finest -> three coarser stages
    std::vector<HgtLayerParams> enc_layers;    // shared across stages
    std::vector<HgtLayerParams> dec_layers;
    std::array<Tensor, 3> ida_pre_w, ida_pre_b, ida_post_w, ida_post_b;
    Tensor off_w, off_b;  // deformable offsets dim -> 2*k_pts, zero init
    Tensor wgt_w, wgt_b;  // deformable weights dim -> k_pts
    Tensor hc_w1, hc_b1, hc_w2, hc_b2;  // heatmap head
    Tensor hs_w1, hs_b1, hs_w2, hs_b2;  // size head (exp)
    Tensor hr_w1, hr_b1, hr_w2, hr_b2;  // refine head
    Tensor to_w1, to_b1, to_w2, to_b2;  // tracking offset branch
    Tensor af_w1, af_b1, af_w2, af_b2;  // affinity head

    /// Stable dotted-name parameter listing for checkpoints and the optimizer.
    std::vector<std::pair<std::string, Tensor>> named_params() const;
    void zero_grads() const;
};

/// Four-stage feature pyramid per modality; frames are (H, W, 3) and (H, W, 1).
std::array<std::array<FeatMap, 4>, 2> embed(const Model& m, const Tensor& frame_v,
                                            const Tensor& frame_t);

/// Positions and radius are in finest-grid units; coarser stages rescale both.
/// trk_feats_in rows override the default sampling of tracking features from
/// the finest map (pass undefined tensors to sample).
EncodeResult encode(const Model& m, const std::array<std::array<FeatMap, 4>, 2>& stages,
                    const std::array<std::vector<Vec2>, 2>& trk_pos, double radius,
                    const std::array<Tensor, 2>& trk_feats_in = {});

/// Decoder: HGT pass with tracking sinks plus deformable cross-attention into
/// the own-modality queries. Empty modalities yield undefined tensors.
std::array<Tensor, 2> decode(const Model& m, const std::array<FeatMap, 2>& dtilde,
                             const std::array<std::vector<Vec2>, 2>& trk_pos,
                             const std::array<Tensor, 2>& trk_feats, double radius);

HeadMaps detect_heads(const Model& m, const FeatMap& dtilde);

/// Peak extraction: 3x3 neighborhood maxima of the channel-max heatmap at or
/// above the threshold, top max_k by score. Centers carry the refine offset;
/// all geometry is in feature-grid units. Detection features are the
/// corresponding dtilde rows (plain copies, off the tape).
std::vector<Detection> extract_detections(const HeadMaps& maps, const FeatMap& dtilde,
                                          double det_threshold, int max_k, Mod modality);

/// Two linear layers with a ReLU; (n, dim) -> (n, 2) frame-to-frame offsets.
Tensor track_offset_branch(const Model& m, const Tensor& trk_feats);

/// Affinity head over pairwise feature differences; (N, dim) x (Ntilde, dim)
/// -> (N, Ntilde) in (0,1).
Tensor affinity(const Model& m, const Tensor& u, const Tensor& v);

struct Sgd {
    double lr = 1e-3;
    double momentum = 0.9;
    void step(const std::vector<std::pair<std::string, Tensor>>& params);

private:
    std::vector<std::vector<double>> vel_;
    std::vector<const void*> keys_;
};

}  // namespace hgt

#include "hgt/net.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace hgt {

void ModelConfig::check() const {
    if (layers < 1 || layers > 4) throw TensorError("layers must be in 1..4");
    if (dim % heads != 0) throw TensorError("dim must be divisible by heads");
    if (classes() < 1) throw TensorError("num_classes must be positive");
    if (r < 1 || k_pts < 1) throw TensorError("r and k_pts must be positive");
}

namespace {

int kind_idx(NodeKind k) { return static_cast<int>(k); }
int edge_idx(EdgeKind k) { return static_cast<int>(k); }

Tensor make_weight(int in, int out, std::mt19937_64& rng) {
    return Tensor::randn({in, out}, 1.0 / std::sqrt(static_cast<double>(in)), rng, true);
}

Tensor make_bias(int out) { return Tensor::zeros({out}, true); }

HgtLayerParams make_hgt_params(int dim, int heads, std::mt19937_64& rng) {
    int dh = dim / heads;
    HgtLayerParams p;
    for (int k = 0; k < 4; ++k)
        for (int h = 0; h < heads; ++h) {
            p.q[k].push_back(make_weight(dim, dh, rng));
            p.k[k].push_back(make_weight(dim, dh, rng));
        }
    for (int e = 0; e < 3; ++e)
        for (int h = 0; h < heads; ++h) {
            p.att[e].push_back(make_weight(dh, dh, rng));
            p.msg[e].push_back(make_weight(dh, dh, rng));
        }
    return p;
}

}  // namespace

Model::Model(const ModelConfig& c, unsigned seed) : cfg(c) {
    cfg.check();
    if (cfg.single_class) cfg.num_classes = 1;
    std::mt19937_64 rng(seed);
    int dim = cfg.dim;

    proj_w[0] = make_weight(3, dim, rng);
    proj_w[1] = make_weight(1, dim, rng);
    for (int m = 0; m < 2; ++m) proj_b[m] = make_bias(dim);
    for (int i = 0; i < 2; ++i) {
        down_w[i] = make_weight(4 * dim, dim, rng);
        down_b[i] = make_bias(dim);
    }
    for (int i = 0; i < 3; ++i) {
        stage_w[i] = make_weight(4 * dim, dim, rng);
        stage_b[i] = make_bias(dim);
    }
    for (int l = 0; l < cfg.layers; ++l) enc_layers.push_back(make_hgt_params(dim, cfg.heads, rng));
    for (int l = 0; l < cfg.layers; ++l) dec_layers.push_back(make_hgt_params(dim, cfg.heads, rng));
    for (int i = 0; i < 3; ++i) {
        ida_pre_w[i] = make_weight(dim, dim, rng);
        ida_pre_b[i] = make_bias(dim);
        ida_post_w[i] = make_weight(dim, dim, rng);
        ida_post_b[i] = make_bias(dim);
    }
    off_w = Tensor::zeros({dim, 2 * cfg.k_pts}, true);  // zero-init sampling offsets
    off_b = make_bias(2 * cfg.k_pts);
    wgt_w = make_weight(dim, cfg.k_pts, rng);
    wgt_b = make_bias(cfg.k_pts);

    hc_w1 = make_weight(dim, dim, rng);
    hc_b1 = make_bias(dim);
    hc_w2 = make_weight(dim, cfg.classes(), rng);
    hc_b2 = make_bias(cfg.classes());
    hs_w1 = make_weight(dim, dim, rng);
    hs_b1 = make_bias(dim);
    hs_w2 = make_weight(dim, 2, rng);
    hs_b2 = make_bias(2);
    hr_w1 = make_weight(dim, dim, rng);
    hr_b1 = make_bias(dim);
    hr_w2 = make_weight(dim, 2, rng);
    hr_b2 = make_bias(2);

    to_w1 = make_weight(dim, dim, rng);
    to_b1 = make_bias(dim);
    to_w2 = make_weight(dim, 2, rng);
    to_b2 = make_bias(2);

    af_w1 = make_weight(dim, dim, rng);
    af_b1 = make_bias(dim);
    af_w2 = make_weight(dim, 1, rng);
    af_b2 = make_bias(1);
}

std::vector<std::pair<std::string, Tensor>> Model::named_params() const {
    std::vector<std::pair<std::string, Tensor>> out;
    auto put = [&](const std::string& n, const Tensor& t) { out.emplace_back(n, t); };
    const char* mods[2] = {"v", "t"};
    for (int m = 0; m < 2; ++m) {
        put(std::string("embed.proj_") + mods[m] + ".w", proj_w[m]);
        put(std::string("embed.proj_") + mods[m] + ".b", proj_b[m]);
    }
    for (int i = 0; i < 2; ++i) {
        put("embed.down" + std::to_string(i) + ".w", down_w[i]);
        put("embed.down" + std::to_string(i) + ".b", down_b[i]);
    }
    for (int i = 0; i < 3; ++i) {
        put("embed.stage" + std::to_string(i) + ".w", stage_w[i]);
        put("embed.stage" + std::to_string(i) + ".b", stage_b[i]);
    }
    auto put_hgt = [&](const std::string& pre, const std::vector<HgtLayerParams>& ls) {
        const char* kinds[4] = {"detv", "dett", "trkv", "trkt"};
        const char* edges[3] = {"dt", "tt", "dh"};
        for (size_t l = 0; l < ls.size(); ++l) {
            std::string base = pre + ".layer" + std::to_string(l) + ".";
            for (int k = 0; k < 4; ++k)
                for (size_t h = 0; h < ls[l].q[k].size(); ++h) {
                    std::string hh = "h" + std::to_string(h);
                    put(base + "q." + kinds[k] + "." + hh, ls[l].q[k][h]);
                    put(base + "k." + kinds[k] + "." + hh, ls[l].k[k][h]);
                }
            for (int e = 0; e < 3; ++e)
                for (size_t h = 0; h < ls[l].att[e].size(); ++h) {
                    std::string hh = "h" + std::to_string(h);
                    put(base + "att." + edges[e] + "." + hh, ls[l].att[e][h]);
                    put(base + "msg." + edges[e] + "." + hh, ls[l].msg[e][h]);
                }
        }
    };
    put_hgt("encoder", enc_layers);
    put_hgt("decoder", dec_layers);
    for (int i = 0; i < 3; ++i) {
        std::string b = "ida.merge" + std::to_string(i) + ".";
        put(b + "pre.w", ida_pre_w[i]);
        put(b + "pre.b", ida_pre_b[i]);
        put(b + "post.w", ida_post_w[i]);
        put(b + "post.b", ida_post_b[i]);
    }
    put("decoder.deform.off.w", off_w);
    put("decoder.deform.off.b", off_b);
    put("decoder.deform.wgt.w", wgt_w);
    put("decoder.deform.wgt.b", wgt_b);
    put("heads.c.w1", hc_w1);
    put("heads.c.b1", hc_b1);
    put("heads.c.w2", hc_w2);
    put("heads.c.b2", hc_b2);
    put("heads.s.w1", hs_w1);
    put("heads.s.b1", hs_b1);
    put("heads.s.w2", hs_w2);
    put("heads.s.b2", hs_b2);
    put("heads.r.w1", hr_w1);
    put("heads.r.b1", hr_b1);
    put("heads.r.w2", hr_w2);
    put("heads.r.b2", hr_b2);
    put("track_offset.w1", to_w1);
    put("track_offset.b1", to_b1);
    put("track_offset.w2", to_w2);
    put("track_offset.b2", to_b2);
    put("affinity.w1", af_w1);
    put("affinity.b1", af_b1);
    put("affinity.w2", af_w2);
    put("affinity.b2", af_b2);
    return out;
}

void Model::zero_grads() const {
    for (auto& [n, t] : named_params()) t.zero_grad();
}

// ---- embedding -------------------------------------------------------------

namespace {

/// Space-to-depth halving of a (h, w, c) map followed by a linear mix:
/// output (h/2, w/2, out).
FeatMap halve(const FeatMap& in, const Tensor& w, const Tensor& b) {
    if (in.h % 2 || in.w % 2) throw TensorError("halve needs even extents");
    int h2 = in.h / 2, w2 = in.w / 2, c = in.t.dim(2);
    Tensor flat = reshape(in.t, {in.h * in.w, c});
    std::vector<int> i00, i01, i10, i11;
    for (int y = 0; y < h2; ++y)
        for (int x = 0; x < w2; ++x) {
            i00.push_back((2 * y) * in.w + 2 * x);
            i01.push_back((2 * y) * in.w + 2 * x + 1);
            i10.push_back((2 * y + 1) * in.w + 2 * x);
            i11.push_back((2 * y + 1) * in.w + 2 * x + 1);
        }
    Tensor packed = concat_lastdim({gather_rows(flat, i00), gather_rows(flat, i01),
                                    gather_rows(flat, i10), gather_rows(flat, i11)});
    Tensor mixed = relu(linear(packed, w, b));
    return FeatMap{reshape(mixed, {h2, w2, mixed.dim(1)}), h2, w2};
}

FeatMap upsample2(const FeatMap& in) {
    int h2 = in.h * 2, w2 = in.w * 2, c = in.t.dim(2);
    Tensor flat = reshape(in.t, {in.h * in.w, c});
    std::vector<int> idx;
    idx.reserve(static_cast<size_t>(h2) * w2);
    for (int y = 0; y < h2; ++y)
        for (int x = 0; x < w2; ++x) idx.push_back((y / 2) * in.w + x / 2);
    return FeatMap{reshape(gather_rows(flat, idx), {h2, w2, c}), h2, w2};
}

}  // namespace

std::array<std::array<FeatMap, 4>, 2> embed(const Model& m, const Tensor& frame_v,
                                            const Tensor& frame_t) {
    if (frame_v.ndim() != 3 || frame_t.ndim() != 3 || frame_v.dim(2) != 3 || frame_t.dim(2) != 1)
        throw TensorError("embed expects frames (h,w,3) and (h,w,1)");
    if (frame_v.dim(0) != frame_t.dim(0) || frame_v.dim(1) != frame_t.dim(1))
        throw TensorError("frame extents differ across modalities");
    int h = frame_v.dim(0), w = frame_v.dim(1);
    if (h % (m.cfg.r * 8) || w % (m.cfg.r * 8))
        throw TensorError("frame extents must divide r * 8");

    std::array<std::array<FeatMap, 4>, 2> out;
    const Tensor* frames[2] = {&frame_v, &frame_t};
    for (int mod = 0; mod < 2; ++mod) {
        FeatMap cur{conv1x1(*frames[mod], m.proj_w[mod], m.proj_b[mod]), h, w};
        for (int i = 0; i < 2; ++i) cur = halve(cur, m.down_w[i], m.down_b[i]);
        out[mod][0] = cur;
        for (int s = 0; s < 3; ++s) out[mod][s + 1] = halve(out[mod][s], m.stage_w[s], m.stage_b[s]);
    }
    return out;
}

// ---- HGT layer -------------------------------------------------------------

namespace {

struct SrcRef {
    NodeKind kind;
    int idx;
    EdgeKind ek;
};

/// Rebuilds a (rows, dim) tensor where some rows were replaced by computed
/// (1, dim) tensors; untouched runs are gathered from the base in one piece.
Tensor assemble_rows(const Tensor& base, const std::map<int, Tensor>& updated, int dim) {
    if (updated.empty()) return base;
    int rows = base.dim(0);
    std::vector<Tensor> pieces;
    std::vector<int> run;
    auto flush = [&] {
        if (run.empty()) return;
        pieces.push_back(reshape(gather_rows(base, run), {1, static_cast<int>(run.size()) * dim}));
        run.clear();
    };
    for (int r = 0; r < rows; ++r) {
        auto it = updated.find(r);
        if (it == updated.end()) {
            run.push_back(r);
        } else {
            flush();
            pieces.push_back(it->second);
        }
    }
    flush();
    Tensor flat = pieces.size() == 1 ? pieces[0] : concat_lastdim(pieces);
    return reshape(flat, {rows, dim});
}

}  // namespace

NodeFeats hgt_layer(const HeteroGraph& g, const NodeFeats& f, const HgtLayerParams& p,
                    Direction dir, bool use_dh_edges, int heads) {
    int dim = -1;
    for (const auto& t : f.det)
        if (t.defined()) dim = t.dim(1);
    for (const auto& t : f.trk)
        if (t.defined() && dim < 0) dim = t.dim(1);
    if (dim < 0) throw TensorError("hgt_layer with no node features");
    if (dim % heads) throw TensorError("hgt_layer dim not divisible by heads");
    for (const auto& t : f.trk)
        if (t.defined() && t.dim(1) != dim) throw TensorError("hgt_layer width mismatch");
    int dh = dim / heads;
    double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    // Incoming source lists per sink, keyed by (node kind, index).
    std::map<std::pair<int, int>, std::vector<SrcRef>> in_edges;
    auto add = [&](NodeKind sk, int si, NodeKind dk, int di, EdgeKind ek) {
        in_edges[{kind_idx(dk), di}].push_back(SrcRef{sk, si, ek});
    };
    for (const Edge& e : g.edges(EdgeKind::TT)) {
        if (!use_dh_edges && modality(e.src_kind) != modality(e.dst_kind)) continue;
        add(e.src_kind, e.src, e.dst_kind, e.dst, EdgeKind::TT);
    }
    if (dir == Direction::Encoder) {
        for (const Edge& e : g.edges(EdgeKind::DT))
            add(e.src_kind, e.src, e.dst_kind, e.dst, EdgeKind::DT);
        if (use_dh_edges)
            for (const Edge& e : g.edges(EdgeKind::DH))
                add(e.src_kind, e.src, e.dst_kind, e.dst, EdgeKind::DH);
    } else {
        // Temporal/hetero edges reversed: detection sources feed tracking sinks.
        for (const Edge& e : g.edges(EdgeKind::DT))
            add(e.dst_kind, e.dst, e.src_kind, e.src, EdgeKind::DT);
        if (use_dh_edges)
            for (const Edge& e : g.edges(EdgeKind::DH))
                add(e.dst_kind, e.dst, e.src_kind, e.src, EdgeKind::DH);
    }

    auto feats_of = [&](NodeKind k) -> const Tensor& {
        return is_det(k) ? f.det[idx(modality(k))] : f.trk[idx(modality(k))];
    };
    std::map<std::pair<int, int>, Tensor> row_cache;
    auto row = [&](NodeKind k, int i) -> Tensor {
        auto key = std::make_pair(kind_idx(k), i);
        auto it = row_cache.find(key);
        if (it != row_cache.end()) return it->second;
        const Tensor& base = feats_of(k);
        if (!base.defined()) throw TensorError("hgt_layer missing features for a node kind");
        Tensor r = gather_rows(base, {i});
        row_cache.emplace(key, r);
        return r;
    };
    // Per-source caches: K projections per head, and K·W_att / K·W_msg per
    // head and edge kind (source-only terms reused across every sink).
    std::map<std::tuple<int, int, int>, Tensor> k_cache;                // (kind, idx, head)
    std::map<std::tuple<int, int, int, int>, Tensor> ka_cache, km_cache;  // + edge
    auto k_proj = [&](NodeKind k, int i, int h) -> Tensor {
        auto key = std::make_tuple(kind_idx(k), i, h);
        auto it = k_cache.find(key);
        if (it != k_cache.end()) return it->second;
        Tensor v = matmul(row(k, i), p.k[kind_idx(k)][h]);
        k_cache.emplace(key, v);
        return v;
    };
    auto k_att = [&](const SrcRef& s, int h) -> Tensor {
        auto key = std::make_tuple(kind_idx(s.kind), s.idx, h, edge_idx(s.ek));
        auto it = ka_cache.find(key);
        if (it != ka_cache.end()) return it->second;
        Tensor v = matmul(k_proj(s.kind, s.idx, h), p.att[edge_idx(s.ek)][h]);
        ka_cache.emplace(key, v);
        return v;
    };
    auto k_msg = [&](const SrcRef& s, int h) -> Tensor {
        auto key = std::make_tuple(kind_idx(s.kind), s.idx, h, edge_idx(s.ek));
        auto it = km_cache.find(key);
        if (it != km_cache.end()) return it->second;
        Tensor v = matmul(k_proj(s.kind, s.idx, h), p.msg[edge_idx(s.ek)][h]);
        km_cache.emplace(key, v);
        return v;
    };

    std::array<std::map<int, Tensor>, 4> updated;  // per node kind: row -> (1, dim)
    for (const auto& [sink, srcs] : in_edges) {
        NodeKind sk = static_cast<NodeKind>(sink.first);
        int si = sink.second;
        Tensor sink_row = row(sk, si);
        std::vector<Tensor> head_outs;
        for (int h = 0; h < heads; ++h) {
            Tensor q_col = reshape(matmul(sink_row, p.q[kind_idx(sk)][h]), {dh, 1});
            std::vector<Tensor> logits, msgs;
            for (const SrcRef& s : srcs) {
                logits.push_back(mul_scalar(matmul(k_att(s, h), q_col), scale));
                msgs.push_back(k_msg(s, h));
            }
            Tensor att = softmax_lastdim(
                logits.size() == 1 ? logits[0] : concat_lastdim(logits));
            Tensor stacked = reshape(msgs.size() == 1 ? msgs[0] : concat_lastdim(msgs),
                                     {static_cast<int>(msgs.size()), dh});
            head_outs.push_back(matmul(att, stacked));
        }
        updated[sink.first].emplace(
            si, head_outs.size() == 1 ? head_outs[0] : concat_lastdim(head_outs));
    }

    NodeFeats out = f;
    for (int k = 0; k < 4; ++k) {
        if (updated[k].empty()) continue;
        NodeKind nk = static_cast<NodeKind>(k);
        const Tensor& base = feats_of(nk);
        Tensor merged = assemble_rows(base, updated[k], dim);
        if (is_det(nk))
            out.det[idx(modality(nk))] = merged;
        else
            out.trk[idx(modality(nk))] = merged;
    }
    return out;
}

// ---- encoder ---------------------------------------------------------------

namespace {

Tensor const_coords(const std::vector<Vec2>& pos) {
    std::vector<double> d;
    d.reserve(pos.size() * 2);
    for (const Vec2& p : pos) {
        d.push_back(p.x);
        d.push_back(p.y);
    }
    return Tensor({static_cast<int>(pos.size()), 2}, std::move(d));
}

std::vector<Vec2> rescale_clamped(const std::vector<Vec2>& pos, double factor, int h, int w) {
    std::vector<Vec2> out;
    out.reserve(pos.size());
    for (const Vec2& p : pos)
        out.push_back({std::clamp(p.x * factor, 0.0, w - 1.0), std::clamp(p.y * factor, 0.0, h - 1.0)});
    return out;
}

}  // namespace

EncodeResult encode(const Model& m, const std::array<std::array<FeatMap, 4>, 2>& stages,
                    const std::array<std::vector<Vec2>, 2>& trk_pos, double radius,
                    const std::array<Tensor, 2>& trk_feats_in) {
    if (radius <= 0.0) throw TensorError("encode radius must be positive");
    int dim = m.cfg.dim;

    std::array<Tensor, 2> trk0;  // input tracking features
    for (int mod = 0; mod < 2; ++mod) {
        size_t n = trk_pos[mod].size();
        if (trk_feats_in[mod].defined()) {
            if (trk_feats_in[mod].dim(0) != static_cast<int>(n))
                throw TensorError("encode tracking feature row count mismatch");
            trk0[mod] = trk_feats_in[mod];
        } else if (n > 0) {
            // Nodes sampling: features read from the finest map at the node.
            trk0[mod] = bilinear_sample(stages[mod][0].t, const_coords(trk_pos[mod]));
        }
    }

    std::array<std::array<Tensor, 4>, 2> det;  // flattened per stage
    for (int mod = 0; mod < 2; ++mod)
        for (int s = 0; s < 4; ++s) {
            const FeatMap& fm = stages[mod][s];
            det[mod][s] = reshape(fm.t, {fm.h * fm.w, dim});
        }

    std::array<Tensor, 2> trk_out = trk0;
    if (m.cfg.use_hgt) {
        for (int s = 0; s < 4; ++s) {
            int h = stages[0][s].h, w = stages[0][s].w;
            double factor = 1.0 / static_cast<double>(1 << s);
            HeteroGraph g = HeteroGraph::build(rescale_clamped(trk_pos[0], factor, h, w),
                                               rescale_clamped(trk_pos[1], factor, h, w), h, w,
                                               std::max(radius * factor, 1e-9));
            NodeFeats f{{det[0][s], det[1][s]}, trk0};
            for (const HgtLayerParams& lp : m.enc_layers)
                f = hgt_layer(g, f, lp, Direction::Encoder, m.cfg.use_dh_edges, m.cfg.heads);
            det[0][s] = f.det[0];
            det[1][s] = f.det[1];
            if (s == 0) trk_out = f.trk;  // hybrid features from the finest stage
        }
    }

    EncodeResult res;
    for (int mod = 0; mod < 2; ++mod) {
        FeatMap acc{reshape(det[mod][3], {stages[mod][3].h, stages[mod][3].w, dim}),
                    stages[mod][3].h, stages[mod][3].w};
        for (int i = 0; i < 3; ++i) {
            int s = 2 - i;  // merge into stages 2, 1, 0
            FeatMap up = upsample2(acc);
            Tensor pre = conv1x1(up.t, m.ida_pre_w[i], m.ida_pre_b[i]);
            Tensor fine = reshape(det[mod][s], {stages[mod][s].h, stages[mod][s].w, dim});
            Tensor merged = conv1x1(add(pre, fine), m.ida_post_w[i], m.ida_post_b[i]);
            acc = FeatMap{merged, stages[mod][s].h, stages[mod][s].w};
        }
        res.dtilde[mod] = acc;
    }
    res.trk_feats = trk_out;
    return res;
}

// ---- decoder ---------------------------------------------------------------

std::array<Tensor, 2> decode(const Model& m, const std::array<FeatMap, 2>& dtilde,
                             const std::array<std::vector<Vec2>, 2>& trk_pos,
                             const std::array<Tensor, 2>& trk_feats, double radius) {
    int h = dtilde[0].h, w = dtilde[0].w, dim = m.cfg.dim;
    std::array<Tensor, 2> out;
    if (trk_pos[0].empty() && trk_pos[1].empty()) return out;

    std::array<Tensor, 2> trk = trk_feats;
    if (m.cfg.use_hgt) {
        HeteroGraph g = HeteroGraph::build(trk_pos[0], trk_pos[1], h, w, radius);
        NodeFeats f{{reshape(dtilde[0].t, {h * w, dim}), reshape(dtilde[1].t, {h * w, dim})},
                    trk_feats};
        for (const HgtLayerParams& lp : m.dec_layers)
            f = hgt_layer(g, f, lp, Direction::Decoder, m.cfg.use_dh_edges, m.cfg.heads);
        trk = f.trk;
    }

    int k = m.cfg.k_pts;
    for (int mod = 0; mod < 2; ++mod) {
        size_t n = trk_pos[mod].size();
        if (n == 0) continue;
        std::vector<Tensor> rows;
        for (size_t i = 0; i < n; ++i) {
            Tensor tf = gather_rows(trk[mod], {static_cast<int>(i)});
            Tensor off = reshape(linear(tf, m.off_w, m.off_b), {k, 2});
            Tensor wts = softmax_lastdim(linear(tf, m.wgt_w, m.wgt_b));
            std::vector<double> ref;
            double rx = std::clamp(trk_pos[mod][i].x, 0.0, w - 1.0);
            double ry = std::clamp(trk_pos[mod][i].y, 0.0, h - 1.0);
            for (int j = 0; j < k; ++j) {
                ref.push_back(rx);
                ref.push_back(ry);
            }
            Tensor coords = add(off, Tensor({k, 2}, std::move(ref)));
            Tensor samples = bilinear_sample(dtilde[mod].t, coords);
            rows.push_back(matmul(wts, samples));
        }
        Tensor flat = rows.size() == 1 ? rows[0] : concat_lastdim(rows);
        out[mod] = reshape(flat, {static_cast<int>(n), dim});
    }
    return out;
}

// ---- heads -----------------------------------------------------------------

HeadMaps detect_heads(const Model& m, const FeatMap& dtilde) {
    auto branch = [&](const Tensor& w1, const Tensor& b1, const Tensor& w2, const Tensor& b2) {
        return conv1x1(relu(conv1x1(dtilde.t, w1, b1)), w2, b2);
    };
    HeadMaps maps;
    maps.c = FeatMap{sigmoid(branch(m.hc_w1, m.hc_b1, m.hc_w2, m.hc_b2)), dtilde.h, dtilde.w};
    maps.s = FeatMap{exp(branch(m.hs_w1, m.hs_b1, m.hs_w2, m.hs_b2)), dtilde.h, dtilde.w};
    maps.r = FeatMap{branch(m.hr_w1, m.hr_b1, m.hr_w2, m.hr_b2), dtilde.h, dtilde.w};
    return maps;
}

std::vector<Detection> extract_detections(const HeadMaps& maps, const FeatMap& dtilde,
                                          double det_threshold, int max_k, Mod modality) {
    if (det_threshold <= 0.0 || det_threshold >= 1.0)
        throw TensorError("det_threshold must lie in (0,1)");
    int h = maps.c.h, w = maps.c.w, nc = maps.c.t.dim(2);
    const auto& cd = maps.c.t.data();
    const auto& sd = maps.s.t.data();
    const auto& rd = maps.r.t.data();

    std::vector<double> score(static_cast<size_t>(h) * w);
    std::vector<int> cls(static_cast<size_t>(h) * w);
    for (int i = 0; i < h * w; ++i) {
        int best = 0;
        for (int c = 1; c < nc; ++c)
            if (cd[i * nc + c] > cd[i * nc + best]) best = c;
        score[i] = cd[i * nc + best];
        cls[i] = best;
    }

    struct Peak {
        double s;
        int y, x, c;
    };
    std::vector<Peak> peaks;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = score[y * w + x];
            if (s < det_threshold) continue;
            bool is_max = true;
            for (int dy = -1; dy <= 1 && is_max; ++dy)
                for (int dx = -1; dx <= 1 && is_max; ++dx) {
                    if (!dy && !dx) continue;
                    int ny = y + dy, nx = x + dx;
                    if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
                    double o = score[ny * w + nx];
                    // Plateau tie broken toward the lexicographically first cell.
                    if (o > s || (o == s && (ny < y || (ny == y && nx < x)))) is_max = false;
                }
            if (is_max) peaks.push_back({s, y, x, cls[y * w + x]});
        }
    std::sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) {
        if (a.s != b.s) return a.s > b.s;
        return std::tie(a.y, a.x) < std::tie(b.y, b.x);
    });
    if (static_cast<int>(peaks.size()) > max_k) peaks.resize(max_k);

    const auto& fd = dtilde.t.data();
    int dim = dtilde.t.dim(2);
    std::vector<Detection> out;
    for (const Peak& p : peaks) {
        Detection d;
        int cell = p.y * w + p.x;
        d.box.x = p.x + rd[cell * 2 + 0];
        d.box.y = p.y + rd[cell * 2 + 1];
        d.box.w = sd[cell * 2 + 0];
        d.box.h = sd[cell * 2 + 1];
        d.score = p.s;
        d.class_id = p.c;
        d.modality = modality;
        d.feature.assign(fd.begin() + static_cast<size_t>(cell) * dim,
                         fd.begin() + static_cast<size_t>(cell + 1) * dim);
        out.push_back(std::move(d));
    }
    return out;
}

Tensor track_offset_branch(const Model& m, const Tensor& trk_feats) {
    if (!trk_feats.defined()) return Tensor();
    return linear(relu(linear(trk_feats, m.to_w1, m.to_b1)), m.to_w2, m.to_b2);
}

Tensor affinity(const Model& m, const Tensor& u, const Tensor& v) {
    if (u.ndim() != 2 || v.ndim() != 2 || u.dim(1) != v.dim(1))
        throw TensorError("affinity expects (n,dim) inputs of equal width");
    int n = u.dim(0), nt = v.dim(0);
    if (n == 0 || nt == 0) throw TensorError("affinity on empty input");
    std::vector<int> iu, iv;
    iu.reserve(static_cast<size_t>(n) * nt);
    iv.reserve(static_cast<size_t>(n) * nt);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < nt; ++j) {
            iu.push_back(i);
            iv.push_back(j);
        }
    Tensor e = sub(gather_rows(u, iu), gather_rows(v, iv));
    Tensor hdn = relu(linear(e, m.af_w1, m.af_b1));
    Tensor a = sigmoid(linear(hdn, m.af_w2, m.af_b2));
    return reshape(a, {n, nt});
}

void Sgd::step(const std::vector<std::pair<std::string, Tensor>>& params) {
    for (const auto& [name, t] : params) {
        if (!t.has_grad()) continue;
        size_t slot = keys_.size();
        for (size_t i = 0; i < keys_.size(); ++i)
            if (keys_[i] == t.id()) {
                slot = i;
                break;
            }
        if (slot == keys_.size()) {
            keys_.push_back(t.id());
            vel_.emplace_back(t.size(), 0.0);
        }
        auto& v = vel_[slot];
        const auto& g = t.grad();
        auto& d = const_cast<Tensor&>(t).data_mut();
        for (int i = 0; i < t.size(); ++i) {
            v[i] = momentum * v[i] + g[i];
            d[i] -= lr * v[i];
        }
    }
}

}  // namespace hgt

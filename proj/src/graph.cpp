#include "hgt/graph.hpp"

#include <cmath>
#include <sstream>

namespace hgt {

const char* name(NodeKind k) {
    switch (k) {
        case NodeKind::DetV: return "DetV";
        case NodeKind::DetT: return "DetT";
        case NodeKind::TrkV: return "TrkV";
        case NodeKind::TrkT: return "TrkT";
    }
    return "?";
}

const char* name(EdgeKind k) {
    switch (k) {
        case EdgeKind::DT: return "DT";
        case EdgeKind::TT: return "TT";
        case EdgeKind::DH: return "DH";
    }
    return "?";
}

namespace {

double dist(const Vec2& a, const Vec2& b) { return std::hypot(a.x - b.x, a.y - b.y); }

}  // namespace

HeteroGraph HeteroGraph::build(const std::vector<Vec2>& trk_v, const std::vector<Vec2>& trk_t,
                               int grid_h, int grid_w, double radius) {
    if (grid_h <= 0 || grid_w <= 0) throw GraphError("grid extents must be positive");
    if (radius <= 0.0) throw GraphError("radius must be positive");
    HeteroGraph g;
    g.grid_h_ = grid_h;
    g.grid_w_ = grid_w;
    g.radius_ = radius;
    g.trk_[0] = trk_v;
    g.trk_[1] = trk_t;
    for (Mod m : {Mod::V, Mod::T}) {
        const auto& trk = g.trk_[idx(m)];
        for (size_t i = 0; i < trk.size(); ++i) {
            const Vec2& p = trk[i];
            if (p.x < 0.0 || p.x > grid_w - 1 || p.y < 0.0 || p.y > grid_h - 1) {
                std::ostringstream os;
                os << "tracking node " << name(m) << "[" << i << "] at (" << p.x << "," << p.y
                   << ") outside grid " << grid_h << "x" << grid_w;
                throw GraphError(os.str());
            }
        }
    }

    // DT and DH edges: sink detection cells row-major, then source index.
    for (Mod dst_m : {Mod::V, Mod::T}) {
        for (int y = 0; y < grid_h; ++y)
            for (int x = 0; x < grid_w; ++x) {
                Vec2 cell{static_cast<double>(x), static_cast<double>(y)};
                int cell_idx = y * grid_w + x;
                for (Mod src_m : {Mod::V, Mod::T}) {
                    const auto& trk = g.trk_[idx(src_m)];
                    bool same = src_m == dst_m;
                    for (size_t s = 0; s < trk.size(); ++s) {
                        double d = dist(trk[s], cell);
                        if (d < radius) {
                            Edge e{same ? EdgeKind::DT : EdgeKind::DH, trk_kind(src_m),
                                   static_cast<int>(s), det_kind(dst_m), cell_idx, d};
                            (same ? g.edges_dt_ : g.edges_dh_).push_back(e);
                        }
                    }
                }
            }
    }

    // TT edges between all tracking-node pairs regardless of modality,
    // materialized directed both ways, no self edges.
    for (Mod dst_m : {Mod::V, Mod::T}) {
        const auto& dst_trk = g.trk_[idx(dst_m)];
        for (size_t di = 0; di < dst_trk.size(); ++di) {
            for (Mod src_m : {Mod::V, Mod::T}) {
                const auto& src_trk = g.trk_[idx(src_m)];
                for (size_t si = 0; si < src_trk.size(); ++si) {
                    if (src_m == dst_m && si == di) continue;
                    double d = dist(src_trk[si], dst_trk[di]);
                    if (d < radius)
                        g.edges_tt_.push_back(Edge{EdgeKind::TT, trk_kind(src_m),
                                                   static_cast<int>(si), trk_kind(dst_m),
                                                   static_cast<int>(di), d});
                }
            }
        }
    }
    return g;
}

const std::vector<Edge>& HeteroGraph::edges(EdgeKind k) const {
    switch (k) {
        case EdgeKind::DT: return edges_dt_;
        case EdgeKind::TT: return edges_tt_;
        case EdgeKind::DH: return edges_dh_;
    }
    throw GraphError("unknown edge kind");
}

NodeRef HeteroGraph::det_node(Mod m, int index) const {
    if (index < 0 || index >= num_det()) throw GraphError("detection node index out of range");
    return NodeRef{det_kind(m), index,
                   Vec2{static_cast<double>(index % grid_w_), static_cast<double>(index / grid_w_)}};
}

NodeRef HeteroGraph::trk_node(Mod m, int index) const {
    const auto& t = trk_[idx(m)];
    if (index < 0 || index >= static_cast<int>(t.size()))
        throw GraphError("tracking node index out of range");
    return NodeRef{trk_kind(m), index, t[index]};
}

std::vector<NodeRef> HeteroGraph::neighbors(const NodeRef& target, EdgeKind kind) const {
    // Node existence check.
    if (is_det(target.kind)) {
        if (target.index < 0 || target.index >= num_det())
            throw GraphError("unknown detection node");
    } else {
        const auto& t = trk_[idx(modality(target.kind))];
        if (target.index < 0 || target.index >= static_cast<int>(t.size()))
            throw GraphError("unknown tracking node");
    }
    std::vector<NodeRef> out;
    for (const Edge& e : edges(kind)) {
        if (e.dst_kind == target.kind && e.dst == target.index) {
            Mod sm = modality(e.src_kind);
            out.push_back(is_det(e.src_kind) ? det_node(sm, e.src) : trk_node(sm, e.src));
        }
    }
    return out;
}

void HeteroGraph::validate() const {
    auto pos_of = [&](NodeKind k, int i) -> Vec2 {
        if (is_det(k)) {
            if (i < 0 || i >= num_det()) throw GraphError("validate: det index out of range");
            return Vec2{static_cast<double>(i % grid_w_), static_cast<double>(i / grid_w_)};
        }
        const auto& t = trk_[idx(modality(k))];
        if (i < 0 || i >= static_cast<int>(t.size()))
            throw GraphError("validate: trk index out of range");
        return t[i];
    };
    auto check = [&](const Edge& e) {
        if (is_det(e.src_kind) && is_det(e.dst_kind))
            throw GraphError("validate: edge links two detection nodes");
        double d = dist(pos_of(e.src_kind, e.src), pos_of(e.dst_kind, e.dst));
        if (!(d < radius_)) throw GraphError("validate: edge at or beyond radius");
    };
    for (const Edge& e : edges_dt_) {
        check(e);
        if (is_det(e.src_kind) || !is_det(e.dst_kind))
            throw GraphError("validate: DT edge must run tracking -> detection");
        if (modality(e.src_kind) != modality(e.dst_kind))
            throw GraphError("validate: DT endpoints must share modality");
    }
    for (const Edge& e : edges_dh_) {
        check(e);
        if (is_det(e.src_kind) || !is_det(e.dst_kind))
            throw GraphError("validate: DH edge must run tracking -> detection");
        if (modality(e.src_kind) == modality(e.dst_kind))
            throw GraphError("validate: DH endpoints must differ in modality");
    }
    for (const Edge& e : edges_tt_) {
        check(e);
        if (is_det(e.src_kind) || is_det(e.dst_kind))
            throw GraphError("validate: TT edge must link tracking nodes");
        if (e.src_kind == e.dst_kind && e.src == e.dst)
            throw GraphError("validate: TT self edge");
    }
}

std::string HeteroGraph::dump() const {
    std::ostringstream os;
    auto emit = [&](const Edge& e) {
        os << name(e.kind) << " " << name(modality(e.src_kind)) << " " << e.src << " "
           << name(modality(e.dst_kind)) << " " << e.dst << " " << e.dist << "\n";
    };
    for (const Edge& e : edges_dt_) emit(e);
    for (const Edge& e : edges_tt_) emit(e);
    for (const Edge& e : edges_dh_) emit(e);
    return os.str();
}

}  // namespace hgt

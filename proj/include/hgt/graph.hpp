#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <vector>

#include "hgt/common.hpp"

namespace hgt {

class GraphError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class NodeKind : int { DetV = 0, DetT = 1, TrkV = 2, TrkT = 3 };

inline bool is_det(NodeKind k) { return k == NodeKind::DetV || k == NodeKind::DetT; }
inline Mod modality(NodeKind k) {
    return (k == NodeKind::DetV || k == NodeKind::TrkV) ? Mod::V : Mod::T;
}
inline NodeKind det_kind(Mod m) { return m == Mod::V ? NodeKind::DetV : NodeKind::DetT; }
inline NodeKind trk_kind(Mod m) { return m == Mod::V ? NodeKind::TrkV : NodeKind::TrkT; }
const char* name(NodeKind k);

struct NodeRef {
    NodeKind kind;
    int index;
    Vec2 position;  // feature-grid units
};

enum class EdgeKind : int { DT = 0, TT = 1, DH = 2 };
const char* name(EdgeKind k);

/// Directed edge. DT/DH edges run tracking -> detection; TT pairs are
/// materialized as two directed edges between tracking nodes.
struct Edge {
    EdgeKind kind;
    NodeKind src_kind;
    int src;
    NodeKind dst_kind;
    int dst;
    double dist;
};

/// Typed node sets over both modalities with spatially gated typed edges.
/// Immutable after construction.
class HeteroGraph {
public:
    /// Detection nodes are the grid cells of a (h, w) feature grid shared by
    /// both modalities; tracking nodes are the given positions (grid units).
    /// Every edge requires endpoint distance strictly below radius.
    static HeteroGraph build(const std::vector<Vec2>& trk_v, const std::vector<Vec2>& trk_t,
                             int grid_h, int grid_w, double radius);

    int grid_h() const { return grid_h_; }
    int grid_w() const { return grid_w_; }
    int num_det() const { return grid_h_ * grid_w_; }
    double radius() const { return radius_; }
    const std::vector<Vec2>& trk(Mod m) const { return trk_[idx(m)]; }
    const std::vector<Edge>& edges(EdgeKind k) const;

    /// Sources of edges of the given kind whose sink is `target`, in stable
    /// construction order.
    std::vector<NodeRef> neighbors(const NodeRef& target, EdgeKind kind) const;

    NodeRef det_node(Mod m, int index) const;
    NodeRef trk_node(Mod m, int index) const;

    /// Asserts every structural invariant; throws GraphError on violation.
    void validate() const;

    /// Line-oriented dump "kind src_mod src_idx dst_mod dst_idx dist".
    std::string dump() const;

private:
    int grid_h_ = 0;
    int grid_w_ = 0;
    double radius_ = 0.0;
    std::array<std::vector<Vec2>, 2> trk_;
    std::vector<Edge> edges_dt_;
    std::vector<Edge> edges_tt_;
    std::vector<Edge> edges_dh_;
};

}  // namespace hgt

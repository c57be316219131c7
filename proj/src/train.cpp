#include "hgt/train.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "hgt/io.hpp"

namespace hgt {

namespace {

const FrameAnn* frame_of(const AnnSequence& seq, int frame) {
    for (const FrameAnn& f : seq)
        if (f.frame == frame) return &f;
    return nullptr;
}

struct GridAnn {
    int id;
    Vec2 center;  // grid units, clamped into the grid
    double w, h;  // grid units
    int class_ch;
};

std::vector<GridAnn> to_grid(const FrameAnn* fa, double r, int gh, int gw, bool single_class) {
    std::vector<GridAnn> out;
    if (!fa) return out;
    for (const TargetAnn& t : fa->targets) {
        GridAnn g;
        g.id = t.id;
        g.center = Vec2{std::clamp(t.box.x / r, 0.0, gw - 1e-6),
                        std::clamp(t.box.y / r, 0.0, gh - 1e-6)};
        g.w = t.box.w / r;
        g.h = t.box.h / r;
        g.class_ch = single_class ? 0 : t.class_id - 1;
        out.push_back(g);
    }
    std::sort(out.begin(), out.end(), [](const GridAnn& a, const GridAnn& b) {
        return a.id < b.id;
    });
    return out;
}

}  // namespace

LossComponents frame_losses(const Model& m, const SynthResult& seq, int frame, double radius) {
    if (frame < 2 || frame > static_cast<int>(seq.frames_v.size()))
        throw TensorError("frame_losses wants a frame pair inside the sequence");
    const double r = m.cfg.r;
    const int gh = seq.spec.height / m.cfg.r, gw = seq.spec.width / m.cfg.r;

    std::array<std::vector<GridAnn>, 2> prev, cur;
    for (int mi = 0; mi < 2; ++mi) {
        const AnnSequence& gt = mi == idx(Mod::V) ? seq.gt_v : seq.gt_t;
        prev[mi] = to_grid(frame_of(gt, frame - 1), r, gh, gw, m.cfg.single_class);
        cur[mi] = to_grid(frame_of(gt, frame), r, gh, gw, m.cfg.single_class);
    }

    std::array<std::vector<Vec2>, 2> trk_pos;
    for (int mi = 0; mi < 2; ++mi)
        for (const GridAnn& g : prev[mi]) trk_pos[mi].push_back(g.center);

    auto stages = embed(m, seq.frames_v[frame - 1], seq.frames_t[frame - 1]);
    EncodeResult enc = encode(m, stages, trk_pos, radius);
    std::array<Tensor, 2> dec = decode(m, enc.dtilde, trk_pos, enc.trk_feats, radius);

    LossComponents out;
    out.cf = Tensor::scalar(0.0);
    out.bs = Tensor::scalar(0.0);
    out.r = Tensor::scalar(0.0);
    out.td = Tensor::scalar(0.0);
    out.match = Tensor::scalar(0.0);

    for (int mi = 0; mi < 2; ++mi) {
        HeadMaps heads = detect_heads(m, enc.dtilde[mi]);

        std::vector<GtTarget> hm_targets;
        std::vector<SparseTarget> bs_targets, r_targets;
        for (const GridAnn& g : cur[mi]) {
            hm_targets.push_back(GtTarget{g.center, g.w, g.h, g.class_ch});
            int cx = static_cast<int>(g.center.x), cy = static_cast<int>(g.center.y);
            int cell = cy * gw + cx;
            bs_targets.push_back(SparseTarget{cell, {g.w, g.h}});
            r_targets.push_back(SparseTarget{cell, {g.center.x - cx, g.center.y - cy}});
        }
        Tensor y = render_heatmap(hm_targets, gh, gw, m.cfg.classes());
        out.cf = add(out.cf, focal_loss(heads.c.t, y, 2.0, 4.0));
        out.bs = add(out.bs, sparse_l1(reshape(heads.s.t, {gh * gw, 2}), bs_targets));
        out.r = add(out.r, sparse_l1(reshape(heads.r.t, {gh * gw, 2}), r_targets));

        // Persisting identities: track-offset regression plus the affinity term.
        std::map<int, int> cur_of;
        for (size_t j = 0; j < cur[mi].size(); ++j) cur_of[cur[mi][j].id] = static_cast<int>(j);
        std::vector<int> prev_rows, cur_cells;
        std::vector<SparseTarget> td_targets;
        for (size_t i = 0; i < prev[mi].size(); ++i) {
            auto it = cur_of.find(prev[mi][i].id);
            if (it == cur_of.end()) continue;
            const GridAnn& pg = prev[mi][i];
            const GridAnn& cg = cur[mi][it->second];
            prev_rows.push_back(static_cast<int>(i));
            cur_cells.push_back(static_cast<int>(cg.center.y) * gw +
                                static_cast<int>(cg.center.x));
            td_targets.push_back(SparseTarget{
                static_cast<int>(i), {cg.center.x - pg.center.x, cg.center.y - pg.center.y}});
        }
        if (!prev_rows.empty()) {
            out.td = add(out.td, sparse_l1(track_offset_branch(m, dec[mi]), td_targets));
            Tensor u = gather_rows(dec[mi], prev_rows);
            Tensor v = gather_rows(reshape(enc.dtilde[mi].t, {gh * gw, m.cfg.dim}), cur_cells);
            out.match = add(out.match, matching_loss(affinity(m, u, v)));
        }
    }
    return out;
}

TrainResult train(Model& m, const SynthResult& seq, int steps, double lr, double momentum,
                  const LossWeights& w, const std::string& curve_path,
                  const std::string& ckpt_path, double radius) {
    if (steps < 1) throw TensorError("train wants at least one step");
    if (static_cast<int>(seq.frames_v.size()) < 2)
        throw TensorError("train wants a sequence of at least two frames");

    TrainResult res;
    Sgd opt;
    opt.lr = lr;
    opt.momentum = momentum;
    auto params = m.named_params();
    std::vector<std::pair<std::string, Tensor>> last_good;
    auto snapshot = [&]() {
        last_good.clear();
        for (const auto& [n, t] : params)
            last_good.emplace_back(n, Tensor(t.shape(), t.data()));
    };
    snapshot();

    std::ostringstream curve;
    int nframes = static_cast<int>(seq.frames_v.size());
    for (int s = 0; s < steps; ++s) {
        int frame = 2 + s % (nframes - 1);
        m.zero_grads();
        Tensor loss;
        double v = std::numeric_limits<double>::quiet_NaN();
        try {
            loss = total_loss(frame_losses(m, seq, frame, radius), w);
            v = loss.value();
        } catch (const TensorError&) {
            // exploding weights can push sampling coordinates out of range
        }
        if (!std::isfinite(v)) {
            res.diverged = true;
            break;
        }
        snapshot();  // the weights that produced this finite loss
        loss.backward();
        opt.step(params);
        res.curve.push_back(v);
        res.steps_run = s + 1;
        curve << s + 1 << " " << v << "\n";
    }

    if (res.diverged) load_into(params, last_good);
    if (!curve_path.empty()) write_file(curve_path, curve.str());
    if (!ckpt_path.empty()) checkpoint_save(params, ckpt_path);
    return res;
}

}  // namespace hgt

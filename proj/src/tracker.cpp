#include "hgt/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace hgt {

namespace {

Box union_box(const Box& a, const Box& b) {
    double l = std::min(a.left(), b.left()), t = std::min(a.top(), b.top());
    double r = std::max(a.right(), b.right()), bo = std::max(a.bottom(), b.bottom());
    return Box{(l + r) / 2.0, (t + bo) / 2.0, r - l, bo - t};
}

Box expand(const Box& b, double factor) { return Box{b.x, b.y, b.w * factor, b.h * factor}; }

bool inside(const Box& region, double x, double y) {
    return x >= region.left() && x <= region.right() && y >= region.top() &&
           y <= region.bottom();
}

std::string ev(int frame, const char* what, int id, const char* mod = nullptr) {
    std::ostringstream os;
    os << frame << " " << what << " " << id;
    if (mod) os << " " << mod;
    return os.str();
}

}  // namespace

void TrackerConfig::check() const {
    if (det_threshold <= 0.0 || det_threshold >= 1.0)
        throw TrackerError("det_threshold must lie in (0,1)");
    if (iou_tau < 0.0 || iou_tau >= 1.0) throw TrackerError("iou_tau must lie in [0,1)");
    if (search_expand < 1.0) throw TrackerError("search_expand must be >= 1");
    if (min_affinity < 0.0 || min_affinity > 1.0)
        throw TrackerError("min_affinity must lie in [0,1]");
    if (max_lost < 1 || init_hits < 1 || max_k < 1)
        throw TrackerError("max_lost, init_hits and max_k must be positive");
    if (radius_d <= 0.0) throw TrackerError("radius_d must be positive");
}

double redet_threshold(double det_threshold, double c_other) {
    return det_threshold / (1.0 + c_other);
}

// ---- perceptions -----------------------------------------------------------

NetworkPerception::NetworkPerception(const Model& model, const TrackerConfig& cfg,
                                     double candidate_floor)
    : model_(model), cfg_(cfg), floor_(candidate_floor) {
    cfg_.check();
    if (floor_ <= 0.0 || floor_ > cfg_.det_threshold)
        throw TrackerError("candidate_floor must lie in (0, det_threshold]");
}

Observation NetworkPerception::observe(
    const StepInput& in, const std::array<std::vector<Vec2>, 2>& trk_pos,
    const std::array<std::vector<std::vector<double>>, 2>& trk_feats) {
    if (!in.frame_v.defined() || !in.frame_t.defined())
        throw TrackerError("network perception needs both frames");
    const double r = model_.cfg.r;

    const double gw = in.frame_v.dim(1) / r - 1.0, gh = in.frame_v.dim(0) / r - 1.0;
    std::array<std::vector<Vec2>, 2> grid_pos;
    std::array<Tensor, 2> feats_in;
    for (int m = 0; m < 2; ++m) {
        for (const Vec2& p : trk_pos[m])
            grid_pos[m].push_back(
                Vec2{std::clamp(p.x / r, 0.0, gw), std::clamp(p.y / r, 0.0, gh)});
        int n = static_cast<int>(trk_feats[m].size());
        if (n > 0) {
            std::vector<double> flat;
            for (const auto& f : trk_feats[m]) {
                if (static_cast<int>(f.size()) != model_.cfg.dim)
                    throw TrackerError("tracking feature width mismatch");
                flat.insert(flat.end(), f.begin(), f.end());
            }
            feats_in[m] = Tensor({n, model_.cfg.dim}, std::move(flat));
        }
    }

    auto stages = embed(model_, in.frame_v, in.frame_t);
    EncodeResult enc = encode(model_, stages, grid_pos, cfg_.radius_d, feats_in);
    std::array<Tensor, 2> dec = decode(model_, enc.dtilde, grid_pos, enc.trk_feats, cfg_.radius_d);

    Observation obs;
    obs.px_per_cell = r;
    for (int m = 0; m < 2; ++m) {
        Mod mod = static_cast<Mod>(m);
        HeadMaps heads = detect_heads(model_, enc.dtilde[m]);
        obs.dets[m] = extract_detections(heads, enc.dtilde[m], floor_, cfg_.max_k, mod);
        for (Detection& d : obs.dets[m]) {
            d.box.x *= r;
            d.box.y *= r;
            d.box.w *= r;
            d.box.h *= r;
            d.class_id += 1;  // heatmap channels are zero-based
        }

        int h = heads.c.h, w = heads.c.w, nc = heads.c.t.dim(2);
        std::vector<double> peak(static_cast<size_t>(h) * w, 0.0);
        const auto& cd = heads.c.t.data();
        for (int i = 0; i < h * w; ++i)
            for (int c = 0; c < nc; ++c) peak[i] = std::max(peak[i], cd[i * nc + c]);
        obs.heat[m] = FeatMap{Tensor({h, w, 1}, std::move(peak)), h, w};

        int n = static_cast<int>(trk_pos[m].size());
        obs.trk_offsets[m].assign(n, Vec2{});
        if (n > 0) {
            Tensor off = track_offset_branch(model_, dec[m]);
            const auto& od = off.data();
            const auto& ud = dec[m].data();
            int dim = dec[m].dim(1);
            for (int i = 0; i < n; ++i) {
                obs.trk_offsets[m][i] = Vec2{od[i * 2] * r, od[i * 2 + 1] * r};
                obs.trk_updated[m].emplace_back(ud.begin() + static_cast<size_t>(i) * dim,
                                                ud.begin() + static_cast<size_t>(i + 1) * dim);
            }
        }
    }
    return obs;
}

std::vector<std::vector<double>> NetworkPerception::affinity_matrix(
    Mod, const std::vector<std::vector<double>>& trk_feats, const std::vector<Detection>& dets) {
    std::vector<std::vector<double>> out(trk_feats.size(),
                                         std::vector<double>(dets.size(), 0.0));
    if (trk_feats.empty() || dets.empty()) return out;
    int dim = model_.cfg.dim;
    std::vector<double> uf, vf;
    for (const auto& f : trk_feats) uf.insert(uf.end(), f.begin(), f.end());
    for (const Detection& d : dets) {
        if (static_cast<int>(d.feature.size()) != dim)
            throw TrackerError("detection feature width mismatch");
        vf.insert(vf.end(), d.feature.begin(), d.feature.end());
    }
    Tensor a = affinity(model_, Tensor({static_cast<int>(trk_feats.size()), dim}, std::move(uf)),
                        Tensor({static_cast<int>(dets.size()), dim}, std::move(vf)));
    for (size_t i = 0; i < trk_feats.size(); ++i)
        for (size_t j = 0; j < dets.size(); ++j)
            out[i][j] = a.data()[i * dets.size() + j];
    return out;
}

SyntheticOraclePerception::SyntheticOraclePerception(const SynthResult& seq, int grid_ratio)
    : seq_(seq), r_(grid_ratio) {}

Observation SyntheticOraclePerception::observe(
    const StepInput& in, const std::array<std::vector<Vec2>, 2>& trk_pos,
    const std::array<std::vector<std::vector<double>>, 2>& trk_feats) {
    Observation obs;
    obs.px_per_cell = r_;
    int gh = (seq_.spec.height + r_ - 1) / r_, gw = (seq_.spec.width + r_ - 1) / r_;
    for (int m = 0; m < 2; ++m) {
        const AnnSequence& gt = m == idx(Mod::V) ? seq_.gt_v : seq_.gt_t;
        std::vector<double> heat(static_cast<size_t>(gh) * gw, 0.0);
        for (const FrameAnn& fa : gt) {
            if (fa.frame != in.frame) continue;
            for (const TargetAnn& t : fa.targets) {
                Detection d;
                d.box = t.box;
                d.score = t.conf;
                d.class_id = t.class_id;
                d.modality = static_cast<Mod>(m);
                d.feature = {static_cast<double>(t.id)};
                d.truth_id = t.id;
                obs.dets[m].push_back(std::move(d));
                int cx = std::clamp(static_cast<int>(t.box.x / r_), 0, gw - 1);
                int cy = std::clamp(static_cast<int>(t.box.y / r_), 0, gh - 1);
                heat[static_cast<size_t>(cy) * gw + cx] =
                    std::max(heat[static_cast<size_t>(cy) * gw + cx], t.conf);
            }
        }
        obs.heat[m] = FeatMap{Tensor({gh, gw, 1}, std::move(heat)), gh, gw};
        obs.trk_updated[m] = trk_feats[m];
        obs.trk_offsets[m].assign(trk_pos[m].size(), Vec2{});
    }
    return obs;
}

std::vector<std::vector<double>> SyntheticOraclePerception::affinity_matrix(
    Mod, const std::vector<std::vector<double>>& trk_feats, const std::vector<Detection>& dets) {
    std::vector<std::vector<double>> out(trk_feats.size(),
                                         std::vector<double>(dets.size(), 0.01));
    for (size_t i = 0; i < trk_feats.size(); ++i)
        for (size_t j = 0; j < dets.size(); ++j)
            if (!trk_feats[i].empty() &&
                static_cast<int>(trk_feats[i][0]) == dets[j].truth_id && dets[j].truth_id >= 0)
                out[i][j] = 0.99;
    return out;
}

// ---- tracker ---------------------------------------------------------------

Tracker::Tracker(Perception& perception, const TrackerConfig& cfg)
    : perception_(perception), cfg_(cfg) {
    cfg_.check();
}

void Tracker::step(const StepInput& in) {
    if (in.frame <= last_frame_) throw TrackerError("frames must arrive strictly in order");
    last_frame_ = in.frame;

    // Tracking nodes: last known centers advanced by the motion prediction.
    std::array<std::vector<int>, 2> nodes;  // track index per node, aligned
    std::array<std::vector<Vec2>, 2> trk_pos;
    std::array<std::vector<std::vector<double>>, 2> trk_feats;
    for (size_t ti = 0; ti < tracks_.size(); ++ti) {
        Tracklet& t = tracks_[ti];
        if (t.state == TrackState::Terminated) continue;
        for (int m = 0; m < 2; ++m) {
            if (!t.target.box[m]) continue;
            nodes[m].push_back(static_cast<int>(ti));
            trk_pos[m].push_back(Vec2{t.target.box[m]->x + t.target.pred_offset[m].x,
                                      t.target.box[m]->y + t.target.pred_offset[m].y});
            trk_feats[m].push_back(t.target.features[m]);
        }
    }

    Observation obs = perception_.observe(in, trk_pos, trk_feats);
    for (int m = 0; m < 2; ++m) {
        if (obs.trk_updated[m].size() != nodes[m].size() ||
            obs.trk_offsets[m].size() != nodes[m].size())
            throw TrackerError("perception outputs misaligned with tracking nodes");
    }

    std::array<std::vector<int>, 2> primary;  // indices into obs.dets[m]
    for (int m = 0; m < 2; ++m)
        for (size_t j = 0; j < obs.dets[m].size(); ++j)
            if (obs.dets[m][j].score >= cfg_.det_threshold)
                primary[m].push_back(static_cast<int>(j));

    // Eq. 10 pairing of this frame's detections, consumed when spawning.
    std::vector<Detection> prim_t, prim_v;
    for (int j : primary[idx(Mod::T)]) prim_t.push_back(obs.dets[idx(Mod::T)][j]);
    for (int j : primary[idx(Mod::V)]) prim_v.push_back(obs.dets[idx(Mod::V)][j]);
    CrossModalResult cm = cross_modal_match(prim_t, prim_v);

    std::vector<std::array<bool, 2>> matched(tracks_.size(), {false, false});
    std::vector<std::array<bool, 2>> recovered(tracks_.size(), {false, false});
    std::vector<std::array<double, 2>> score(tracks_.size(), {0.0, 0.0});
    std::array<std::vector<bool>, 2> det_used;
    for (int m = 0; m < 2; ++m) det_used[m].assign(obs.dets[m].size(), false);

    // Per-modality association against the decoder-updated features.
    for (int m = 0; m < 2; ++m) {
        Mod mod = static_cast<Mod>(m);
        std::vector<Detection> dets;
        for (int j : primary[m]) dets.push_back(obs.dets[m][j]);
        std::vector<std::vector<double>> td =
            perception_.affinity_matrix(mod, obs.trk_updated[m], dets);
        // associate wants (detections x tracklets)
        std::vector<std::vector<double>> aff(dets.size(),
                                             std::vector<double>(nodes[m].size(), 0.0));
        for (size_t i = 0; i < td.size(); ++i)
            for (size_t j = 0; j < td[i].size(); ++j) aff[j][i] = td[i][j];
        Assignment as = associate(aff, cfg_.min_affinity, static_cast<int>(nodes[m].size()));
        for (auto [dr, row] : as.matches) {
            int ti = nodes[m][row];
            int dj = primary[m][dr];
            const Detection& d = obs.dets[m][dj];
            Tracklet& t = tracks_[ti];
            t.target.box[m] = d.box;
            t.target.features[m] = obs.trk_updated[m][row].empty() ? d.feature
                                                                   : obs.trk_updated[m][row];
            t.target.pred_offset[m] = obs.trk_offsets[m][row];
            matched[ti][m] = true;
            score[ti][m] = d.score;
            det_used[m][dj] = true;
            events_.push_back(ev(in.frame, "match", t.target.global_id, name(mod)));
        }
        // Unmatched nodes still carry the fresh motion prediction.
        for (size_t row = 0; row < nodes[m].size(); ++row)
            if (!matched[nodes[m][row]][m])
                tracks_[nodes[m][row]].target.pred_offset[m] = obs.trk_offsets[m][row];
    }

    // ReDet: a target lost in one modality but freshly matched in the other.
    if (cfg_.redet_enabled) {
        for (size_t ti = 0; ti < tracks_.size(); ++ti) {
            Tracklet& t = tracks_[ti];
            if (t.state == TrackState::Terminated || !t.target.ever_both) continue;
            for (int m = 0; m < 2; ++m) {
                int o = 1 - m;
                if (matched[ti][m] || !matched[ti][o]) continue;
                if (!t.target.box[m] || !t.target.box[o]) continue;
                Box sr = expand(union_box(*t.target.box[m], *t.target.box[o]),
                                cfg_.search_expand);
                double thr = redet_threshold(cfg_.det_threshold, score[ti][o]);

                std::optional<Box> found;
                double found_score = 0.0;
                int found_det = -1;
                if (cfg_.redet_mode == TrackerConfig::RedetMode::Affinity) {
                    std::vector<int> cand;
                    for (size_t j = 0; j < obs.dets[m].size(); ++j) {
                        const Detection& d = obs.dets[m][j];
                        if (!det_used[m][j] && inside(sr, d.box.x, d.box.y))
                            cand.push_back(static_cast<int>(j));
                    }
                    if (!cand.empty()) {
                        std::vector<Detection> cds;
                        for (int j : cand) cds.push_back(obs.dets[m][j]);
                        auto aff = perception_.affinity_matrix(static_cast<Mod>(m),
                                                               {t.target.features[m]}, cds);
                        int best = 0;
                        for (size_t j = 1; j < cand.size(); ++j)
                            if (aff[0][j] > aff[0][best]) best = static_cast<int>(j);
                        const Detection& d = obs.dets[m][cand[best]];
                        if (d.score > thr && iou(d.box, *t.target.box[m]) > cfg_.iou_tau) {
                            found = d.box;
                            found_score = d.score;
                            found_det = cand[best];
                        }
                    }
                } else {
                    // HGT-Heat: highest heat cell in the region, no identity check.
                    const FeatMap& hm = obs.heat[m];
                    double best = -1.0;
                    Vec2 pos{};
                    for (int y = 0; y < hm.h; ++y)
                        for (int x = 0; x < hm.w; ++x) {
                            double px = x * obs.px_per_cell, py = y * obs.px_per_cell;
                            if (!inside(sr, px, py)) continue;
                            double v = hm.t.data()[static_cast<size_t>(y) * hm.w + x];
                            if (v > best) {
                                best = v;
                                pos = Vec2{px, py};
                            }
                        }
                    if (best > thr) {
                        found = Box{pos.x, pos.y, t.target.box[m]->w, t.target.box[m]->h};
                        found_score = best;
                        // Absorb the closest unconsumed detection so it cannot
                        // also spawn a duplicate tracklet.
                        double dmin = 1e18;
                        for (size_t j = 0; j < obs.dets[m].size(); ++j) {
                            const Detection& d = obs.dets[m][j];
                            double dd = std::hypot(d.box.x - pos.x, d.box.y - pos.y);
                            if (!det_used[m][j] && dd < dmin) {
                                dmin = dd;
                                found_det = static_cast<int>(j);
                            }
                        }
                        if (dmin > obs.px_per_cell) found_det = -1;
                    }
                }

                if (found) {
                    t.target.box[m] = *found;
                    score[ti][m] = found_score;
                    recovered[ti][m] = true;
                    if (found_det >= 0) det_used[m][found_det] = true;
                    events_.push_back(
                        ev(in.frame, "redet", t.target.global_id, name(static_cast<Mod>(m))));
                }
            }
        }
    }

    // Lifecycle, q and per-frame bookkeeping.
    for (size_t ti = 0; ti < tracks_.size(); ++ti) {
        Tracklet& t = tracks_[ti];
        if (t.state == TrackState::Terminated) continue;
        bool up_v = matched[ti][idx(Mod::V)] || recovered[ti][idx(Mod::V)];
        bool up_t = matched[ti][idx(Mod::T)] || recovered[ti][idx(Mod::T)];
        t.target.q = up_v && up_t ? Visibility::Both
                     : up_v      ? Visibility::VOnly
                     : up_t      ? Visibility::TOnly
                                 : Visibility::None;
        if (up_v && up_t) t.target.ever_both = true;

        bool hit = matched[ti][0] || matched[ti][1];  // recoveries do not confirm
        t.target.consec_hits = hit ? t.target.consec_hits + 1 : 0;
        for (int m = 0; m < 2; ++m) {
            if (matched[ti][m] || recovered[ti][m])
                t.target.lost_frames[m] = 0;
            else if (t.target.box[m])
                ++t.target.lost_frames[m];
        }

        if (t.state == TrackState::Tentative && t.target.consec_hits >= cfg_.init_hits)
            t.state = TrackState::Active;
        bool gone_v = !t.target.box[idx(Mod::V)] || t.target.lost_frames[idx(Mod::V)] > cfg_.max_lost;
        bool gone_t = !t.target.box[idx(Mod::T)] || t.target.lost_frames[idx(Mod::T)] > cfg_.max_lost;
        if (gone_v && gone_t) {
            t.state = TrackState::Terminated;
            events_.push_back(ev(in.frame, "terminate", t.target.global_id));
            continue;
        }
        if (t.state == TrackState::Active && !up_v && !up_t) t.state = TrackState::Lost;
        else if (t.state == TrackState::Lost && hit) t.state = TrackState::Active;

        if (up_v || up_t) {
            Tracklet::HistEntry he;
            he.frame = in.frame;
            if (up_v) he.box[idx(Mod::V)] = t.target.box[idx(Mod::V)];
            if (up_t) he.box[idx(Mod::T)] = t.target.box[idx(Mod::T)];
            t.history.push_back(he);
        }
    }

    // Spawning: cross-modal pairs first, one tracklet per pair.
    auto spawn = [&](const Detection* dv, const Detection* dt) {
        Tracklet t;
        t.target.global_id = next_id_++;
        t.target.consec_hits = 1;
        const Detection* lead = dv && (!dt || dv->score >= dt->score) ? dv : dt;
        t.target.class_id = lead->class_id;
        if (dv) {
            t.target.box[idx(Mod::V)] = dv->box;
            t.target.features[idx(Mod::V)] = dv->feature;
        }
        if (dt) {
            t.target.box[idx(Mod::T)] = dt->box;
            t.target.features[idx(Mod::T)] = dt->feature;
        }
        t.target.q = dv && dt ? Visibility::Both : dv ? Visibility::VOnly : Visibility::TOnly;
        t.target.ever_both = dv && dt;
        Tracklet::HistEntry he;
        he.frame = in.frame;
        he.box = t.target.box;
        t.history.push_back(he);
        events_.push_back(ev(in.frame, "init", t.target.global_id));
        matched.push_back({dv != nullptr, dt != nullptr});
        recovered.push_back({false, false});
        score.push_back({dv ? dv->score : 0.0, dt ? dt->score : 0.0});
        tracks_.push_back(std::move(t));
    };
    for (auto [tr, vr] : cm.assignment.matches) {
        int tj = primary[idx(Mod::T)][tr], vj = primary[idx(Mod::V)][vr];
        if (det_used[idx(Mod::T)][tj] || det_used[idx(Mod::V)][vj]) continue;
        det_used[idx(Mod::T)][tj] = det_used[idx(Mod::V)][vj] = true;
        spawn(&obs.dets[idx(Mod::V)][vj], &obs.dets[idx(Mod::T)][tj]);
    }
    for (int m = 0; m < 2; ++m)
        for (int j : primary[m]) {
            if (det_used[m][j]) continue;
            det_used[m][j] = true;
            const Detection& d = obs.dets[m][j];
            spawn(m == idx(Mod::V) ? &d : nullptr, m == idx(Mod::T) ? &d : nullptr);
        }

    // MOT emission for every track updated this frame, tentative included.
    for (int m = 0; m < 2; ++m) {
        FrameAnn fa;
        fa.frame = in.frame;
        for (size_t ti = 0; ti < tracks_.size(); ++ti) {
            const Tracklet& t = tracks_[ti];
            if (t.state == TrackState::Terminated) continue;
            if (!(matched[ti][m] || recovered[ti][m])) continue;
            TargetAnn a;
            a.id = t.target.global_id;
            a.box = *t.target.box[m];
            a.class_id = t.target.class_id;
            a.conf = score[ti][m];
            fa.targets.push_back(a);
        }
        if (!fa.targets.empty()) results_[m].push_back(std::move(fa));
    }
}

}  // namespace hgt

#include "hgt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

namespace hgt {

namespace {

constexpr double kGateSlack = 1e-9;  // include pairs exactly at the threshold

void check_sequence(const AnnSequence& s, const char* which) {
    int prev = 0;
    for (const FrameAnn& f : s) {
        if (f.frame <= prev)
            throw MetricsError(std::string(which) + " frames not strictly increasing");
        prev = f.frame;
        std::set<int> ids;
        for (const TargetAnn& t : f.targets)
            if (!ids.insert(t.id).second)
                throw MetricsError(std::string(which) + " duplicate id " + std::to_string(t.id) +
                                   " in frame " + std::to_string(f.frame));
    }
}

/// Frame-aligned views over the union of frame indices.
std::vector<std::pair<const FrameAnn*, const FrameAnn*>> align(const AnnSequence& gt,
                                                               const AnnSequence& pred) {
    static const FrameAnn empty;
    std::map<int, std::pair<const FrameAnn*, const FrameAnn*>> by_frame;
    for (const FrameAnn& f : gt) by_frame[f.frame].first = &f;
    for (const FrameAnn& f : pred) by_frame[f.frame].second = &f;
    std::vector<std::pair<const FrameAnn*, const FrameAnn*>> out;
    for (auto& [frame, pair] : by_frame)
        out.emplace_back(pair.first ? pair.first : &empty, pair.second ? pair.second : &empty);
    return out;
}

}  // namespace

ClearmotReport clearmot(const AnnSequence& gt, const AnnSequence& pred, double iou_thresh) {
    check_sequence(gt, "gt");
    check_sequence(pred, "pred");
    ClearmotReport r;
    double iou_sum = 0.0;
    std::map<int, int> last_pred_of_gt;  // CLEAR: last known correspondence
    std::map<int, std::pair<int, int>> gt_frames;  // gt id -> (present, matched)

    for (auto [gf, pf] : align(gt, pred)) {
        const auto& gts = gf->targets;
        const auto& prs = pf->targets;
        r.gt_total += static_cast<long long>(gts.size());
        for (const TargetAnn& t : gts) ++gt_frames[t.id].first;

        std::vector<bool> gt_used(gts.size(), false), pr_used(prs.size(), false);
        std::vector<std::pair<int, int>> pairs;

        // Continuity: carry the previous correspondence while it still holds.
        for (size_t i = 0; i < gts.size(); ++i) {
            auto it = last_pred_of_gt.find(gts[i].id);
            if (it == last_pred_of_gt.end()) continue;
            for (size_t j = 0; j < prs.size(); ++j) {
                if (pr_used[j] || prs[j].id != it->second) continue;
                if (iou(gts[i].box, prs[j].box) >= iou_thresh) {
                    pairs.emplace_back(static_cast<int>(i), static_cast<int>(j));
                    gt_used[i] = pr_used[j] = true;
                }
                break;
            }
        }

        // Hungarian over the remainder.
        std::vector<int> gi, pj;
        for (size_t i = 0; i < gts.size(); ++i)
            if (!gt_used[i]) gi.push_back(static_cast<int>(i));
        for (size_t j = 0; j < prs.size(); ++j)
            if (!pr_used[j]) pj.push_back(static_cast<int>(j));
        if (!gi.empty() && !pj.empty()) {
            std::vector<std::vector<double>> cost(gi.size(), std::vector<double>(pj.size()));
            for (size_t a = 0; a < gi.size(); ++a)
                for (size_t b = 0; b < pj.size(); ++b)
                    cost[a][b] = 1.0 - iou(gts[gi[a]].box, prs[pj[b]].box);
            Assignment as = hungarian(cost, 1.0 - iou_thresh + kGateSlack);
            for (auto [a, b] : as.matches) pairs.emplace_back(gi[a], pj[b]);
        }

        for (auto [i, j] : pairs) {
            ++r.matches;
            ++gt_frames[gts[i].id].second;
            iou_sum += iou(gts[i].box, prs[j].box);
            auto it = last_pred_of_gt.find(gts[i].id);
            if (it != last_pred_of_gt.end() && it->second != prs[j].id) ++r.ids;
            last_pred_of_gt[gts[i].id] = prs[j].id;
            gt_used[i] = pr_used[j] = true;
        }
        for (size_t i = 0; i < gts.size(); ++i)
            if (!gt_used[i]) ++r.fn;
        for (size_t j = 0; j < prs.size(); ++j)
            if (!pr_used[j]) ++r.fp;
    }

    r.motp = r.matches ? iou_sum / static_cast<double>(r.matches) : 0.0;
    long long denom = std::max<long long>(1, r.gt_total);
    r.mota = 1.0 - static_cast<double>(r.fp + r.fn + r.ids) / static_cast<double>(denom);
    for (auto& [id, pm] : gt_frames) {
        double cover = static_cast<double>(pm.second) / static_cast<double>(pm.first);
        if (cover >= 0.8) ++r.mt;
        if (cover <= 0.2) ++r.ml;
    }
    return r;
}

namespace {

struct PairKey {
    int g, p;
    bool operator<(const PairKey& o) const { return std::tie(g, p) < std::tie(o.g, o.p); }
};

}  // namespace

double idf1(const AnnSequence& gt, const AnnSequence& pred, double iou_thresh) {
    check_sequence(gt, "gt");
    check_sequence(pred, "pred");
    std::map<int, long long> glen, plen;
    std::map<PairKey, long long> overlap;  // frames where the pair is within threshold
    for (auto [gf, pf] : align(gt, pred)) {
        for (const TargetAnn& g : gf->targets) ++glen[g.id];
        for (const TargetAnn& p : pf->targets) ++plen[p.id];
        for (const TargetAnn& g : gf->targets)
            for (const TargetAnn& p : pf->targets)
                if (iou(g.box, p.box) >= iou_thresh) ++overlap[{g.id, p.id}];
    }
    long long total_g = 0, total_p = 0;
    for (auto& [id, l] : glen) total_g += l;
    for (auto& [id, l] : plen) total_p += l;
    if (total_g + total_p == 0) return 0.0;

    // Square assignment with per-trajectory dummies: matching a dummy costs
    // the full trajectory length; the matched total is IDFN + IDFP.
    std::vector<int> gids, pids;
    for (auto& [id, l] : glen) gids.push_back(id);
    for (auto& [id, l] : plen) pids.push_back(id);
    int n = static_cast<int>(gids.size()), m = static_cast<int>(pids.size());
    const double big = 1e7;
    std::vector<std::vector<double>> cost(n + m, std::vector<double>(m + n, 0.0));
    for (int a = 0; a < n + m; ++a)
        for (int b = 0; b < m + n; ++b) {
            if (a < n && b < m) {
                long long ov = 0;
                auto it = overlap.find({gids[a], pids[b]});
                if (it != overlap.end()) ov = it->second;
                cost[a][b] = static_cast<double>(glen[gids[a]] + plen[pids[b]] - 2 * ov);
            } else if (a < n) {
                cost[a][b] = (b - m == a) ? static_cast<double>(glen[gids[a]]) : big;
            } else if (b < m) {
                cost[a][b] = (a - n == b) ? static_cast<double>(plen[pids[b]]) : big;
            }
        }
    Assignment as = hungarian(cost, 1e17);
    double mismatch = 0.0;
    for (auto [a, b] : as.matches) mismatch += cost[a][b];
    double idtp = (static_cast<double>(total_g + total_p) - mismatch) / 2.0;
    return 2.0 * idtp / static_cast<double>(total_g + total_p);
}

double hota(const AnnSequence& gt, const AnnSequence& pred) {
    check_sequence(gt, "gt");
    check_sequence(pred, "pred");
    auto frames = align(gt, pred);
    long long total_gt = 0, total_pred = 0;
    for (auto [gf, pf] : frames) {
        total_gt += static_cast<long long>(gf->targets.size());
        total_pred += static_cast<long long>(pf->targets.size());
    }
    if (total_gt == 0 && total_pred == 0) return 1.0;
    if (total_gt == 0 || total_pred == 0) return 0.0;

    double sum = 0.0;
    int n_alpha = 0;
    for (int ai = 1; ai <= 19; ++ai) {
        double alpha = 0.05 * ai;
        // Pass 1: potential matches per (gt id, pred id).
        std::map<PairKey, long long> tpc;
        std::map<int, long long> gcnt, pcnt;
        for (auto [gf, pf] : frames) {
            for (const TargetAnn& g : gf->targets) ++gcnt[g.id];
            for (const TargetAnn& p : pf->targets) ++pcnt[p.id];
            for (const TargetAnn& g : gf->targets)
                for (const TargetAnn& p : pf->targets)
                    if (iou(g.box, p.box) >= alpha) ++tpc[{g.id, p.id}];
        }
        auto a_global = [&](int g, int p) {
            long long t = 0;
            auto it = tpc.find({g, p});
            if (it != tpc.end()) t = it->second;
            double denom = static_cast<double>(gcnt[g] + pcnt[p] - t);
            return denom > 0.0 ? static_cast<double>(t) / denom : 0.0;
        };

        // Pass 2: per-frame matching favoring globally aligned pairs.
        long long tp = 0;
        double ass_sum = 0.0;
        for (auto [gf, pf] : frames) {
            const auto& gts = gf->targets;
            const auto& prs = pf->targets;
            if (gts.empty() || prs.empty()) continue;
            std::vector<std::vector<double>> cost(gts.size(), std::vector<double>(prs.size()));
            for (size_t i = 0; i < gts.size(); ++i)
                for (size_t j = 0; j < prs.size(); ++j) {
                    double s = iou(gts[i].box, prs[j].box);
                    if (s >= alpha)
                        cost[i][j] = 2.0 - a_global(gts[i].id, prs[j].id) - s * 1e-3;
                    else
                        cost[i][j] = 10.0;  // beyond the gate
                }
            Assignment as = hungarian(cost, 5.0);
            for (auto [i, j] : as.matches) {
                ++tp;
                int g = gts[i].id, p = prs[j].id;
                long long t = tpc[{g, p}];
                double denom = static_cast<double>(gcnt[g] + pcnt[p] - t);
                ass_sum += denom > 0.0 ? static_cast<double>(t) / denom : 0.0;
            }
        }
        long long fn = total_gt - tp, fp = total_pred - tp;
        double det_a = static_cast<double>(tp) / static_cast<double>(tp + fn + fp);
        double ass_a = tp ? ass_sum / static_cast<double>(tp) : 0.0;
        sum += std::sqrt(det_a * ass_a);
        ++n_alpha;
    }
    return sum / n_alpha;
}

namespace {

AnnSequence filter_class(const AnnSequence& s, int cls) {
    AnnSequence out;
    for (const FrameAnn& f : s) {
        FrameAnn g;
        g.frame = f.frame;
        for (const TargetAnn& t : f.targets)
            if (t.class_id == cls) g.targets.push_back(t);
        out.push_back(std::move(g));
    }
    return out;
}

}  // namespace

MetricsReport evaluate(const AnnSequence& gt, const AnnSequence& pred, double iou_thresh) {
    MetricsReport r;
    r.clear = clearmot(gt, pred, iou_thresh);
    r.idf1 = idf1(gt, pred, iou_thresh);
    r.hota = hota(gt, pred);
    std::set<int> classes;
    for (const FrameAnn& f : gt)
        for (const TargetAnn& t : f.targets) classes.insert(t.class_id);
    for (int c : classes)
        r.per_class[c] = clearmot(filter_class(gt, c), filter_class(pred, c), iou_thresh);
    return r;
}

std::string format_table(const MetricsReport& r) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4);
    os << std::left << std::setw(8) << "class" << std::right << std::setw(8) << "HOTA"
       << std::setw(8) << "MOTA" << std::setw(8) << "MOTP" << std::setw(8) << "IDF1"
       << std::setw(6) << "IDs" << std::setw(6) << "FP" << std::setw(6) << "FN"
       << std::setw(6) << "MT" << std::setw(6) << "ML" << "\n";
    os << std::left << std::setw(8) << "all" << std::right << std::setw(8) << r.hota
       << std::setw(8) << r.clear.mota << std::setw(8) << r.clear.motp << std::setw(8) << r.idf1
       << std::setw(6) << r.clear.ids << std::setw(6) << r.clear.fp << std::setw(6) << r.clear.fn
       << std::setw(6) << r.clear.mt << std::setw(6) << r.clear.ml << "\n";
    for (const auto& [cls, c] : r.per_class) {
        os << std::left << std::setw(8) << cls << std::right << std::setw(8) << "-"
           << std::setw(8) << c.mota << std::setw(8) << c.motp << std::setw(8) << "-"
           << std::setw(6) << c.ids << std::setw(6) << c.fp << std::setw(6) << c.fn
           << std::setw(6) << c.mt << std::setw(6) << c.ml << "\n";
    }
    return os.str();
}

std::string format_kv(const MetricsReport& r) {
    std::ostringstream os;
    os << std::setprecision(17);
    os << "HOTA " << r.hota << "\n"
       << "MOTA " << r.clear.mota << "\n"
       << "MOTP " << r.clear.motp << "\n"
       << "IDF1 " << r.idf1 << "\n"
       << "IDs " << r.clear.ids << "\n"
       << "FP " << r.clear.fp << "\n"
       << "FN " << r.clear.fn << "\n"
       << "MT " << r.clear.mt << "\n"
       << "ML " << r.clear.ml << "\n"
       << "GT " << r.clear.gt_total << "\n";
    for (const auto& [cls, c] : r.per_class)
        os << "class" << cls << ".MOTA " << c.mota << "\nclass" << cls << ".FP " << c.fp
           << "\nclass" << cls << ".FN " << c.fn << "\nclass" << cls << ".IDs " << c.ids << "\n";
    return os.str();
}

}  // namespace hgt

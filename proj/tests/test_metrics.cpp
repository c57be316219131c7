#include <algorithm>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "doctest.h"
#include "hgt/metrics.hpp"

using namespace hgt;

namespace {

TargetAnn ann(int id, double x, double y, double w = 4, double h = 4, int cls = 1) {
    TargetAnn t;
    t.id = id;
    t.box = Box{x, y, w, h};
    t.class_id = cls;
    return t;
}

/// Independent CLEAR oracle: same continuity convention, but the per-frame
/// matching enumerates every injective gt->pred mapping exhaustively.
struct OracleCounts {
    long long fp = 0, fn = 0, ids = 0;
};

OracleCounts brute_clear(const AnnSequence& gt, const AnnSequence& pred, double thresh) {
    OracleCounts out;
    std::map<int, int> last;
    std::map<int, const FrameAnn*> gmap, pmap;
    std::set<int> frames;
    for (const auto& f : gt) {
        gmap[f.frame] = &f;
        frames.insert(f.frame);
    }
    for (const auto& f : pred) {
        pmap[f.frame] = &f;
        frames.insert(f.frame);
    }
    static const FrameAnn empty;
    for (int fr : frames) {
        const auto& gts = (gmap.count(fr) ? gmap[fr] : &empty)->targets;
        const auto& prs = (pmap.count(fr) ? pmap[fr] : &empty)->targets;
        int n = static_cast<int>(gts.size()), m = static_cast<int>(prs.size());

        std::vector<int> fixed(n, -1);
        std::vector<bool> pused(m, false);
        for (int i = 0; i < n; ++i) {
            auto it = last.find(gts[i].id);
            if (it == last.end()) continue;
            for (int j = 0; j < m; ++j)
                if (!pused[j] && prs[j].id == it->second &&
                    iou(gts[i].box, prs[j].box) >= thresh) {
                    fixed[i] = j;
                    pused[j] = true;
                    break;
                }
        }

        // Exhaustive assignment over the remainder: maximize matches, then
        // minimize total distance.
        std::vector<int> gi, pj;
        for (int i = 0; i < n; ++i)
            if (fixed[i] < 0) gi.push_back(i);
        for (int j = 0; j < m; ++j)
            if (!pused[j]) pj.push_back(j);
        int best_cnt = -1;
        double best_cost = 0.0;
        std::vector<int> best_map;
        int k = static_cast<int>(std::max(gi.size(), pj.size()));
        std::vector<int> perm(k);
        std::iota(perm.begin(), perm.end(), 0);
        do {
            int cnt = 0;
            double cost = 0.0;
            std::vector<int> cur(gi.size(), -1);
            for (size_t a = 0; a < gi.size(); ++a) {
                if (perm[a] >= static_cast<int>(pj.size())) continue;
                double v = iou(gts[gi[a]].box, prs[pj[perm[a]]].box);
                if (v >= thresh) {
                    ++cnt;
                    cost += 1.0 - v;
                    cur[a] = pj[perm[a]];
                }
            }
            if (cnt > best_cnt || (cnt == best_cnt && cost < best_cost - 1e-15)) {
                best_cnt = cnt;
                best_cost = cost;
                best_map = cur;
            }
        } while (std::next_permutation(perm.begin(), perm.end()));

        std::vector<bool> pmatched(m, false);
        int matched = 0;
        auto note = [&](int i, int j) {
            ++matched;
            pmatched[j] = true;
            auto it = last.find(gts[i].id);
            if (it != last.end() && it->second != prs[j].id) ++out.ids;
            last[gts[i].id] = prs[j].id;
        };
        for (int i = 0; i < n; ++i)
            if (fixed[i] >= 0) note(i, fixed[i]);
        for (size_t a = 0; a < gi.size(); ++a)
            if (best_map[a] >= 0) note(gi[a], best_map[a]);
        out.fn += n - matched;
        out.fp += m - matched;
    }
    return out;
}

AnnSequence random_sequence(std::mt19937_64& rng, int max_targets, int frames, bool perturb) {
    std::uniform_real_distribution<double> pos(5.0, 60.0), jit(-3.0, 3.0);
    int n = 1 + static_cast<int>(rng() % max_targets);
    std::vector<Box> base(n);
    for (auto& b : base) b = Box{pos(rng), pos(rng), 6, 6};
    AnnSequence out;
    for (int f = 1; f <= frames; ++f) {
        FrameAnn fa;
        fa.frame = f;
        for (int i = 0; i < n; ++i) {
            if (rng() % 4 == 0) continue;  // dropouts
            double dx = perturb ? jit(rng) : 0.0, dy = perturb ? jit(rng) : 0.0;
            fa.targets.push_back(ann(i + 1, base[i].x + f + dx, base[i].y + dy));
        }
        out.push_back(std::move(fa));
    }
    return out;
}

}  // namespace

TEST_CASE("perfect prediction scores perfectly") {
    AnnSequence gt;
    for (int f = 1; f <= 5; ++f) {
        FrameAnn fa;
        fa.frame = f;
        fa.targets = {ann(1, 10.0 + f, 10), ann(2, 30, 30.0 + f)};
        gt.push_back(fa);
    }
    ClearmotReport r = clearmot(gt, gt, 0.3);
    CHECK(r.mota == doctest::Approx(1.0));
    CHECK(r.motp == doctest::Approx(1.0));
    CHECK(r.fp == 0);
    CHECK(r.fn == 0);
    CHECK(r.ids == 0);
    CHECK(r.mt == 2);
    CHECK(r.ml == 0);
    CHECK(idf1(gt, gt, 0.3) == doctest::Approx(1.0));
    CHECK(hota(gt, gt) == doctest::Approx(1.0));
}

TEST_CASE("hand-counted CLEAR case gives MOTA 0.6") {
    AnnSequence gt, pred;
    for (int f = 1; f <= 5; ++f) {
        FrameAnn g;
        g.frame = f;
        g.targets = {ann(1, 10, 10), ann(2, 30, 30)};
        gt.push_back(g);

        FrameAnn p;
        p.frame = f;
        p.targets.push_back(ann(f <= 2 ? 7 : 8, 10, 10));  // one switch on target 1
        if (f <= 3) p.targets.push_back(ann(9, 30, 30));    // misses frames 4-5
        if (f == 2) p.targets.push_back(ann(11, 55, 55));   // one false positive
        pred.push_back(p);
    }
    ClearmotReport r = clearmot(gt, pred, 0.3);
    CHECK(r.gt_total == 10);
    CHECK(r.fp == 1);
    CHECK(r.fn == 2);
    CHECK(r.ids == 1);
    CHECK(r.mota == doctest::Approx(0.6));
}

TEST_CASE("empty prediction") {
    AnnSequence gt;
    FrameAnn f;
    f.frame = 1;
    f.targets = {ann(1, 10, 10), ann(2, 30, 30)};
    gt.push_back(f);
    ClearmotReport r = clearmot(gt, {}, 0.3);
    CHECK(r.fn == 2);
    CHECK(r.mota == doctest::Approx(0.0));
    CHECK(idf1(gt, {}, 0.3) == doctest::Approx(0.0));
    CHECK(hota(gt, {}) == doctest::Approx(0.0));
}

TEST_CASE("clearmot counts equal the exhaustive oracle") {
    std::mt19937_64 rng(99);
    for (int it = 0; it < 100; ++it) {
        AnnSequence gt = random_sequence(rng, 4, 1 + static_cast<int>(rng() % 6), false);
        AnnSequence pred = random_sequence(rng, 4, static_cast<int>(gt.size()), true);
        ClearmotReport r = clearmot(gt, pred, 0.3);
        OracleCounts o = brute_clear(gt, pred, 0.3);
        CHECK(r.fp == o.fp);
        CHECK(r.fn == o.fn);
        CHECK(r.ids == o.ids);
    }
}

TEST_CASE("idf1 split trajectory is one half") {
    AnnSequence gt, pred;
    for (int f = 1; f <= 4; ++f) {
        FrameAnn g;
        g.frame = f;
        g.targets = {ann(1, 20, 20)};
        gt.push_back(g);
        FrameAnn p;
        p.frame = f;
        p.targets = {ann(f <= 2 ? 5 : 6, 20, 20)};
        pred.push_back(p);
    }
    CHECK(idf1(gt, pred, 0.3) == doctest::Approx(0.5));
}

TEST_CASE("an injected id switch cannot raise MOTA") {
    AnnSequence gt, clean, switched;
    for (int f = 1; f <= 6; ++f) {
        FrameAnn g;
        g.frame = f;
        g.targets = {ann(1, 15.0 + f, 15)};
        gt.push_back(g);
        FrameAnn c = g;
        clean.push_back(c);
        FrameAnn s;
        s.frame = f;
        s.targets = {ann(f <= 3 ? 1 : 2, 15.0 + f, 15)};
        switched.push_back(s);
    }
    CHECK(clearmot(gt, switched, 0.3).mota < clearmot(gt, clean, 0.3).mota);
    CHECK(clearmot(gt, switched, 0.3).ids == 1);
}

TEST_CASE("metrics are invariant under bijective id relabeling") {
    std::mt19937_64 rng(5);
    AnnSequence gt = random_sequence(rng, 3, 5, false);
    AnnSequence pred = random_sequence(rng, 3, 5, true);
    AnnSequence relabeled = pred;
    for (FrameAnn& f : relabeled)
        for (TargetAnn& t : f.targets) t.id = t.id * 31 + 1000;
    MetricsReport a = evaluate(gt, pred, 0.3);
    MetricsReport b = evaluate(gt, relabeled, 0.3);
    CHECK(a.clear.mota == b.clear.mota);
    CHECK(a.clear.ids == b.clear.ids);
    CHECK(a.idf1 == doctest::Approx(b.idf1).epsilon(1e-12));
    CHECK(a.hota == doctest::Approx(b.hota).epsilon(1e-12));
}

TEST_CASE("hota single perfect frame") {
    AnnSequence gt{{1, {ann(1, 10, 10)}}};
    AnnSequence pred{{1, {ann(3, 10, 10)}}};
    CHECK(hota(gt, pred) == doctest::Approx(1.0));
}

TEST_CASE("sequence validation") {
    AnnSequence bad{{1, {ann(1, 10, 10), ann(1, 12, 12)}}};
    CHECK_THROWS_AS(clearmot(bad, {}, 0.3), MetricsError);
    AnnSequence unordered{{2, {}}, {1, {}}};
    CHECK_THROWS_AS(clearmot(unordered, {}, 0.3), MetricsError);
}

TEST_CASE("report formatting") {
    AnnSequence gt{{1, {ann(1, 10, 10, 4, 4, 2)}}};
    MetricsReport r = evaluate(gt, gt, 0.3);
    std::string table = format_table(r);
    CHECK(table.find("MOTA") != std::string::npos);
    CHECK(table.find("all") != std::string::npos);
    std::string kv = format_kv(r);
    CHECK(kv.find("MOTA 1\n") != std::string::npos);
    CHECK(kv.find("class2.MOTA 1\n") != std::string::npos);
    CHECK(r.per_class.count(2) == 1);
}

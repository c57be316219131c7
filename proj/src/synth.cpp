#include "hgt/synth.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <random>
#include <sstream>

namespace hgt {

namespace {

std::vector<std::string> tokens(const std::string& line) {
    std::istringstream is(line);
    std::vector<std::string> out;
    std::string t;
    while (is >> t) out.push_back(t);
    return out;
}

/// "k=v" token list starting after the line keyword.
std::map<std::string, std::string> kv_of(const std::vector<std::string>& toks,
                                         const std::string& ctx) {
    std::map<std::string, std::string> out;
    for (size_t i = 1; i < toks.size(); ++i) {
        auto eq = toks[i].find('=');
        if (eq == std::string::npos || eq == 0)
            throw IoError("scenario " + ctx + ": expected key=value, got '" + toks[i] + "'");
        out[toks[i].substr(0, eq)] = toks[i].substr(eq + 1);
    }
    return out;
}

double num_of(const std::map<std::string, std::string>& kv, const std::string& key,
              const std::string& ctx, double fallback, bool required = false) {
    auto it = kv.find(key);
    if (it == kv.end()) {
        if (required) throw IoError("scenario " + ctx + ": missing key '" + key + "'");
        return fallback;
    }
    size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(it->second, &pos);
    } catch (const std::exception&) {
        pos = std::string::npos;
    }
    if (pos != it->second.size())
        throw IoError("scenario " + ctx + ": bad value for key '" + key + "'");
    return v;
}

Vec2 vec_of(const std::map<std::string, std::string>& kv, const std::string& key,
            const std::string& ctx, Vec2 fallback) {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    auto comma = it->second.find(',');
    if (comma == std::string::npos)
        throw IoError("scenario " + ctx + ": bad value for key '" + key + "'");
    std::map<std::string, std::string> tmp{{"a", it->second.substr(0, comma)},
                                           {"b", it->second.substr(comma + 1)}};
    return Vec2{num_of(tmp, "a", ctx + " key '" + key + "'", 0, true),
                num_of(tmp, "b", ctx + " key '" + key + "'", 0, true)};
}

Window window_of(const std::map<std::string, std::string>& kv, const std::string& ctx,
                 bool has_mod, double default_scale) {
    Window w;
    w.from = static_cast<int>(num_of(kv, "from", ctx, 0, true));
    w.to = static_cast<int>(num_of(kv, "to", ctx, 0, true));
    w.target = static_cast<int>(num_of(kv, "target", ctx, 0, true));
    w.scale = num_of(kv, "scale", ctx, default_scale);
    if (has_mod) {
        auto it = kv.find("mod");
        if (it == kv.end()) throw IoError("scenario " + ctx + ": missing key 'mod'");
        if (it->second == "V") w.modality = Mod::V;
        else if (it->second == "T") w.modality = Mod::T;
        else throw IoError("scenario " + ctx + ": bad value for key 'mod'");
    }
    return w;
}

std::string fmt(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

bool covers(const Window& w, int target, int frame) {
    return w.target == target && w.from <= frame && frame <= w.to;
}

}  // namespace

ScenarioSpec ScenarioSpec::parse(const std::string& text) {
    ScenarioSpec s;
    s.targets.clear();
    std::istringstream is(text);
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        auto toks = tokens(line);
        if (toks.empty() || toks[0][0] == '#') continue;
        std::string ctx = "line " + std::to_string(line_no);
        const std::string& key = toks[0];
        if (key == "seed" || key == "duration" || key == "size" || key == "cm") {
            std::map<std::string, std::string> one;
            for (size_t i = 1; i < toks.size(); ++i) one["arg" + std::to_string(i)] = toks[i];
            if (key == "seed")
                s.seed = static_cast<unsigned>(num_of(one, "arg1", ctx, 0, true));
            else if (key == "duration")
                s.duration = static_cast<int>(num_of(one, "arg1", ctx, 0, true));
            else if (key == "size") {
                s.width = static_cast<int>(num_of(one, "arg1", ctx, 0, true));
                s.height = static_cast<int>(num_of(one, "arg2", ctx, 0, true));
            } else {
                s.cm_drift = Vec2{num_of(one, "arg1", ctx, 0, true),
                                  num_of(one, "arg2", ctx, 0, true)};
            }
        } else if (key == "tag") {
            if (toks.size() != 2) throw IoError("scenario " + ctx + ": tag wants one name");
            s.tags.push_back(toks[1]);
        } else if (key == "target") {
            auto kv = kv_of(toks, ctx);
            TargetScript t;
            t.class_id = static_cast<int>(num_of(kv, "class", ctx, t.class_id));
            t.spawn = static_cast<int>(num_of(kv, "spawn", ctx, t.spawn));
            t.despawn = static_cast<int>(num_of(kv, "despawn", ctx, 0, true));
            auto tr = kv.find("traj");
            if (tr != kv.end()) {
                if (tr->second == "linear") t.traj = Traj::Linear;
                else if (tr->second == "circular") t.traj = Traj::Circular;
                else if (tr->second == "walk") t.traj = Traj::RandomWalk;
                else throw IoError("scenario " + ctx + ": bad value for key 'traj'");
            }
            t.start = vec_of(kv, "start", ctx, t.start);
            t.vel = vec_of(kv, "vel", ctx, t.vel);
            t.orbit_r = num_of(kv, "orbit", ctx, t.orbit_r);
            t.omega = num_of(kv, "omega", ctx, t.omega);
            t.walk_sigma = num_of(kv, "sigma", ctx, t.walk_sigma);
            Vec2 sz = vec_of(kv, "size", ctx, Vec2{t.w, t.h});
            t.w = sz.x;
            t.h = sz.y;
            Vec2 con = vec_of(kv, "contrast", ctx, Vec2{t.contrast_v, t.contrast_t});
            t.contrast_v = con.x;
            t.contrast_t = con.y;
            Vec2 sc = vec_of(kv, "score", ctx, Vec2{t.score_v, t.score_t});
            t.score_v = sc.x;
            t.score_t = sc.y;
            s.targets.push_back(t);
        } else if (key == "mm") {
            s.mm.push_back(window_of(kv_of(toks, ctx), ctx, true, 0.0));
        } else if (key == "occ") {
            s.occ.push_back(window_of(kv_of(toks, ctx), ctx, true, 0.5));
        } else if (key == "tc") {
            s.tc.push_back(window_of(kv_of(toks, ctx), ctx, false, 0.0));
        } else if (key == "li") {
            s.li.push_back(window_of(kv_of(toks, ctx), ctx, false, 0.2));
        } else {
            throw IoError("scenario " + ctx + ": unknown key '" + key + "'");
        }
    }
    s.check();
    return s;
}

std::string ScenarioSpec::serialize() const {
    std::ostringstream os;
    os << "seed " << seed << "\n"
       << "duration " << duration << "\n"
       << "size " << width << " " << height << "\n";
    if (cm_drift.x != 0.0 || cm_drift.y != 0.0)
        os << "cm " << fmt(cm_drift.x) << " " << fmt(cm_drift.y) << "\n";
    for (const std::string& t : tags) os << "tag " << t << "\n";
    for (const TargetScript& t : targets) {
        os << "target class=" << t.class_id << " spawn=" << t.spawn << " despawn=" << t.despawn
           << " traj="
           << (t.traj == Traj::Linear ? "linear"
                                      : t.traj == Traj::Circular ? "circular" : "walk")
           << " start=" << fmt(t.start.x) << "," << fmt(t.start.y) << " vel=" << fmt(t.vel.x)
           << "," << fmt(t.vel.y) << " orbit=" << fmt(t.orbit_r) << " omega=" << fmt(t.omega)
           << " sigma=" << fmt(t.walk_sigma) << " size=" << fmt(t.w) << "," << fmt(t.h)
           << " contrast=" << fmt(t.contrast_v) << "," << fmt(t.contrast_t)
           << " score=" << fmt(t.score_v) << "," << fmt(t.score_t) << "\n";
    }
    auto win = [&](const char* kw, const Window& w, bool has_mod, bool has_scale) {
        os << kw << " from=" << w.from << " to=" << w.to << " target=" << w.target;
        if (has_mod) os << " mod=" << name(w.modality);
        if (has_scale) os << " scale=" << fmt(w.scale);
        os << "\n";
    };
    for (const Window& w : mm) win("mm", w, true, false);
    for (const Window& w : occ) win("occ", w, true, true);
    for (const Window& w : tc) win("tc", w, false, false);
    for (const Window& w : li) win("li", w, false, true);
    return os.str();
}

void ScenarioSpec::check() const {
    if (duration < 1) throw IoError("scenario: duration must be >= 1");
    if (width < 8 || height < 8) throw IoError("scenario: size must be at least 8x8");
    for (size_t i = 0; i < targets.size(); ++i) {
        const TargetScript& t = targets[i];
        std::string ctx = "target " + std::to_string(i);
        if (t.class_id < 1 || t.class_id > 7)
            throw IoError("scenario " + ctx + ": class must be 1..7");
        if (t.spawn < 1 || t.despawn < t.spawn || t.despawn > duration)
            throw IoError("scenario " + ctx + ": bad spawn/despawn window");
        if (t.w <= 0.0 || t.h <= 0.0) throw IoError("scenario " + ctx + ": size must be positive");
    }
    auto check_wins = [&](const std::vector<Window>& ws, const char* kw) {
        for (size_t i = 0; i < ws.size(); ++i) {
            const Window& w = ws[i];
            std::string ctx = std::string(kw) + " window " + std::to_string(i);
            if (w.from < 1 || w.to < w.from || w.to > duration)
                throw IoError("scenario " + ctx + ": bad from/to range");
            if (w.target < 0 || w.target >= static_cast<int>(targets.size()))
                throw IoError("scenario " + ctx + ": target index out of range");
            if (w.scale < 0.0 || w.scale > 1.0)
                throw IoError("scenario " + ctx + ": scale must be in [0,1]");
        }
    };
    check_wins(mm, "mm");
    check_wins(occ, "occ");
    check_wins(tc, "tc");
    check_wins(li, "li");
}

SynthResult synth(const ScenarioSpec& spec) {
    spec.check();
    SynthResult r;
    r.spec = spec;
    const int W = spec.width, H = spec.height, F = spec.duration;
    const int n = static_cast<int>(spec.targets.size());

    // Trajectories first, sequentially per target, so rendering order can't
    // disturb the random stream.
    std::vector<std::vector<Vec2>> track(n);
    for (int i = 0; i < n; ++i) {
        const TargetScript& t = spec.targets[i];
        std::mt19937_64 rng(spec.seed * 1315423911ull + static_cast<unsigned long long>(i) + 1);
        std::normal_distribution<double> step(0.0, t.walk_sigma);
        Vec2 walk = t.start;
        for (int f = t.spawn; f <= t.despawn; ++f) {
            int k = f - t.spawn;
            Vec2 p;
            switch (t.traj) {
                case Traj::Linear:
                    p = Vec2{t.start.x + t.vel.x * k, t.start.y + t.vel.y * k};
                    break;
                case Traj::Circular:
                    p = Vec2{t.start.x + t.orbit_r * std::cos(t.omega * k),
                             t.start.y + t.orbit_r * std::sin(t.omega * k)};
                    break;
                case Traj::RandomWalk:
                    if (k > 0) {
                        walk.x += step(rng);
                        walk.y += step(rng);
                    }
                    p = walk;
                    break;
            }
            p.x += spec.cm_drift.x * (f - 1);
            p.y += spec.cm_drift.y * (f - 1);
            p.x = std::clamp(p.x, t.w / 2.0, std::max(t.w / 2.0, W - t.w / 2.0));
            p.y = std::clamp(p.y, t.h / 2.0, std::max(t.h / 2.0, H - t.h / 2.0));
            track[i].push_back(p);
        }
    }

    std::mt19937_64 noise_rng(spec.seed ^ 0x9e3779b97f4a7c15ull);
    std::normal_distribution<double> noise(0.0, 0.01);

    for (int f = 1; f <= F; ++f) {
        std::vector<double> img_t(static_cast<size_t>(H) * W, 0.08);
        std::vector<double> img_v(static_cast<size_t>(H) * W * 3, 0.10);
        FrameAnn gv, gt;
        gv.frame = gt.frame = f;

        for (int i = 0; i < n; ++i) {
            const TargetScript& t = spec.targets[i];
            if (f < t.spawn || f > t.despawn) continue;
            Vec2 p = track[i][f - t.spawn];

            for (Mod m : {Mod::V, Mod::T}) {
                bool dropped = false;
                for (const Window& w : spec.mm)
                    if (w.modality == m && covers(w, i, f)) dropped = true;
                if (dropped) continue;

                double contrast = m == Mod::V ? t.contrast_v : t.contrast_t;
                double conf = m == Mod::V ? t.score_v : t.score_t;
                double vis = 1.0;
                for (const Window& w : spec.occ)
                    if (w.modality == m && covers(w, i, f)) {
                        conf *= w.scale;
                        vis = std::min(vis, w.scale);
                    }
                if (m == Mod::T)
                    for (const Window& w : spec.tc)
                        if (covers(w, i, f)) {
                            contrast = 0.05;
                            conf = std::min(conf, 0.05);
                        }
                if (m == Mod::V)
                    for (const Window& w : spec.li)
                        if (covers(w, i, f)) contrast *= w.scale;

                // Gaussian blob, sigma tied to the box so tiny targets stay tiny.
                double sigma = std::max(0.75, std::min(t.w, t.h) / 4.0);
                double amp = 0.8 * contrast;
                int x0 = std::max(0, static_cast<int>(std::floor(p.x - t.w)));
                int x1 = std::min(W - 1, static_cast<int>(std::ceil(p.x + t.w)));
                int y0 = std::max(0, static_cast<int>(std::floor(p.y - t.h)));
                int y1 = std::min(H - 1, static_cast<int>(std::ceil(p.y + t.h)));
                for (int y = y0; y <= y1; ++y)
                    for (int x = x0; x <= x1; ++x) {
                        double d2 = (x - p.x) * (x - p.x) + (y - p.y) * (y - p.y);
                        double g = amp * std::exp(-d2 / (2.0 * sigma * sigma));
                        if (m == Mod::T) {
                            img_t[static_cast<size_t>(y) * W + x] += g;
                        } else {
                            size_t base = (static_cast<size_t>(y) * W + x) * 3;
                            img_v[base + 0] += g;
                            img_v[base + 1] += g * 0.9;
                            img_v[base + 2] += g * 0.8;
                        }
                    }

                TargetAnn a;
                a.id = i + 1;
                a.box = Box{p.x, p.y, t.w, t.h};
                a.class_id = t.class_id;
                a.conf = conf;
                a.visibility = vis;
                (m == Mod::V ? gv : gt).targets.push_back(a);
            }
        }

        for (double& v : img_t) v = std::clamp(v + noise(noise_rng), 0.0, 1.0);
        for (double& v : img_v) v = std::clamp(v + noise(noise_rng), 0.0, 1.0);
        r.frames_t.emplace_back(std::vector<int>{H, W, 1}, std::move(img_t));
        r.frames_v.emplace_back(std::vector<int>{H, W, 3}, std::move(img_v));
        r.gt_v.push_back(std::move(gv));
        r.gt_t.push_back(std::move(gt));
    }
    return r;
}

SequenceManifest write_sequence(const SynthResult& r, const std::string& out_dir,
                                const std::string& name) {
    std::string dir = out_dir + "/" + name;
    const int F = static_cast<int>(r.frames_t.size());
    for (int f = 0; f < F; ++f) {
        std::ostringstream fn;
        fn << std::setw(6) << std::setfill('0') << (f + 1) << ".pgm";
        write_pgm(r.frames_t[f], dir + "/t/" + fn.str());
        // Visible stored as luminance; the loader replicates it to 3 channels.
        const Tensor& v = r.frames_v[f];
        int h = v.dim(0), w = v.dim(1);
        std::vector<double> lum(static_cast<size_t>(h) * w);
        for (size_t i = 0; i < lum.size(); ++i)
            lum[i] = (v.data()[i * 3] + v.data()[i * 3 + 1] + v.data()[i * 3 + 2]) / 3.0;
        write_pgm(Tensor({h, w, 1}, std::move(lum)), dir + "/v/" + fn.str());
    }
    write_mot(r.gt_v, dir + "/gt_v.txt");
    write_mot(r.gt_t, dir + "/gt_t.txt");
    write_file(dir + "/scenario.txt", r.spec.serialize());

    SequenceManifest m;
    m.name = name;
    m.frames = F;
    m.width = r.spec.width;
    m.height = r.spec.height;
    m.frames_v = "v";
    m.frames_t = "t";
    m.gt_v = "gt_v.txt";
    m.gt_t = "gt_t.txt";
    m.tags = r.spec.tags;
    m.save(dir + "/manifest.txt");
    return m;
}

}  // namespace hgt

#pragma once

#include <string>
#include <vector>

#include "hgt/io.hpp"

namespace hgt {

enum class Traj { Linear, Circular, RandomWalk };

struct TargetScript {
    int class_id = 1;  // 1..7
    int spawn = 1;
    int despawn = 1;  // inclusive
    Traj traj = Traj::Linear;
    Vec2 start{10, 10};
    Vec2 vel{0, 0};       // linear: pixels per frame
    double orbit_r = 8;   // circular
    double omega = 0.2;   // circular: radians per frame
    double walk_sigma = 1.0;
    double w = 6, h = 6;
    double contrast_v = 1.0, contrast_t = 1.0;
    double score_v = 1.0, score_t = 1.0;  // scripted detection confidence
};

/// Challenge window over frames [from, to] (inclusive) for one target.
struct Window {
    int from = 1;
    int to = 1;
    int target = 0;        // index into ScenarioSpec::targets
    Mod modality = Mod::V; // for mm/occ/li windows
    double scale = 0.5;    // occ confidence scale
};

struct ScenarioSpec {
    unsigned seed = 1;
    int duration = 30;
    int width = 64, height = 64;
    std::vector<TargetScript> targets;
    std::vector<Window> mm;   // modality mismatch: drop the target there
    std::vector<Window> occ;  // occlusion: confidence scaled down
    std::vector<Window> tc;   // thermal crossover: thermal contrast and score to 0.05
    std::vector<Window> li;   // low illumination: visible contrast scaled
    Vec2 cm_drift{0, 0};      // camera motion per frame, applied globally
    std::vector<std::string> tags;

    static ScenarioSpec parse(const std::string& text);
    std::string serialize() const;
    void check() const;
};

struct SynthResult {
    ScenarioSpec spec;
    std::vector<Tensor> frames_v;  // (h, w, 3)
    std::vector<Tensor> frames_t;  // (h, w, 1)
    AnnSequence gt_v, gt_t;        // conf carries the scripted score
};

/// Deterministic under spec.seed.
SynthResult synth(const ScenarioSpec& spec);

/// Writes frames (PGM), both annotation files and a manifest under out_dir.
SequenceManifest write_sequence(const SynthResult& r, const std::string& out_dir,
                                const std::string& name);

}  // namespace hgt

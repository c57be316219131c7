#pragma once

#include <array>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hgt/metrics.hpp"
#include "hgt/net.hpp"
#include "hgt/synth.hpp"

namespace hgt {

class TrackerError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Per-target cross-modal state: one global identity, per-modality boxes and
/// the four-valued visibility variable q.
struct TargetState {
    int global_id = 0;
    std::array<std::optional<Box>, 2> box;  // indexed by Mod
    Visibility q = Visibility::None;
    int class_id = 1;
    std::array<std::vector<double>, 2> features;  // last tracking feature
    int consec_hits = 0;
    std::array<int, 2> lost_frames{0, 0};
    bool ever_both = false;
    std::array<Vec2, 2> pred_offset{};  // motion prediction feeding next-frame nodes
};

enum class TrackState { Tentative, Active, Lost, Terminated };

struct Tracklet {
    TrackState state = TrackState::Tentative;
    TargetState target;
    struct HistEntry {
        int frame = 0;
        std::array<std::optional<Box>, 2> box;
    };
    std::vector<HistEntry> history;
};

struct TrackerConfig {
    double det_threshold = 0.4;
    double radius_d = 20.0;  // association graph radius, finest-grid units
    bool redet_enabled = true;
    enum class RedetMode { Affinity, Heatmap };
    RedetMode redet_mode = RedetMode::Affinity;
    double iou_tau = 0.3;
    double search_expand = 1.2;
    double min_affinity = 0.5;
    int max_lost = 20;
    int init_hits = 3;
    int max_k = 128;

    void check() const;
};

/// Relaxed re-detection threshold, driven by the other modality's confidence.
double redet_threshold(double det_threshold, double c_other);

struct StepInput {
    int frame = 1;
    Tensor frame_v, frame_t;  // consumed by the network perception
};

/// What one frame of perception yields: candidate detections at a low score
/// floor (the tracker applies det_threshold itself and keeps the rest as
/// re-detection candidates), heatmaps, and per-track updates. All geometry in
/// pixels.
struct Observation {
    std::array<std::vector<Detection>, 2> dets;
    std::array<FeatMap, 2> heat;  // channel-max class heatmap, grid units
    double px_per_cell = 1.0;
    std::array<std::vector<std::vector<double>>, 2> trk_updated;  // per input track
    std::array<std::vector<Vec2>, 2> trk_offsets;  // predicted motion, pixels
};

class Perception {
public:
    virtual ~Perception() = default;
    /// trk_pos/trk_feats are per modality, aligned; outputs align with them.
    virtual Observation observe(const StepInput& in,
                                const std::array<std::vector<Vec2>, 2>& trk_pos,
                                const std::array<std::vector<std::vector<double>>, 2>& trk_feats)
        = 0;
    /// (tracks x detections) affinity in [0,1].
    virtual std::vector<std::vector<double>> affinity_matrix(
        Mod m, const std::vector<std::vector<double>>& trk_feats,
        const std::vector<Detection>& dets)
        = 0;
};

/// Runs the full model: embed/encode/decode, peak extraction at a relaxed
/// floor, decoder track updates and the learned affinity head.
class NetworkPerception : public Perception {
public:
    NetworkPerception(const Model& model, const TrackerConfig& cfg, double candidate_floor = 0.05);
    Observation observe(const StepInput& in, const std::array<std::vector<Vec2>, 2>& trk_pos,
                        const std::array<std::vector<std::vector<double>>, 2>& trk_feats) override;
    std::vector<std::vector<double>> affinity_matrix(
        Mod m, const std::vector<std::vector<double>>& trk_feats,
        const std::vector<Detection>& dets) override;

private:
    const Model& model_;
    TrackerConfig cfg_;
    double floor_;
};

/// Test harness perception: serves scripted ground truth as detections and an
/// identity oracle as affinity (0.99 same target, 0.01 otherwise). Features
/// carry the provenance id.
class SyntheticOraclePerception : public Perception {
public:
    SyntheticOraclePerception(const SynthResult& seq, int grid_ratio = 4);
    Observation observe(const StepInput& in, const std::array<std::vector<Vec2>, 2>& trk_pos,
                        const std::array<std::vector<std::vector<double>>, 2>& trk_feats) override;
    std::vector<std::vector<double>> affinity_matrix(
        Mod m, const std::vector<std::vector<double>>& trk_feats,
        const std::vector<Detection>& dets) override;

private:
    const SynthResult& seq_;
    int r_;
};

class Tracker {
public:
    Tracker(Perception& perception, const TrackerConfig& cfg);

    void step(const StepInput& in);

    const std::vector<Tracklet>& tracks() const { return tracks_; }
    const AnnSequence& results(Mod m) const { return results_[idx(m)]; }
    const std::vector<std::string>& events() const { return events_; }

private:
    Perception& perception_;
    TrackerConfig cfg_;
    std::vector<Tracklet> tracks_;
    std::array<AnnSequence, 2> results_;
    std::vector<std::string> events_;
    int next_id_ = 1;
    int last_frame_ = 0;
};

}  // namespace hgt

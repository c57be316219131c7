#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "hgt/assoc.hpp"

namespace hgt {

class MetricsError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TargetAnn {
    int id = 0;
    Box box;
    int class_id = 1;
    double conf = 1.0;
    double visibility = 1.0;
};

struct FrameAnn {
    int frame = 1;  // 1-based
    std::vector<TargetAnn> targets;
};

/// Sorted by frame, one entry per frame, ids unique within a frame.
using AnnSequence = std::vector<FrameAnn>;

struct ClearmotReport {
    double mota = 0.0;
    double motp = 0.0;
    long long fp = 0;
    long long fn = 0;
    long long ids = 0;
    long long gt_total = 0;
    long long matches = 0;
    int mt = 0;
    int ml = 0;
};

/// CLEAR-MOT with the continuity convention: previous correspondences are
/// carried while still above the IoU threshold, remaining pairs matched by
/// Hungarian on 1 - IoU.
ClearmotReport clearmot(const AnnSequence& gt, const AnnSequence& pred, double iou_thresh);

double idf1(const AnnSequence& gt, const AnnSequence& pred, double iou_thresh);

/// Standard HOTA over alpha in {0.05 .. 0.95 step 0.05}.
double hota(const AnnSequence& gt, const AnnSequence& pred);

struct MetricsReport {
    double hota = 0.0;
    double idf1 = 0.0;
    ClearmotReport clear;
    std::map<int, ClearmotReport> per_class;
};

MetricsReport evaluate(const AnnSequence& gt, const AnnSequence& pred, double iou_thresh);

/// Human-readable aligned table.
std::string format_table(const MetricsReport& r);
/// Machine-readable "key value" lines.
std::string format_kv(const MetricsReport& r);

}  // namespace hgt

#pragma once

#include <optional>
#include <stdexcept>
#include <vector>

#include "hgt/common.hpp"

namespace hgt {

class AssocError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Axis-aligned box, center representation, pixel units.
struct Box {
    double x = 0.0;
    double y = 0.0;
    double w = 1.0;
    double h = 1.0;

    bool valid() const { return w > 0.0 && h > 0.0; }
    double left() const { return x - w / 2.0; }
    double top() const { return y - h / 2.0; }
    double right() const { return x + w / 2.0; }
    double bottom() const { return y + h / 2.0; }
};

struct Detection {
    Box box;
    double score = 1.0;
    int class_id = 1;
    Mod modality = Mod::V;
    std::vector<double> feature;  // detection-query row, may be empty
    int truth_id = -1;            // synthetic provenance tag, -1 when unknown
};

struct Assignment {
    std::vector<std::pair<int, int>> matches;  // (row, col)
    std::vector<int> unmatched_rows;
    std::vector<int> unmatched_cols;
};

enum class Visibility { Both, VOnly, TOnly, None };

struct CrossModalResult {
    Assignment assignment;  // rows: thermal detections, cols: visible detections
    std::vector<Visibility> thermal_labels;
    std::vector<Visibility> visible_labels;
};

double iou(const Box& a, const Box& b);

/// Minimum-total-cost assignment over pairs with cost < gate. Rectangular
/// matrices leave extras unmatched; ties resolve deterministically with
/// preference for low (row, col). ncols_hint supplies the column count when
/// the matrix has no rows.
Assignment hungarian(const std::vector<std::vector<double>>& cost, double gate,
                     int ncols_hint = 0);

/// Cross-modal detection matching on IoU distance, gate 1 (IoU must exceed 0).
CrossModalResult cross_modal_match(const std::vector<Detection>& thermal,
                                   const std::vector<Detection>& visible);

/// Detection-tracklet assignment from an affinity matrix in [0,1].
Assignment associate(const std::vector<std::vector<double>>& affinity, double min_affinity,
                     int num_tracks_hint = 0);

}  // namespace hgt

#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hgt/metrics.hpp"
#include "hgt/tensor.hpp"

namespace hgt {

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---- MOTChallenge annotations ----------------------------------------------
// Line format: frame,id,bb_left,bb_top,bb_width,bb_height,conf,class,visibility
// Files store top-left corners; the in-memory representation uses centers.

AnnSequence parse_mot_text(const std::string& text, const std::string& origin);
AnnSequence parse_mot(const std::string& path);
std::string format_mot(const AnnSequence& seq);
void write_mot(const AnnSequence& seq, const std::string& path);

// ---- checkpoint container --------------------------------------------------
// Binary records {name, u32 shape list, little-endian f64 data}; bit-exact
// round trip.

void checkpoint_save(const std::vector<std::pair<std::string, Tensor>>& tensors,
                     const std::string& path);
std::vector<std::pair<std::string, Tensor>> checkpoint_load(const std::string& path);

/// Copies loaded data into existing parameter tensors by name; throws listing
/// missing and extra names, or on any shape mismatch.
void load_into(const std::vector<std::pair<std::string, Tensor>>& params,
               const std::vector<std::pair<std::string, Tensor>>& loaded);

// ---- sequence manifest -----------------------------------------------------

struct SequenceManifest {
    std::string name = "seq";
    int frames = 0;
    int width = 0;
    int height = 0;
    double fps = 15.0;
    std::string frames_v, frames_t;  // image directories, relative to the manifest
    std::string gt_v, gt_t;          // annotation files, relative to the manifest
    std::vector<std::string> tags;

    static SequenceManifest load(const std::string& path);
    void save(const std::string& path) const;
    /// Directory containing a manifest file path.
    static std::string dir_of(const std::string& path);
};

// ---- tiny image plumbing ---------------------------------------------------

/// 8-bit binary PGM; values scaled from [0,1] (clamped).
void write_pgm(const Tensor& gray, const std::string& path);  // (h,w,1)
Tensor read_pgm(const std::string& path);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

}  // namespace hgt

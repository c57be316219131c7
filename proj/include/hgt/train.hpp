#pragma once

#include <string>
#include <vector>

#include "hgt/losses.hpp"
#include "hgt/net.hpp"
#include "hgt/synth.hpp"

namespace hgt {

/// Supervised losses for one frame pair (frame-1 feeds the tracking nodes,
/// frame supplies the targets), both modalities summed. frame is 1-based, >= 2.
LossComponents frame_losses(const Model& m, const SynthResult& seq, int frame,
                            double radius = 20.0);

struct TrainResult {
    std::vector<double> curve;  // loss per step
    bool diverged = false;      // hit a non-finite loss; curve holds finite steps only
    int steps_run = 0;
};

/// SGD-with-momentum loop cycling over the sequence's frame pairs. Writes one
/// "step loss" line per step to curve_path when given; on completion (or on
/// divergence, with the last finite weights) saves ckpt_path when given.
TrainResult train(Model& m, const SynthResult& seq, int steps, double lr,
                  double momentum = 0.9, const LossWeights& w = LossWeights{},
                  const std::string& curve_path = "", const std::string& ckpt_path = "",
                  double radius = 20.0);

}  // namespace hgt

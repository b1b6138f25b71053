#pragma once

#include <optional>

#include "ctxfeat/gridcore/grid.h"

namespace ctxfeat {

// Every op records a backward rule on `tape` when at least one input requires
// a gradient; otherwise it is a plain forward computation.

// Stride-1 cross-correlation with zero padding.
// input C x H x W, weights O x C x K x K, bias O -> O x H' x W'.
Grid Conv2d(Tape& tape, const Grid& input, const Grid& weights,
            const Grid& bias, int padding);

enum class ElementwiseOp { kMultiply, kAdd, kSquare, kSigmoid };

// Binary ops take equal shapes, or `b` of shape 1 x H x W broadcast over the
// channels of a C x H x W `a`.
Grid Elementwise(Tape& tape, ElementwiseOp op, const Grid& a,
                 const std::optional<Grid>& b = std::nullopt);

inline Grid Multiply(Tape& tape, const Grid& a, const Grid& b) {
  return Elementwise(tape, ElementwiseOp::kMultiply, a, b);
}
inline Grid Add(Tape& tape, const Grid& a, const Grid& b) {
  return Elementwise(tape, ElementwiseOp::kAdd, a, b);
}
inline Grid Square(Tape& tape, const Grid& a) {
  return Elementwise(tape, ElementwiseOp::kSquare, a);
}
inline Grid Sigmoid(Tape& tape, const Grid& a) {
  return Elementwise(tape, ElementwiseOp::kSigmoid, a);
}

// log(1 + e^x) - log(2): smooth rectifier with act(0) = 0.
Grid ShiftedSoftplus(Tape& tape, const Grid& a);

// Two-channel softmax over the channel axis; returns channel 0 (1 x H x W).
Grid SoftmaxChannels(Tape& tape, const Grid& input);

// Divides each pixel's channel vector by max(||v||, eps).
Grid L2NormalizeChannels(Tape& tape, const Grid& input, double eps = 1e-8);

Grid ConcatChannels(Tape& tape, const Grid& a, const Grid& b);

// 2x2 stride-2 average pooling; H and W must be even.
Grid AvgPool2(Tape& tape, const Grid& input);
// Nearest-neighbour 2x upsampling.
Grid UpsampleNearest2(Tape& tape, const Grid& input);

Grid Sum(Tape& tape, const Grid& a);
Grid Mean(Tape& tape, const Grid& a);
Grid Scale(Tape& tape, const Grid& a, double factor);

// Copy that is cut from the graph.
Grid Detach(const Grid& a);

}  // namespace ctxfeat

#pragma once

#include <vector>

#include "mmcof/autograd.hpp"

namespace mmcof::ag {

// 2-d convolution, NCHW input (B,Cin,H,W), kernel (Cout,Cin,k,k), bias (Cout).
// Output spatial size = floor((H + 2*pad - k)/stride) + 1.
Var conv2d(const Var& x, const Var& w, const Var& b, int stride = 1, int padding = 0);

// Depthwise conv: kernel (C,1,k,k), bias (C); channel c of the output depends
// only on channel c of the input.
Var depthwise_conv2d(const Var& x, const Var& w, const Var& b, int padding = 0);

Var maxpool2d(const Var& x, int window = 2, int stride = 2);

// x (B,K), w (K,M), b (M): out = x*w + b.
Var dense(const Var& x, const Var& w, const Var& b);

Var flatten(const Var& x);  // (B,...) -> (B, rest)

Var relu(const Var& x);
Var sigmoid(const Var& x);

// Per-(batch,channel) normalization over HxW; scale/shift have one entry per channel.
Var layer_norm_spatial(const Var& x, const Var& scale, const Var& shift, float epsilon);

// Per-channel statistics over (B,H,W) in train mode; running stats in infer mode.
Var batch_norm2d(const Var& x, const Var& scale, const Var& shift, Tensor& running_mean,
                 Tensor& running_var, float momentum, float epsilon, bool training);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
// Elementwise product; also broadcasts a (B,1,H,W) factor across channels.
Var mul(const Var& a, const Var& b);
Var scale(const Var& x, float s);
Var add_scalar(const Var& x, float s);
Var concat_channels(const Var& a, const Var& b);

// Mean of -log softmax(logits)[label] over the batch. Returns a scalar node.
Var softmax_cross_entropy(const Var& logits, const std::vector<int>& labels);

// Plain (non-graph) helpers.
Tensor softmax_rows(const Tensor& logits);

// Kink bookkeeping: relu and maxpool2d hash their activation pattern (mask
// bits / argmax choices) into a per-thread signature during the forward pass.
// Two evaluations with equal signatures took the same piecewise-linear branch
// everywhere, so finite differences between them see a smooth function.
void reset_kink_signature();
uint64_t kink_signature();

}  // namespace mmcof::ag

#pragma once

#include "snnergy/tensor.hpp"

namespace snnergy {

// Cross-correlation on [T, B, C, H, W] (leading dims merged internally).
// kernel 1 or 3; pad 1 for kernel 3, 0 for kernel 1; stride 1 or 2.
Tensor conv2d(const Tensor& x, const Tensor& weight, int stride);

// Conv over the last axis of [..., C, L]; kernel 1 (pointwise) or 3 (pad 1).
Tensor conv1d(const Tensor& x, const Tensor& weight);

// Batch normalization over channel axis `c_axis` (statistics over all other
// axes). Training mode uses batch statistics (biased variance) and updates
// running stats in place; eval mode uses running stats.
struct BnBuffers {
    Tensor gamma, beta;
    Tensor running_mean, running_var;
    float eps = 1e-5f;
    float momentum = 0.1f;
};
Tensor batchnorm(const Tensor& x, BnBuffers& bn, int c_axis, bool training,
                 bool track_running = true);

// 2x2 max pooling, stride 2, on [..., H, W]; gradient routes to the first
// maximal element of each window.
Tensor maxpool2d(const Tensor& x);

// Mean cross-entropy over the batch from raw logits [B, K].
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);

Tensor softmax_rows(const Tensor& logits);  // no autodiff; eval utility

}  // namespace snnergy

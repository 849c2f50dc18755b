#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include "cci/tensor.hpp"

namespace cci::kernels {

// a (m x k) times b (k x n). Checkpoint weights are [out, in], so callers
// pass them transposed once at load. Accumulation order is fixed.
Matrix matmul(const Matrix& a, const Matrix& b);

// In-place row += bias.
void add_bias(Matrix& m, std::span<const float> bias);

// Row-wise LayerNorm.
Matrix layer_norm(const Matrix& x, std::span<const float> gamma, std::span<const float> beta, float eps);

// Softmax over `logits` where keys with key_masked[j] != 0 get exactly zero
// weight. Masked logits are replaced by the lowest finite float and the row
// maximum is subtracted first. At least one key must be unmasked.
void masked_softmax(std::span<float> logits, std::span<const std::uint8_t> key_masked);

void quick_gelu(std::span<float> x);
void gelu(std::span<float> x);

}  // namespace cci::kernels

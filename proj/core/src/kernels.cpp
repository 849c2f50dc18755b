#include "cci/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cci/error.hpp"

namespace cci::kernels {

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw InputError("matmul inner dimension mismatch");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Matrix out(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    float* o = out.row(i).data();
    const float* ai = a.row(i).data();
    for (std::size_t p = 0; p < k; ++p) {
      const float s = ai[p];
      const float* bp = b.row(p).data();
      for (std::size_t j = 0; j < n; ++j) o[j] += s * bp[j];
    }
  }
  return out;
}

void add_bias(Matrix& m, std::span<const float> bias) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += bias[c];
  }
}

Matrix layer_norm(const Matrix& x, std::span<const float> gamma, std::span<const float> beta, float eps) {
  Matrix out(x.rows(), x.cols());
  const auto n = static_cast<double>(x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto in = x.row(r);
    double mean = 0.0;
    for (float v : in) mean += v;
    mean /= n;
    double var = 0.0;
    for (float v : in) var += (v - mean) * (v - mean);
    var /= n;
    const double inv = 1.0 / std::sqrt(var + eps);
    auto o = out.row(r);
    for (std::size_t c = 0; c < in.size(); ++c)
      o[c] = static_cast<float>((in[c] - mean) * inv) * gamma[c] + beta[c];
  }
  return out;
}

void masked_softmax(std::span<float> logits, std::span<const std::uint8_t> key_masked) {
  constexpr float kNegInf = std::numeric_limits<float>::lowest();
  float max = kNegInf;
  bool any = false;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    if (key_masked[j]) {
      logits[j] = kNegInf;
    } else {
      max = std::max(max, logits[j]);
      any = true;
    }
  }
  if (!any) throw InputError("softmax row has no unmasked key");
  double sum = 0.0;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    // exp(lowest - max) underflows to exactly zero.
    const float e = key_masked[j] ? 0.0f : std::exp(logits[j] - max);
    logits[j] = e;
    sum += e;
  }
  const auto inv = static_cast<float>(1.0 / sum);
  for (float& v : logits) v *= inv;
}

void quick_gelu(std::span<float> x) {
  for (float& v : x) v = v / (1.0f + std::exp(-1.702f * v));
}

void gelu(std::span<float> x) {
  for (float& v : x) v = 0.5f * v * (1.0f + std::erf(v * 0.70710678118654752f));
}

}  // namespace cci::kernels

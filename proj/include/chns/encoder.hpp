#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "chns/matrix.hpp"

namespace chns {

struct Layer {
  Matrix weight;  // out x in
  Vec bias;       // out
};

// Feedforward encoder: affine layers with a rectifier between them, final
// affine output normalized to unit norm per row. Zero layers degenerates to
// plain row normalization.
struct EncoderParams {
  std::vector<Layer> layers;

  std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().weight.cols(); }
  std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().weight.rows(); }

  // He-style uniform fan-in initialization, biases zero.
  static EncoderParams init(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                            std::size_t output_dim, std::uint64_t seed);
  void validate() const;
};

struct ForwardCache {
  Matrix input;
  std::vector<Matrix> pre_activations;  // per layer, before rectifier
  std::vector<Matrix> activations;      // per layer, after rectifier (last = prenorm)
  Vec prenorm_norms;                    // per-row norm before normalization
  Matrix embeddings;                    // unit rows
};

// Rows of `features` are independent inputs; returns unit-norm rows.
Matrix encoder_forward(const EncoderParams& params, const Matrix& features,
                       ForwardCache* cache = nullptr);

using EncoderGrads = std::vector<Layer>;

// Exact reverse-mode gradients of encoder_forward, including the
// normalization Jacobian (I - uu^T)/||z|| per row.
EncoderGrads encoder_backward(const EncoderParams& params, const ForwardCache& cache,
                              const Matrix& grad_embeddings);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second moment accumulators for one flat parameter block.
struct AdamLane {
  Vec m;
  Vec v;
};

struct OptimizerState {
  std::vector<AdamLane> lanes;  // one per parameter tensor (weights, biases)
  std::size_t step = 0;
  AdamConfig config;

  static OptimizerState for_params(const EncoderParams& params, AdamConfig cfg = {});
};

// Bias-corrected Adam update on one flat block; step is the 1-based count.
void adam_update_flat(std::span<double> params, AdamLane& lane,
                      std::span<const double> grads, double lr, std::size_t step,
                      const AdamConfig& cfg);

// One optimizer step over all encoder tensors.
void adam_step(OptimizerState& state, EncoderParams& params, const EncoderGrads& grads,
               double lr);

// Linear warmup to max_lr then half-cosine decay to zero.
double lr_at(std::size_t step, std::size_t total_steps, double warmup_fraction,
             double max_lr);

void save_checkpoint(const EncoderParams& params, const std::string& path);
EncoderParams load_checkpoint(const std::string& path);

}  // namespace chns

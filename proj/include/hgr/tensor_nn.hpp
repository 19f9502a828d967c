#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

#include "hgr/rng.hpp"

namespace hgr {

/// Dense float tensor, rank <= 4, row-major. Feature maps use [C, H, W];
/// vectors use [N].
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, float fill = 0.0f);
  Tensor(std::vector<std::size_t> shape, std::vector<float> values);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_[i]; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  std::span<float> values() { return values_; }
  std::span<const float> values() const { return values_; }
  float* data() { return values_.data(); }
  const float* data() const { return values_.data(); }

  float& operator[](std::size_t i) { return values_[i]; }
  float operator[](std::size_t i) const { return values_[i]; }

  // [C, H, W] accessors.
  float& at(std::size_t c, std::size_t y, std::size_t x) { return values_[(c * shape_[1] + y) * shape_[2] + x]; }
  float at(std::size_t c, std::size_t y, std::size_t x) const { return values_[(c * shape_[1] + y) * shape_[2] + x]; }

  void fill(float v);
  Tensor reshaped(std::vector<std::size_t> shape) const;

  bool operator==(const Tensor&) const = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<float> values_;
};

std::size_t shape_product(const std::vector<std::size_t>& shape);

/// Wire codes are part of the weight-file format; do not renumber.
enum class LayerKind : std::uint8_t { Conv = 1, Pool = 2, ReLU = 3, Dense = 4, Flatten = 5 };

const char* layer_kind_name(LayerKind kind);

/// One network stage. Conv weights are [outC, inC, kH, kW]; Dense weights
/// are [out, in]. Non-parametric kinds keep every tensor empty.
struct LayerParams {
  LayerKind kind = LayerKind::ReLU;
  Tensor weights;
  Tensor bias;
  Tensor grad_weights;
  Tensor grad_bias;
  Tensor momentum_weights;
  Tensor momentum_bias;

  bool parametric() const { return kind == LayerKind::Conv || kind == LayerKind::Dense; }
  std::size_t parameter_count() const { return weights.size() + bias.size(); }
  void zero_grad();
  // Scales accumulated gradients, e.g. by 1/batch.
  void scale_grad(float factor);
};

LayerParams make_conv(std::size_t in_channels, std::size_t out_channels, std::size_t kh, std::size_t kw);
LayerParams make_dense(std::size_t in, std::size_t out);
LayerParams make_plain(LayerKind kind);

/// Glorot-uniform weights from the given stream, zero biases.
void init_glorot(LayerParams& layer, SplitMix64& rng);

struct Hyper {
  float learning_rate = 0.01f;
  float momentum = 0.9f;
  int batch_size = 64;
  int epochs = 30;
  std::uint64_t seed = 42;
  float lr_decay = 0.1f;
  int decay_every = 15;

  bool operator==(const Hyper&) const = default;
};

void validate(const Hyper& hyper);

// Valid cross-correlation, stride 1.
Tensor conv2d_forward(const Tensor& input, const LayerParams& conv);
// Accumulates into conv.grad_weights / conv.grad_bias; returns dL/dinput.
Tensor conv2d_backward(const Tensor& input, LayerParams& conv, const Tensor& grad_out);

struct PoolResult {
  Tensor output;
  std::vector<std::uint32_t> argmax;  // flat input index per output element
};

/// Disjoint 2x2 max pooling. Ties resolve to the first element in row-major
/// order within the block.
PoolResult maxpool2x2_forward(const Tensor& input);
Tensor maxpool2x2_backward(const std::vector<std::size_t>& input_shape, std::span<const std::uint32_t> argmax,
                           const Tensor& grad_out);

Tensor relu_forward(const Tensor& input);
// Gradient passes where input > 0.
Tensor relu_backward(const Tensor& input, const Tensor& grad_out);

Tensor dense_forward(const Tensor& input, const LayerParams& dense);
Tensor dense_backward(const Tensor& input, LayerParams& dense, const Tensor& grad_out);

struct LossResult {
  float loss = 0.0f;
  Tensor grad_logits;
};

std::vector<float> softmax(std::span<const float> logits);
LossResult softmax_xent(const Tensor& logits, std::size_t label);

/// Momentum SGD: v <- momentum*v - lr*g; w <- w + v. Gradients are zeroed.
void sgd_step(LayerParams& layer, float learning_rate, float momentum);

}  // namespace hgr

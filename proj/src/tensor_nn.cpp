#include "hgr/tensor_nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "hgr/error.hpp"

namespace hgr {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

namespace {

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

void require_same_shape(const Tensor& a, const std::vector<std::size_t>& expected, const char* what) {
  if (a.shape() != expected) {
    fail(ErrorCode::ShapeMismatch, std::string(what) + ": got " + shape_string(a.shape()) + ", expected " +
                                       shape_string(expected));
  }
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, float fill)
    : shape_(std::move(shape)), values_(shape_product(shape_), fill) {
  if (shape_.size() > 4) fail(ErrorCode::ShapeMismatch, "tensor rank above 4");
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<float> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (shape_.size() > 4) fail(ErrorCode::ShapeMismatch, "tensor rank above 4");
  if (values_.size() != shape_product(shape_)) {
    fail(ErrorCode::ShapeMismatch, "value count does not match shape " + shape_string(shape_));
  }
}

void Tensor::fill(float v) { std::fill(values_.begin(), values_.end(), v); }

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const {
  if (shape_product(shape) != values_.size()) {
    fail(ErrorCode::ShapeMismatch, "cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  return Tensor(std::move(shape), values_);
}

const char* layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv: return "conv";
    case LayerKind::Pool: return "maxpool2x2";
    case LayerKind::ReLU: return "relu";
    case LayerKind::Dense: return "dense";
    case LayerKind::Flatten: return "flatten";
  }
  return "?";
}

void LayerParams::zero_grad() {
  grad_weights.fill(0.0f);
  grad_bias.fill(0.0f);
}

void LayerParams::scale_grad(float factor) {
  for (float& g : grad_weights.values()) g *= factor;
  for (float& g : grad_bias.values()) g *= factor;
}

namespace {

LayerParams make_parametric(LayerKind kind, std::vector<std::size_t> wshape, std::size_t out) {
  LayerParams p;
  p.kind = kind;
  p.weights = Tensor(wshape);
  p.grad_weights = Tensor(wshape);
  p.momentum_weights = Tensor(wshape);
  p.bias = Tensor({out});
  p.grad_bias = Tensor({out});
  p.momentum_bias = Tensor({out});
  return p;
}

}  // namespace

LayerParams make_conv(std::size_t in_channels, std::size_t out_channels, std::size_t kh, std::size_t kw) {
  return make_parametric(LayerKind::Conv, {out_channels, in_channels, kh, kw}, out_channels);
}

LayerParams make_dense(std::size_t in, std::size_t out) { return make_parametric(LayerKind::Dense, {out, in}, out); }

LayerParams make_plain(LayerKind kind) {
  LayerParams p;
  p.kind = kind;
  return p;
}

void init_glorot(LayerParams& layer, SplitMix64& rng) {
  if (!layer.parametric()) return;
  const auto& s = layer.weights.shape();
  std::size_t fan_in = 0, fan_out = 0;
  if (layer.kind == LayerKind::Conv) {
    fan_in = s[1] * s[2] * s[3];
    fan_out = s[0] * s[2] * s[3];
  } else {
    fan_in = s[1];
    fan_out = s[0];
  }
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (float& w : layer.weights.values()) w = static_cast<float>(rng.uniform(-limit, limit));
  layer.bias.fill(0.0f);
  layer.zero_grad();
  layer.momentum_weights.fill(0.0f);
  layer.momentum_bias.fill(0.0f);
}

void validate(const Hyper& h) {
  if (!(h.learning_rate >= 0.0f) || !std::isfinite(h.learning_rate)) {
    fail(ErrorCode::InvalidArgument, "learning_rate must be finite and non-negative");
  }
  if (!(h.momentum >= 0.0f && h.momentum < 1.0f)) fail(ErrorCode::InvalidArgument, "momentum must be in [0,1)");
  if (h.batch_size <= 0) fail(ErrorCode::InvalidArgument, "batch_size must be positive");
  if (h.epochs <= 0) fail(ErrorCode::InvalidArgument, "epochs must be positive");
  if (!(h.lr_decay > 0.0f) || !std::isfinite(h.lr_decay)) fail(ErrorCode::InvalidArgument, "lr_decay must be positive");
  if (h.decay_every <= 0) fail(ErrorCode::InvalidArgument, "decay_every must be positive");
}

Tensor conv2d_forward(const Tensor& input, const LayerParams& conv) {
  if (conv.kind != LayerKind::Conv) fail(ErrorCode::ShapeMismatch, "conv2d_forward on non-conv layer");
  const auto& ws = conv.weights.shape();
  const std::size_t out_c = ws[0], in_c = ws[1], kh = ws[2], kw = ws[3];
  if (input.rank() != 3 || input.dim(0) != in_c || input.dim(1) < kh || input.dim(2) < kw) {
    fail(ErrorCode::ShapeMismatch, "conv input " + shape_string(input.shape()) + " vs kernel " + shape_string(ws));
  }
  const std::size_t h = input.dim(1), w = input.dim(2);
  const std::size_t oh = h - kh + 1, ow = w - kw + 1;
  Tensor out({out_c, oh, ow});
  const float* in = input.data();
  const float* wt = conv.weights.data();
  // Double accumulator per plane; the output is rounded to float once.
  std::vector<double> plane(oh * ow);
  for (std::size_t o = 0; o < out_c; ++o) {
    std::fill(plane.begin(), plane.end(), static_cast<double>(conv.bias[o]));
    for (std::size_t c = 0; c < in_c; ++c) {
      const float* src = in + c * h * w;
      for (std::size_t dy = 0; dy < kh; ++dy) {
        for (std::size_t dx = 0; dx < kw; ++dx) {
          const double k = wt[((o * in_c + c) * kh + dy) * kw + dx];
          for (std::size_t y = 0; y < oh; ++y) {
            const float* row = src + (y + dy) * w + dx;
            double* dst = plane.data() + y * ow;
            for (std::size_t x = 0; x < ow; ++x) dst[x] += k * row[x];
          }
        }
      }
    }
    float* dst = out.data() + o * oh * ow;
    for (std::size_t i = 0; i < plane.size(); ++i) dst[i] = static_cast<float>(plane[i]);
  }
  return out;
}

Tensor conv2d_backward(const Tensor& input, LayerParams& conv, const Tensor& grad_out) {
  if (conv.kind != LayerKind::Conv) fail(ErrorCode::ShapeMismatch, "conv2d_backward on non-conv layer");
  const auto& ws = conv.weights.shape();
  const std::size_t out_c = ws[0], in_c = ws[1], kh = ws[2], kw = ws[3];
  if (input.rank() != 3 || input.dim(0) != in_c || input.dim(1) < kh || input.dim(2) < kw) {
    fail(ErrorCode::ShapeMismatch, "conv input " + shape_string(input.shape()) + " vs kernel " + shape_string(ws));
  }
  const std::size_t h = input.dim(1), w = input.dim(2);
  const std::size_t oh = h - kh + 1, ow = w - kw + 1;
  require_same_shape(grad_out, {out_c, oh, ow}, "conv grad_out");

  Tensor grad_in(input.shape());
  const float* in = input.data();
  const float* wt = conv.weights.data();
  float* gw = conv.grad_weights.data();
  float* gi = grad_in.data();
  for (std::size_t o = 0; o < out_c; ++o) {
    const float* g = grad_out.data() + o * oh * ow;
    float bias_sum = 0.0f;
    for (std::size_t i = 0; i < oh * ow; ++i) bias_sum += g[i];
    conv.grad_bias[o] += bias_sum;
    for (std::size_t c = 0; c < in_c; ++c) {
      const float* src = in + c * h * w;
      float* dsrc = gi + c * h * w;
      for (std::size_t dy = 0; dy < kh; ++dy) {
        for (std::size_t dx = 0; dx < kw; ++dx) {
          const std::size_t widx = ((o * in_c + c) * kh + dy) * kw + dx;
          const float k = wt[widx];
          float acc = 0.0f;
          for (std::size_t y = 0; y < oh; ++y) {
            const float* row = src + (y + dy) * w + dx;
            float* drow = dsrc + (y + dy) * w + dx;
            const float* grow = g + y * ow;
            for (std::size_t x = 0; x < ow; ++x) {
              acc += grow[x] * row[x];
              drow[x] += k * grow[x];
            }
          }
          gw[widx] += acc;
        }
      }
    }
  }
  return grad_in;
}

PoolResult maxpool2x2_forward(const Tensor& input) {
  if (input.rank() != 3) fail(ErrorCode::ShapeMismatch, "maxpool input must be [C,H,W]");
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  if (h % 2 != 0 || w % 2 != 0) fail(ErrorCode::OddDimension, "maxpool2x2 needs even H and W, got " + shape_string(input.shape()));
  PoolResult r{Tensor({c, h / 2, w / 2}), {}};
  r.argmax.resize(r.output.size());
  std::size_t o = 0;
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < h; y += 2) {
      for (std::size_t x = 0; x < w; x += 2) {
        std::size_t best = (ch * h + y) * w + x;
        const std::size_t candidates[3] = {best + 1, best + w, best + w + 1};
        for (std::size_t idx : candidates) {
          if (input[idx] > input[best]) best = idx;
        }
        r.output[o] = input[best];
        r.argmax[o] = static_cast<std::uint32_t>(best);
        ++o;
      }
    }
  }
  return r;
}

Tensor maxpool2x2_backward(const std::vector<std::size_t>& input_shape, std::span<const std::uint32_t> argmax,
                           const Tensor& grad_out) {
  if (argmax.size() != grad_out.size()) fail(ErrorCode::ShapeMismatch, "maxpool argmax/grad_out size mismatch");
  Tensor grad_in(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) {
    if (argmax[i] >= grad_in.size()) fail(ErrorCode::ShapeMismatch, "maxpool argmax out of range");
    grad_in[argmax[i]] += grad_out[i];
  }
  return grad_in;
}

Tensor relu_forward(const Tensor& input) {
  Tensor out = input;
  for (float& v : out.values()) v = v > 0.0f ? v : 0.0f;
  return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& grad_out) {
  require_same_shape(grad_out, input.shape(), "relu grad_out");
  Tensor g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(input[i] > 0.0f)) g[i] = 0.0f;
  }
  return g;
}

Tensor dense_forward(const Tensor& input, const LayerParams& dense) {
  if (dense.kind != LayerKind::Dense) fail(ErrorCode::ShapeMismatch, "dense_forward on non-dense layer");
  const std::size_t out_n = dense.weights.dim(0), in_n = dense.weights.dim(1);
  require_same_shape(input, {in_n}, "dense input");
  Tensor out({out_n});
  const float* x = input.data();
  for (std::size_t o = 0; o < out_n; ++o) {
    const float* row = dense.weights.data() + o * in_n;
    float acc = 0.0f;
    for (std::size_t i = 0; i < in_n; ++i) acc += row[i] * x[i];
    out[o] = acc + dense.bias[o];
  }
  return out;
}

Tensor dense_backward(const Tensor& input, LayerParams& dense, const Tensor& grad_out) {
  if (dense.kind != LayerKind::Dense) fail(ErrorCode::ShapeMismatch, "dense_backward on non-dense layer");
  const std::size_t out_n = dense.weights.dim(0), in_n = dense.weights.dim(1);
  require_same_shape(input, {in_n}, "dense input");
  require_same_shape(grad_out, {out_n}, "dense grad_out");
  Tensor grad_in({in_n});
  const float* x = input.data();
  float* gi = grad_in.data();
  for (std::size_t o = 0; o < out_n; ++o) {
    const float g = grad_out[o];
    const float* row = dense.weights.data() + o * in_n;
    float* grow = dense.grad_weights.data() + o * in_n;
    for (std::size_t i = 0; i < in_n; ++i) {
      gi[i] += row[i] * g;
      grow[i] += g * x[i];
    }
    dense.grad_bias[o] += g;
  }
  return grad_in;
}

std::vector<float> softmax(std::span<const float> logits) {
  std::vector<float> p(logits.begin(), logits.end());
  if (p.empty()) return p;
  const float m = *std::max_element(p.begin(), p.end());
  float total = 0.0f;
  for (float& v : p) {
    v = std::exp(v - m);
    total += v;
  }
  for (float& v : p) v /= total;
  return p;
}

LossResult softmax_xent(const Tensor& logits, std::size_t label) {
  if (logits.rank() != 1) fail(ErrorCode::ShapeMismatch, "softmax_xent expects a vector of logits");
  if (label >= logits.size()) {
    fail(ErrorCode::LabelOutOfRange, "label " + std::to_string(label) + " with " + std::to_string(logits.size()) + " classes");
  }
  const auto v = logits.values();
  const float m = *std::max_element(v.begin(), v.end());
  float total = 0.0f;
  for (float z : v) total += std::exp(z - m);
  LossResult r;
  r.loss = std::log(total) - (v[label] - m);
  if (r.loss < 0.0f) r.loss = 0.0f;
  r.grad_logits = Tensor(logits.shape());
  for (std::size_t k = 0; k < v.size(); ++k) r.grad_logits[k] = std::exp(v[k] - m) / total;
  r.grad_logits[label] -= 1.0f;
  return r;
}

void sgd_step(LayerParams& layer, float learning_rate, float momentum) {
  if (!layer.parametric()) return;
  auto update = [&](Tensor& w, Tensor& g, Tensor& v) {
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = momentum * v[i] - learning_rate * g[i];
      w[i] += v[i];
      g[i] = 0.0f;
    }
  };
  update(layer.weights, layer.grad_weights, layer.momentum_weights);
  update(layer.bias, layer.grad_bias, layer.momentum_bias);
}

}  // namespace hgr

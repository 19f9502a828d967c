#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "hgr/imaging.hpp"
#include "hgr/tensor_nn.hpp"

namespace hgr {

inline constexpr int kInputSide = 48;
inline constexpr std::size_t kNumClasses = 10;
// Nonlinearity after every conv and hidden dense layer, and the subsampling
// operator. Swapping these requires matching layer implementations.
inline constexpr LayerKind kActivation = LayerKind::ReLU;
inline constexpr LayerKind kSubsampling = LayerKind::Pool;

/// conv5x5(1->6) relu pool conv3x3(6->16) relu pool flatten
/// dense(1600->120) relu dense(120->84) relu dense(84->10)
class Network {
 public:
  /// Activations recorded by forward() for a subsequent backward().
  struct Trace {
    std::vector<Tensor> inputs;  // input to layer i
    std::vector<std::vector<std::uint32_t>> argmax;
  };

  std::vector<LayerParams> layers;

  Tensor forward(const Tensor& input) const;
  Tensor forward(const Tensor& input, Trace& trace) const;
  // Accumulates parameter gradients for the traced sample.
  void backward(const Trace& trace, const Tensor& grad_logits);

  std::size_t parameter_count() const;
  void zero_grad();
  bool same_parameters(const Network& other) const;
};

/// Layer shapes as built; fails with ShapeMismatch if `net` deviates.
void check_architecture(const Network& net);
Network build_network(std::uint64_t seed);
/// Same architecture with every parameter zero.
Network zero_network();

Tensor mask_to_tensor(const BinaryMask& mask);

struct Prediction {
  std::size_t label = 0;
  float probability = 0.0f;
  std::vector<float> probabilities;
};
/// Argmax with ties resolved toward the lower class index.
std::size_t argmax_label(std::span<const float> logits);
Prediction classify(const Network& net, const BinaryMask& mask48);

struct Sample {
  BinaryMask mask;
  std::size_t label = 0;
};

struct Dataset {
  std::vector<Sample> samples;
  std::vector<std::string> class_names;  // always kNumClasses entries
};

std::vector<std::string> default_class_names();

struct Binarize {
  enum class Mode { Otsu, Fixed };
  Mode mode = Mode::Otsu;
  int threshold = 128;  // Fixed mode: foreground iff value > threshold
};

/// Smallest threshold t maximizing between-class variance of {<=t} vs {>t}.
int otsu_threshold(const Image& gray);
BinaryMask binarize(const Image& gray, const Binarize& how);

/// Reads root/<label>/*.pgm with labels 0..k-1 (k <= 10), files in
/// lexicographic order, every image 48x48.
Dataset load_dataset(const std::string& root, const Binarize& how);

/// Seeded 10-class dataset of binary geometric shapes with jittered
/// position, size and stroke width.
Dataset make_synthetic_shapes(int per_class, std::uint64_t seed);

struct EpochLog {
  int epoch = 0;
  float learning_rate = 0.0f;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;

  bool operator==(const EpochLog&) const = default;
};

struct TrainReport {
  std::vector<EpochLog> epochs;
  int best_epoch = -1;
  double best_val_accuracy = 0.0;
  std::size_t train_count = 0;
  std::size_t val_count = 0;
  double split = 0.8;
  Hyper hyper;

  bool operator==(const TrainReport&) const = default;
};

/// Stratified split: per class, round(split * n) samples train and the rest
/// validate. Returned indices refer to data.samples.
void stratified_split(const Dataset& data, double split, std::uint64_t seed, std::vector<std::size_t>& train,
                      std::vector<std::size_t>& val);

/// Minibatch momentum SGD with step decay. On return `net` holds the
/// parameters of the epoch with the best validation accuracy.
TrainReport train(Network& net, const Dataset& data, const Hyper& hyper, double split,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

struct ConfusionMatrix {
  std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses> counts{};  // [true][predicted]
  std::vector<std::string> class_names = default_class_names();

  std::uint64_t total() const;
  std::uint64_t trace() const;
  double accuracy() const;
  std::uint64_t row_sum(std::size_t cls) const;
  std::string to_csv() const;

  bool operator==(const ConfusionMatrix&) const = default;
};

struct Evaluation {
  ConfusionMatrix confusion;
  double accuracy = 0.0;
};

Evaluation evaluate(const Network& net, const Dataset& data, unsigned threads = 1);
Evaluation evaluate(const Network& net, const Dataset& data, std::span<const std::size_t> indices);

// Weight container: "HGNW", u32 version, u32 record count, records of
// (u8 kind, u32 rank, u32 dims[rank], f32 weights..., f32 bias...), CRC32.
inline constexpr std::uint32_t kWeightsVersion = 1;
std::vector<std::uint8_t> save_weights(const Network& net);
Network load_weights(std::span<const std::uint8_t> bytes);
void save_weights_file(const std::string& path, const Network& net);
Network load_weights_file(const std::string& path);

}  // namespace hgr

#include "hgr/gesture_net.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <sstream>
#include <thread>

#include "hgr/error.hpp"
#include "hgr/rng.hpp"

namespace hgr {

namespace {

using Shape = std::vector<std::size_t>;

// Expected input shape of every layer, followed by the logits shape.
const std::vector<Shape>& shape_chain() {
  static const std::vector<Shape> chain = {
      {1, 48, 48}, {6, 44, 44}, {6, 44, 44}, {6, 22, 22}, {16, 20, 20}, {16, 20, 20}, {16, 10, 10},
      {1600},      {120},       {120},       {84},        {84},        {10},
  };
  return chain;
}

std::vector<LayerParams> architecture() {
  std::vector<LayerParams> layers;
  layers.push_back(make_conv(1, 6, 5, 5));
  layers.push_back(make_plain(kActivation));
  layers.push_back(make_plain(kSubsampling));
  layers.push_back(make_conv(6, 16, 3, 3));
  layers.push_back(make_plain(kActivation));
  layers.push_back(make_plain(kSubsampling));
  layers.push_back(make_plain(LayerKind::Flatten));
  layers.push_back(make_dense(1600, 120));
  layers.push_back(make_plain(kActivation));
  layers.push_back(make_dense(120, 84));
  layers.push_back(make_plain(kActivation));
  layers.push_back(make_dense(84, 10));
  return layers;
}

void check_stage(const Tensor& t, std::size_t stage) {
  if (t.shape() != shape_chain()[stage]) {
    fail(ErrorCode::ShapeMismatch, "activation shape mismatch at layer " + std::to_string(stage));
  }
}

}  // namespace

void check_architecture(const Network& net) {
  const auto expected = architecture();
  if (net.layers.size() != expected.size()) fail(ErrorCode::ShapeMismatch, "layer count differs from architecture");
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const auto& a = net.layers[i];
    const auto& b = expected[i];
    if (a.kind != b.kind || a.weights.shape() != b.weights.shape() || a.bias.shape() != b.bias.shape() ||
        a.grad_weights.shape() != b.weights.shape() || a.momentum_weights.shape() != b.weights.shape()) {
      fail(ErrorCode::ShapeMismatch, "layer " + std::to_string(i) + " (" + layer_kind_name(a.kind) +
                                         ") differs from architecture");
    }
  }
}

Network build_network(std::uint64_t seed) {
  Network net;
  net.layers = architecture();
  SplitMix64 rng(seed);
  for (auto& layer : net.layers) init_glorot(layer, rng);
  check_architecture(net);
  return net;
}

Network zero_network() {
  Network net;
  net.layers = architecture();
  return net;
}

Tensor Network::forward(const Tensor& input) const {
  check_stage(input, 0);
  Tensor x = input;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& layer = layers[i];
    switch (layer.kind) {
      case LayerKind::Conv: x = conv2d_forward(x, layer); break;
      case LayerKind::ReLU: x = relu_forward(x); break;
      case LayerKind::Pool: x = maxpool2x2_forward(x).output; break;
      case LayerKind::Flatten: x = x.reshaped({x.size()}); break;
      case LayerKind::Dense: x = dense_forward(x, layer); break;
    }
    check_stage(x, i + 1);
  }
  return x;
}

Tensor Network::forward(const Tensor& input, Trace& trace) const {
  check_stage(input, 0);
  trace.inputs.resize(layers.size());
  trace.argmax.resize(layers.size());
  Tensor x = input;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& layer = layers[i];
    trace.inputs[i] = x;
    switch (layer.kind) {
      case LayerKind::Conv: x = conv2d_forward(x, layer); break;
      case LayerKind::ReLU: x = relu_forward(x); break;
      case LayerKind::Pool: {
        auto pooled = maxpool2x2_forward(x);
        trace.argmax[i] = std::move(pooled.argmax);
        x = std::move(pooled.output);
        break;
      }
      case LayerKind::Flatten: x = x.reshaped({x.size()}); break;
      case LayerKind::Dense: x = dense_forward(x, layer); break;
    }
    check_stage(x, i + 1);
  }
  return x;
}

void Network::backward(const Trace& trace, const Tensor& grad_logits) {
  if (trace.inputs.size() != layers.size()) fail(ErrorCode::ShapeMismatch, "trace does not match network");
  Tensor g = grad_logits;
  for (std::size_t i = layers.size(); i-- > 0;) {
    auto& layer = layers[i];
    const Tensor& in = trace.inputs[i];
    switch (layer.kind) {
      case LayerKind::Conv: g = conv2d_backward(in, layer, g); break;
      case LayerKind::ReLU: g = relu_backward(in, g); break;
      case LayerKind::Pool: g = maxpool2x2_backward(in.shape(), trace.argmax[i], g); break;
      case LayerKind::Flatten: g = g.reshaped(in.shape()); break;
      case LayerKind::Dense: g = dense_backward(in, layer, g); break;
    }
  }
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.parameter_count();
  return n;
}

void Network::zero_grad() {
  for (auto& l : layers) l.zero_grad();
}

bool Network::same_parameters(const Network& other) const {
  if (layers.size() != other.layers.size()) return false;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& a = layers[i];
    const auto& b = other.layers[i];
    if (a.kind != b.kind || a.weights.shape() != b.weights.shape() || a.bias.shape() != b.bias.shape()) return false;
    if (a.weights.size() &&
        std::memcmp(a.weights.data(), b.weights.data(), a.weights.size() * sizeof(float)) != 0) return false;
    if (a.bias.size() && std::memcmp(a.bias.data(), b.bias.data(), a.bias.size() * sizeof(float)) != 0) return false;
  }
  return true;
}

Tensor mask_to_tensor(const BinaryMask& mask) {
  if (mask.width != kInputSide || mask.height != kInputSide) {
    fail(ErrorCode::WrongSize, "classifier input must be 48x48, got " + std::to_string(mask.width) + "x" +
                                   std::to_string(mask.height));
  }
  Tensor t({1, static_cast<std::size_t>(kInputSide), static_cast<std::size_t>(kInputSide)});
  for (std::size_t i = 0; i < mask.bits.size(); ++i) t[i] = mask.bits[i] ? 1.0f : 0.0f;
  return t;
}

std::size_t argmax_label(std::span<const float> logits) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < logits.size(); ++k) {
    if (logits[k] > logits[best]) best = k;
  }
  return best;
}

Prediction classify(const Network& net, const BinaryMask& mask48) {
  const Tensor logits = net.forward(mask_to_tensor(mask48));
  Prediction p;
  p.label = argmax_label(logits.values());
  p.probabilities = softmax(logits.values());
  p.probability = p.probabilities[p.label];
  return p;
}

std::vector<std::string> default_class_names() {
  std::vector<std::string> names;
  for (std::size_t k = 0; k < kNumClasses; ++k) names.push_back("class" + std::to_string(k));
  return names;
}

int otsu_threshold(const Image& gray) {
  if (gray.channels != 1) fail(ErrorCode::WrongChannelCount, "otsu_threshold needs a grayscale image");
  std::array<std::int64_t, 256> hist{};
  for (auto v : gray.data) ++hist[v];
  const std::int64_t n = static_cast<std::int64_t>(gray.data.size());
  std::int64_t total_sum = 0;
  for (int v = 0; v < 256; ++v) total_sum += v * hist[v];

  // Between-class variance is proportional to (S0*n1 - S1*n0)^2 / (n0*n1);
  // compared exactly by cross-multiplication.
  int best_t = -1;
  unsigned __int128 best_num = 0, best_den = 1;
  std::int64_t n0 = 0, s0 = 0;
  for (int t = 0; t < 256; ++t) {
    n0 += hist[t];
    s0 += static_cast<std::int64_t>(t) * hist[t];
    const std::int64_t n1 = n - n0;
    if (n0 == 0 || n1 == 0) continue;
    const std::int64_t s1 = total_sum - s0;
    const __int128 diff = static_cast<__int128>(s0) * n1 - static_cast<__int128>(s1) * n0;
    const unsigned __int128 num = static_cast<unsigned __int128>(diff < 0 ? -diff : diff);
    // Exact while num < 2^40 (every 48x48 image); long double beyond that.
    const unsigned __int128 den = static_cast<unsigned __int128>(n0) * static_cast<unsigned __int128>(n1);
    bool better = false;
    if (best_t < 0) {
      better = true;
    } else if (num < (static_cast<unsigned __int128>(1) << 40) && best_num < (static_cast<unsigned __int128>(1) << 40)) {
      better = num * num * best_den > best_num * best_num * den;
    } else {
      const long double a = static_cast<long double>(num) * static_cast<long double>(num) / static_cast<long double>(den);
      const long double b =
          static_cast<long double>(best_num) * static_cast<long double>(best_num) / static_cast<long double>(best_den);
      better = a > b;
    }
    if (better) {
      best_t = t;
      best_num = num;
      best_den = den;
    }
  }
  if (best_t < 0) {
    // Single gray level: nothing lies above it.
    return gray.data.empty() ? 255 : gray.data.front();
  }
  return best_t;
}

BinaryMask binarize(const Image& gray, const Binarize& how) {
  const int t = how.mode == Binarize::Mode::Otsu ? otsu_threshold(gray) : how.threshold;
  return threshold_image(gray, t);
}

Dataset load_dataset(const std::string& root, const Binarize& how) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) fail(ErrorCode::Io, "dataset root is not a directory: " + root);
  std::vector<int> labels;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (!entry.is_directory()) continue;
    const std::string name = entry.path().filename().string();
    if (name.empty() || name.size() > 2 || !std::all_of(name.begin(), name.end(), [](char c) { return c >= '0' && c <= '9'; })) {
      fail(ErrorCode::NonContiguousLabels, "unexpected class directory '" + name + "'");
    }
    labels.push_back(std::stoi(name));
  }
  std::sort(labels.begin(), labels.end());
  if (labels.empty()) fail(ErrorCode::EmptyClass, "no class directories under " + root);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != static_cast<int>(i) || labels[i] >= static_cast<int>(kNumClasses)) {
      fail(ErrorCode::NonContiguousLabels, "class labels must be 0..k-1 with k <= 10");
    }
  }

  Dataset data;
  data.class_names = default_class_names();
  for (int label : labels) {
    const fs::path dir = fs::path(root) / std::to_string(label);
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".pgm") files.push_back(entry.path().string());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) fail(ErrorCode::EmptyClass, "class " + std::to_string(label) + " has no .pgm files");
    for (const auto& file : files) {
      const Image img = read_pnm_file(file);
      if (img.channels != 1) fail(ErrorCode::WrongChannelCount, file + " is not grayscale");
      if (img.width != kInputSide || img.height != kInputSide) {
        fail(ErrorCode::WrongSize, file + " is " + std::to_string(img.width) + "x" + std::to_string(img.height));
      }
      data.samples.push_back({binarize(img, how), static_cast<std::size_t>(label)});
    }
  }
  return data;
}

namespace {

// Draws one shape of the given class into a 48x48 mask. Geometry is in
// pixel-center coordinates relative to the jittered center.
BinaryMask draw_shape(std::size_t cls, SplitMix64& rng) {
  const double cx = 23.5 + rng.uniform(-5.0, 5.0);
  const double cy = 23.5 + rng.uniform(-5.0, 5.0);
  const double s = rng.uniform(0.7, 1.05);
  const double stroke = rng.uniform(3.0, 6.0);
  const double angle = rng.uniform(-0.2, 0.2);
  const double ca = std::cos(angle), sa = std::sin(angle);
  BinaryMask m(kInputSide, kInputSide);
  for (int y = 0; y < kInputSide; ++y) {
    for (int x = 0; x < kInputSide; ++x) {
      const double px = x - cx, py = y - cy;
      const double u = (ca * px + sa * py) / s;   // rotated, unscaled coordinates
      const double v = (-sa * px + ca * py) / s;
      const double r = std::hypot(u, v);
      const double st = stroke / s;
      bool on = false;
      switch (cls) {
        case 0: on = r <= 14.0; break;                                          // disk
        case 1: on = std::abs(u) <= 13.0 && std::abs(v) <= 13.0; break;         // square
        case 2: on = r <= 15.0 && r >= 15.0 - st; break;                         // ring
        case 3: on = std::abs(u) <= 17.0 && std::abs(v) <= st; break;            // horizontal bar
        case 4: on = std::abs(v) <= 17.0 && std::abs(u) <= st; break;            // vertical bar
        case 5: on = (std::abs(u) <= 16.0 && std::abs(v) <= st / 1.5) ||         // plus
                     (std::abs(v) <= 16.0 && std::abs(u) <= st / 1.5); break;
        case 6: on = r <= 18.0 && (std::abs(u - v) <= st || std::abs(u + v) <= st); break;  // X
        case 7: on = v <= 12.0 && v >= -14.0 && std::abs(u) <= (v + 14.0) * 0.6; break;     // triangle
        case 8: on = (u >= -12.0 && u <= -12.0 + 2 * st && v >= -15.0 && v <= 15.0) ||      // L
                     (v <= 15.0 && v >= 15.0 - 2 * st && u >= -12.0 && u <= 12.0); break;
        case 9: on = std::hypot(u - 10.0, v) <= 7.0 || std::hypot(u + 10.0, v) <= 7.0; break;  // two dots
        default: break;
      }
      m.set(x, y, on);
    }
  }
  return m;
}

}  // namespace

Dataset make_synthetic_shapes(int per_class, std::uint64_t seed) {
  if (per_class <= 0) fail(ErrorCode::InvalidArgument, "per_class must be positive");
  Dataset d;
  d.class_names = {"disk", "square", "ring", "hbar", "vbar", "plus", "cross", "triangle", "ell", "dots"};
  SplitMix64 rng(seed);
  for (std::size_t cls = 0; cls < kNumClasses; ++cls) {
    for (int i = 0; i < per_class; ++i) d.samples.push_back({draw_shape(cls, rng), cls});
  }
  return d;
}

void stratified_split(const Dataset& data, double split, std::uint64_t seed, std::vector<std::size_t>& train,
                      std::vector<std::size_t>& val) {
  if (!(split > 0.0 && split < 1.0)) fail(ErrorCode::InvalidArgument, "split must be in (0,1)");
  train.clear();
  val.clear();
  SplitMix64 rng(seed ^ 0x5851F42D4C957F2DULL);
  for (std::size_t cls = 0; cls < kNumClasses; ++cls) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < data.samples.size(); ++i) {
      if (data.samples[i].label == cls) idx.push_back(i);
    }
    if (idx.empty()) continue;
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
    auto n_train = static_cast<std::size_t>(std::lround(split * static_cast<double>(idx.size())));
    n_train = std::clamp<std::size_t>(n_train, 1, idx.size() > 1 ? idx.size() - 1 : 1);
    train.insert(train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    val.insert(val.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(val.begin(), val.end());
}

TrainReport train(Network& net, const Dataset& data, const Hyper& hyper, double split,
                  const std::function<void(const EpochLog&)>& on_epoch) {
  validate(hyper);
  check_architecture(net);
  for (const auto& s : data.samples) {
    if (s.label >= kNumClasses) fail(ErrorCode::LabelOutOfRange, "sample label " + std::to_string(s.label));
  }
  TrainReport report;
  report.hyper = hyper;
  report.split = split;
  std::vector<std::size_t> train_idx, val_idx;
  stratified_split(data, split, hyper.seed, train_idx, val_idx);
  report.train_count = train_idx.size();
  report.val_count = val_idx.size();

  std::vector<Tensor> inputs;
  inputs.reserve(data.samples.size());
  for (const auto& s : data.samples) inputs.push_back(mask_to_tensor(s.mask));

  SplitMix64 shuffle_rng(hyper.seed ^ 0xD1B54A32D192ED03ULL);
  Network best = net;
  double best_acc = -1.0;
  net.zero_grad();
  Network::Trace trace;
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    const float lr = hyper.learning_rate *
                     static_cast<float>(std::pow(static_cast<double>(hyper.lr_decay), epoch / hyper.decay_every));
    std::vector<std::size_t> order = train_idx;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);

    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(hyper.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(hyper.batch_size));
      for (std::size_t b = start; b < end; ++b) {
        const auto& sample = data.samples[order[b]];
        const Tensor logits = net.forward(inputs[order[b]], trace);
        if (argmax_label(logits.values()) == sample.label) ++correct;
        const LossResult loss = softmax_xent(logits, sample.label);
        loss_sum += loss.loss;
        net.backward(trace, loss.grad_logits);
      }
      const float inv = 1.0f / static_cast<float>(end - start);
      for (auto& layer : net.layers) {
        layer.scale_grad(inv);
        sgd_step(layer, lr, hyper.momentum);
      }
    }

    EpochLog log;
    log.epoch = epoch;
    log.learning_rate = lr;
    log.train_loss = order.empty() ? 0.0 : loss_sum / static_cast<double>(order.size());
    log.train_accuracy = order.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(order.size());
    log.val_accuracy = val_idx.empty() ? log.train_accuracy : evaluate(net, data, val_idx).accuracy;
    if (!std::isfinite(log.train_loss)) fail(ErrorCode::InvalidArgument, "training diverged (non-finite loss)");
    report.epochs.push_back(log);
    if (log.val_accuracy > best_acc) {
      best_acc = log.val_accuracy;
      report.best_epoch = epoch;
      best = net;
    }
    if (on_epoch) on_epoch(log);
  }
  report.best_val_accuracy = best_acc;
  net = std::move(best);
  return report;
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t n = 0;
  for (const auto& row : counts) {
    for (auto c : row) n += c;
  }
  return n;
}

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t n = 0;
  for (std::size_t k = 0; k < kNumClasses; ++k) n += counts[k][k];
  return n;
}

double ConfusionMatrix::accuracy() const {
  const auto n = total();
  return n == 0 ? 0.0 : static_cast<double>(trace()) / static_cast<double>(n);
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t cls) const {
  std::uint64_t n = 0;
  for (auto c : counts[cls]) n += c;
  return n;
}

std::string ConfusionMatrix::to_csv() const {
  std::ostringstream out;
  for (std::size_t k = 0; k < class_names.size(); ++k) out << (k ? "," : "") << class_names[k];
  out << "\n";
  for (const auto& row : counts) {
    for (std::size_t k = 0; k < row.size(); ++k) out << (k ? "," : "") << row[k];
    out << "\n";
  }
  char acc[32];
  std::snprintf(acc, sizeof acc, "%.4f", accuracy());
  out << "accuracy," << acc << "\n";
  return out.str();
}

Evaluation evaluate(const Network& net, const Dataset& data, std::span<const std::size_t> indices) {
  Evaluation ev;
  ev.confusion.class_names = data.class_names.empty() ? default_class_names() : data.class_names;
  for (std::size_t i : indices) {
    const auto& s = data.samples.at(i);
    const Tensor logits = net.forward(mask_to_tensor(s.mask));
    ++ev.confusion.counts.at(s.label)[argmax_label(logits.values())];
  }
  ev.accuracy = ev.confusion.accuracy();
  return ev;
}

Evaluation evaluate(const Network& net, const Dataset& data, unsigned threads) {
  std::vector<std::size_t> all(data.samples.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(1, all.size()))));
  if (threads == 1) return evaluate(net, data, std::span<const std::size_t>(all));

  std::vector<Evaluation> parts(threads);
  std::vector<std::exception_ptr> errors(threads);
  {
    std::vector<std::jthread> workers;
    const std::size_t chunk = (all.size() + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
      workers.emplace_back([&, t] {
        try {
          const std::size_t lo = std::min(all.size(), t * chunk);
          const std::size_t hi = std::min(all.size(), lo + chunk);
          parts[t] = evaluate(net, data, std::span<const std::size_t>(all).subspan(lo, hi - lo));
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  Evaluation ev;
  ev.confusion.class_names = data.class_names.empty() ? default_class_names() : data.class_names;
  for (const auto& p : parts) {
    for (std::size_t r = 0; r < kNumClasses; ++r) {
      for (std::size_t c = 0; c < kNumClasses; ++c) ev.confusion.counts[r][c] += p.confusion.counts[r][c];
    }
  }
  ev.accuracy = ev.confusion.accuracy();
  return ev;
}

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, sizeof bits);
  put_u32(out, bits);
}

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  return static_cast<std::uint32_t>(::crc32(0L, bytes.data(), static_cast<uInt>(bytes.size())));
}

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) fail(ErrorCode::TruncatedBody, std::string("weight file truncated in ") + what);
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return bytes_[pos_++];
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32(const char* what) {
    const std::uint32_t bits = u32(what);
    float f;
    std::memcpy(&f, &bits, sizeof f);
    return f;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> save_weights(const Network& net) {
  check_architecture(net);
  std::vector<std::uint8_t> out = {'H', 'G', 'N', 'W'};
  put_u32(out, kWeightsVersion);
  std::uint32_t records = 0;
  for (const auto& l : net.layers) records += l.parametric() ? 1 : 0;
  put_u32(out, records);
  for (const auto& l : net.layers) {
    if (!l.parametric()) continue;
    out.push_back(static_cast<std::uint8_t>(l.kind));
    put_u32(out, static_cast<std::uint32_t>(l.weights.rank()));
    for (auto d : l.weights.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (float w : l.weights.values()) {
      if (!std::isfinite(w)) fail(ErrorCode::InvalidArgument, "cannot save non-finite weights");
      put_f32(out, w);
    }
    for (float b : l.bias.values()) {
      if (!std::isfinite(b)) fail(ErrorCode::InvalidArgument, "cannot save non-finite weights");
      put_f32(out, b);
    }
  }
  put_u32(out, crc32_of(out));
  return out;
}

Network load_weights(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes);
  in.need(4, "magic");
  if (std::memcmp(bytes.data(), "HGNW", 4) != 0) fail(ErrorCode::BadMagic, "not an HGNW weight file");
  for (int i = 0; i < 4; ++i) in.u8("magic");
  const std::uint32_t version = in.u32("version");
  if (version != kWeightsVersion) fail(ErrorCode::VersionMismatch, "weight file version " + std::to_string(version));
  const std::uint32_t records = in.u32("record count");

  Network net = zero_network();
  std::vector<LayerParams*> targets;
  for (auto& l : net.layers) {
    if (l.parametric()) targets.push_back(&l);
  }
  if (records != targets.size()) fail(ErrorCode::ShapeMismatch, "expected " + std::to_string(targets.size()) + " layer records");
  for (std::size_t r = 0; r < targets.size(); ++r) {
    LayerParams& layer = *targets[r];
    const auto kind = static_cast<LayerKind>(in.u8("layer kind"));
    if (kind != layer.kind) fail(ErrorCode::ShapeMismatch, "record " + std::to_string(r) + " has wrong layer kind");
    const std::uint32_t rank = in.u32("rank");
    if (rank != layer.weights.rank()) fail(ErrorCode::ShapeMismatch, "record " + std::to_string(r) + " has wrong rank");
    for (std::uint32_t d = 0; d < rank; ++d) {
      if (in.u32("dims") != layer.weights.dim(d)) {
        fail(ErrorCode::ShapeMismatch, "record " + std::to_string(r) + " has wrong dimensions");
      }
    }
    for (float& w : layer.weights.values()) w = in.f32("payload");
    for (float& b : layer.bias.values()) b = in.f32("payload");
  }
  const std::size_t body_end = in.pos();
  const std::uint32_t stored = in.u32("checksum");
  if (in.remaining() != 0) fail(ErrorCode::ShapeMismatch, "trailing bytes after checksum");
  if (stored != crc32_of(bytes.first(body_end))) fail(ErrorCode::ChecksumMismatch, "CRC32 mismatch");
  for (const auto* layer : targets) {
    for (float w : layer->weights.values()) {
      if (!std::isfinite(w)) fail(ErrorCode::BadWeights, "non-finite parameter in weight file");
    }
    for (float b : layer->bias.values()) {
      if (!std::isfinite(b)) fail(ErrorCode::BadWeights, "non-finite parameter in weight file");
    }
  }
  return net;
}

void save_weights_file(const std::string& path, const Network& net) {
  const auto bytes = save_weights(net);
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::Io, "short write to " + path);
}

Network load_weights_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return load_weights(bytes);
}

}  // namespace hgr

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fbe/errors.hpp"
#include "fbe/scene.hpp"
#include "fbe/text_io.hpp"

namespace fbe {

/// Seeded generator with library-independent distributions. The standard
/// distributions are implementation-defined, which would break bit-reproducible
/// checkpoints across standard libraries; mt19937_64 itself is fully specified.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Rejection sampling keeps it unbiased.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw InputError("Rng::below(0)");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

 private:
  std::mt19937_64 engine_;
};

struct MlpConfig {
  std::size_t input_width = 1;
  std::vector<std::size_t> hidden_widths{256, 64};
  std::size_t output_width = 1;
  std::uint64_t seed = 0;
  double learning_rate = 0.005;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  std::size_t iterations = 20000;

  void validate() const {
    if (input_width == 0 || output_width == 0) throw InputError("layer widths must be positive");
    for (auto w : hidden_widths)
      if (w == 0) throw InputError("hidden widths must be positive");
    if (!(learning_rate >= 0.0)) throw InputError("learning rate must be non-negative");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw InputError("momentum must lie in [0, 1)");
    if (!(weight_decay >= 0.0)) throw InputError("weight decay must be non-negative");
  }
};

struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weights;  // out x in, row-major
  std::vector<double> bias;     // out

  DenseLayer() = default;
  DenseLayer(std::size_t in_width, std::size_t out_width)
      : in(in_width), out(out_width), weights(in_width * out_width, 0.0), bias(out_width, 0.0) {}

  double& w(std::size_t row, std::size_t col) { return weights[row * in + col]; }
  double w(std::size_t row, std::size_t col) const { return weights[row * in + col]; }

  bool operator==(const DenseLayer&) const = default;
};

/// Fully connected network: rectifier on hidden layers, softmax on the output.
struct MlpModel {
  std::vector<DenseLayer> layers;

  std::size_t input_width() const { return layers.empty() ? 0 : layers.front().in; }
  std::size_t output_width() const { return layers.empty() ? 0 : layers.back().out; }

  /// Same shape, all parameters zero.
  MlpModel zeros_like() const {
    MlpModel z;
    for (const auto& l : layers) z.layers.emplace_back(l.in, l.out);
    return z;
  }

  /// Sum of squared weights (biases excluded).
  double weight_norm_squared() const {
    double s = 0.0;
    for (const auto& l : layers)
      for (double w : l.weights) s += w * w;
    return s;
  }

  bool operator==(const MlpModel&) const = default;
};

inline MlpModel zero_model(std::size_t input_width, const std::vector<std::size_t>& hidden,
                           std::size_t output_width) {
  MlpModel m;
  std::size_t prev = input_width;
  for (auto h : hidden) {
    m.layers.emplace_back(prev, h);
    prev = h;
  }
  m.layers.emplace_back(prev, output_width);
  return m;
}

/// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
inline MlpModel init_model(const MlpConfig& config, Rng& rng) {
  config.validate();
  auto m = zero_model(config.input_width, config.hidden_widths, config.output_width);
  for (auto& l : m.layers) {
    const double limit = std::sqrt(6.0 / static_cast<double>(l.in + l.out));
    for (auto& w : l.weights) w = rng.uniform(-limit, limit);
  }
  return m;
}

inline MlpModel init_model(const MlpConfig& config) {
  Rng rng(config.seed);
  return init_model(config, rng);
}

struct TrainingExample {
  std::vector<double> feature;
  PredicateId label = 0;
};

namespace detail {

/// Activations of one forward pass. pre[l] are layer outputs before the nonlinearity,
/// post[l] the inputs to layer l (post[0] is the feature itself).
struct ForwardTrace {
  std::vector<std::vector<double>> post;
  std::vector<std::vector<double>> pre;
};

inline void check_input(const MlpModel& model, std::span<const double> feature) {
  if (model.layers.empty()) throw InputError("model has no layers");
  if (feature.size() != model.input_width())
    throw InputError("feature width " + std::to_string(feature.size()) + ", model expects " +
                     std::to_string(model.input_width()));
}

inline void forward_trace(const MlpModel& model, std::span<const double> feature,
                          ForwardTrace& trace) {
  check_input(model, feature);
  const std::size_t n = model.layers.size();
  trace.post.resize(n);
  trace.pre.resize(n);
  trace.post[0].assign(feature.begin(), feature.end());
  for (std::size_t li = 0; li < n; ++li) {
    const auto& l = model.layers[li];
    auto& z = trace.pre[li];
    z.assign(l.bias.begin(), l.bias.end());
    const auto& x = trace.post[li];
    for (std::size_t r = 0; r < l.out; ++r) {
      const double* row = l.weights.data() + r * l.in;
      double acc = 0.0;
      for (std::size_t c = 0; c < l.in; ++c) acc += row[c] * x[c];
      z[r] += acc;
    }
    if (li + 1 < n) {
      auto& h = trace.post[li + 1];
      h.resize(l.out);
      for (std::size_t r = 0; r < l.out; ++r) h[r] = z[r] > 0.0 ? z[r] : 0.0;
    }
  }
}

/// Stable softmax; returns log-sum-exp through `lse`.
inline std::vector<double> softmax(std::span<const double> logits, double* lse = nullptr) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double z : logits) {
    if (!std::isfinite(z)) throw NumericError("non-finite logit");
    mx = std::max(mx, z);
  }
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    sum += p[i];
  }
  for (auto& v : p) v /= sum;
  if (lse) *lse = mx + std::log(sum);
  return p;
}

}  // namespace detail

/// Raw output-layer scores.
inline std::vector<double> logits(const MlpModel& model, std::span<const double> feature) {
  detail::ForwardTrace trace;
  detail::forward_trace(model, feature, trace);
  return trace.pre.back();
}

/// Predicate distribution for one relationship feature.
inline std::vector<double> forward(const MlpModel& model, std::span<const double> feature) {
  return detail::softmax(logits(model, feature));
}

struct LossAndGradient {
  double loss = 0.0;
  MlpModel gradient;
};

/// Mean softmax cross-entropy over the batch plus (weight_decay / 2) * sum ||W||^2.
/// Biases are not decayed. The gradient is exact for this objective.
inline LossAndGradient loss_and_gradient(const MlpModel& model,
                                         std::span<const TrainingExample> batch,
                                         double weight_decay) {
  if (batch.empty()) throw InputError("loss needs a non-empty batch");
  const std::size_t n_layers = model.layers.size();
  LossAndGradient out{0.0, model.zeros_like()};
  const double scale = 1.0 / static_cast<double>(batch.size());

  detail::ForwardTrace trace;
  std::vector<double> delta, prev_delta;
  for (const auto& ex : batch) {
    if (ex.label >= model.output_width())
      throw InputError("label " + std::to_string(ex.label) + " outside " +
                       std::to_string(model.output_width()) + " classes");
    detail::forward_trace(model, ex.feature, trace);
    double lse = 0.0;
    delta = detail::softmax(trace.pre.back(), &lse);
    out.loss += (lse - trace.pre.back()[ex.label]) * scale;
    delta[ex.label] -= 1.0;
    for (auto& d : delta) d *= scale;

    for (std::size_t li = n_layers; li-- > 0;) {
      const auto& l = model.layers[li];
      auto& g = out.gradient.layers[li];
      const auto& x = trace.post[li];
      for (std::size_t r = 0; r < l.out; ++r) {
        const double d = delta[r];
        if (d == 0.0) continue;
        g.bias[r] += d;
        double* grow = g.weights.data() + r * l.in;
        for (std::size_t c = 0; c < l.in; ++c) grow[c] += d * x[c];
      }
      if (li == 0) break;
      prev_delta.assign(l.in, 0.0);
      for (std::size_t r = 0; r < l.out; ++r) {
        const double d = delta[r];
        if (d == 0.0) continue;
        const double* row = l.weights.data() + r * l.in;
        for (std::size_t c = 0; c < l.in; ++c) prev_delta[c] += row[c] * d;
      }
      const auto& z_prev = trace.pre[li - 1];
      for (std::size_t c = 0; c < l.in; ++c)
        if (!(z_prev[c] > 0.0)) prev_delta[c] = 0.0;
      std::swap(delta, prev_delta);
    }
  }

  if (weight_decay != 0.0) {
    out.loss += 0.5 * weight_decay * model.weight_norm_squared();
    for (std::size_t li = 0; li < n_layers; ++li) {
      const auto& w = model.layers[li].weights;
      auto& g = out.gradient.layers[li].weights;
      for (std::size_t i = 0; i < w.size(); ++i) g[i] += weight_decay * w[i];
    }
  }
  if (!std::isfinite(out.loss)) throw NumericError("loss is not finite");
  return out;
}

/// Examples grouped by image; one group forms one batch.
using GroupedDataset = std::vector<std::vector<TrainingExample>>;

struct TrainProgress {
  std::size_t iteration = 0;  // 1-based count of completed iterations
  double mean_loss = 0.0;     // mean batch loss since the previous report
};

struct TrainOptions {
  std::size_t log_every = 100;
  std::function<void(const TrainProgress&)> on_progress;
};

/// SGD with classic momentum (v <- mu v - lr g, theta <- theta + v). Each iteration takes
/// one image's examples as the batch, visiting images round-robin in a seeded order that
/// is reshuffled every epoch. Initialization and shuffling share one generator seeded
/// from config.seed.
inline MlpModel train(const MlpConfig& config, const GroupedDataset& dataset,
                      const TrainOptions& options = {}) {
  config.validate();
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (dataset[i].empty()) continue;
    for (const auto& ex : dataset[i])
      if (ex.feature.size() != config.input_width)
        throw InputError("training feature width " + std::to_string(ex.feature.size()) +
                         ", expected " + std::to_string(config.input_width));
    order.push_back(i);
  }
  if (order.empty()) throw InputError("training dataset has no labeled examples");

  Rng rng(config.seed);
  MlpModel model = init_model(config, rng);
  MlpModel velocity = model.zeros_like();

  double loss_acc = 0.0;
  std::size_t loss_n = 0;
  for (std::size_t it = 0; it < config.iterations; ++it) {
    const std::size_t pos = it % order.size();
    if (pos == 0) rng.shuffle(order);
    const auto& batch = dataset[order[pos]];
    auto lg = loss_and_gradient(model, batch, config.weight_decay);
    loss_acc += lg.loss;
    ++loss_n;
    for (std::size_t li = 0; li < model.layers.size(); ++li) {
      auto update = [&](std::vector<double>& param, std::vector<double>& vel,
                        const std::vector<double>& grad) {
        for (std::size_t i = 0; i < param.size(); ++i) {
          vel[i] = config.momentum * vel[i] - config.learning_rate * grad[i];
          param[i] += vel[i];
        }
      };
      update(model.layers[li].weights, velocity.layers[li].weights, lg.gradient.layers[li].weights);
      update(model.layers[li].bias, velocity.layers[li].bias, lg.gradient.layers[li].bias);
    }
    if (options.on_progress && options.log_every > 0 && (it + 1) % options.log_every == 0) {
      options.on_progress({it + 1, loss_acc / static_cast<double>(loss_n)});
      loss_acc = 0.0;
      loss_n = 0;
    }
  }
  return model;
}

struct ScoredPredicate {
  PredicateId predicate = 0;
  double score = 0.0;
  bool operator==(const ScoredPredicate&) const = default;
};

/// Orders probabilities descending, ties by predicate id, keeps min(k, P).
inline std::vector<ScoredPredicate> top_k(std::span<const double> probabilities, std::size_t k) {
  if (k < 1) throw InputError("top-k needs k >= 1");
  std::vector<ScoredPredicate> all;
  all.reserve(probabilities.size());
  for (std::size_t i = 0; i < probabilities.size(); ++i)
    all.push_back({static_cast<PredicateId>(i), probabilities[i]});
  const std::size_t keep = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(),
                    [](const ScoredPredicate& a, const ScoredPredicate& b) {
                      if (a.score != b.score) return a.score > b.score;
                      return a.predicate < b.predicate;
                    });
  all.resize(keep);
  return all;
}

inline std::vector<ScoredPredicate> predict_topk(const MlpModel& model,
                                                 std::span<const double> feature, std::size_t k) {
  return top_k(forward(model, feature), k);
}

inline double accuracy(const MlpModel& model, std::span<const TrainingExample> examples) {
  if (examples.empty()) return 0.0;
  std::size_t hit = 0;
  for (const auto& ex : examples)
    if (predict_topk(model, ex.feature, 1).front().predicate == ex.label) ++hit;
  return static_cast<double>(hit) / static_cast<double>(examples.size());
}

inline double accuracy(const MlpModel& model, const GroupedDataset& dataset) {
  std::size_t hit = 0, total = 0;
  for (const auto& g : dataset) {
    for (const auto& ex : g) {
      ++total;
      if (predict_topk(model, ex.feature, 1).front().predicate == ex.label) ++hit;
    }
  }
  return total ? static_cast<double>(hit) / static_cast<double>(total) : 0.0;
}

// ---------------------------------------------------------------------------
// Checkpoint
//
//   #fbe-checkpoint v1 <key>=<value> ...      (config plus caller metadata)
//   layer <in> <out>
//   w <in values>                               (out lines, row-major)
//   b <out values>
//
// Values use the shortest round-trip decimal form, so parse(serialize(m)) == m bit for bit.
// ---------------------------------------------------------------------------

struct Checkpoint {
  MlpConfig config;
  std::map<std::string, std::string> metadata;
  MlpModel model;
};

namespace detail {

inline std::string join_widths(const std::vector<std::size_t>& w) {
  std::string s;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(w[i]);
  }
  return s.empty() ? "none" : s;
}

inline std::vector<std::size_t> parse_widths(const std::string& s, const std::string& where) {
  std::vector<std::size_t> out;
  if (s == "none" || s.empty()) return out;
  std::size_t start = 0;
  while (start <= s.size()) {
    auto comma = s.find(',', start);
    if (comma == std::string::npos) comma = s.size();
    out.push_back(static_cast<std::size_t>(
        parse_uint(std::string_view(s).substr(start, comma - start), where)));
    start = comma + 1;
  }
  return out;
}

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& ck) {
  FileHeader h{"fbe-checkpoint", 1, ck.metadata};
  h.fields["tool"] = std::string(kToolVersion);
  h.fields["input"] = std::to_string(ck.config.input_width);
  h.fields["hidden"] = detail::join_widths(ck.config.hidden_widths);
  h.fields["output"] = std::to_string(ck.config.output_width);
  h.fields["seed"] = std::to_string(ck.config.seed);
  h.fields["lr"] = format_double(ck.config.learning_rate);
  h.fields["momentum"] = format_double(ck.config.momentum);
  h.fields["weight_decay"] = format_double(ck.config.weight_decay);
  h.fields["iterations"] = std::to_string(ck.config.iterations);

  std::string out = h.to_line() + "\n";
  for (const auto& l : ck.model.layers) {
    out += "layer " + std::to_string(l.in) + " " + std::to_string(l.out) + "\n";
    for (std::size_t r = 0; r < l.out; ++r) {
      out += "w";
      for (std::size_t c = 0; c < l.in; ++c) out += " " + format_double(l.w(r, c));
      out += "\n";
    }
    out += "b";
    for (double b : l.bias) out += " " + format_double(b);
    out += "\n";
  }
  return out;
}

inline Checkpoint parse_checkpoint(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw FormatError(source + ": empty checkpoint");
  auto h = FileHeader::parse(line, "fbe-checkpoint", 1, source);

  Checkpoint ck;
  ck.config.input_width = parse_uint(h.get("input"), source);
  ck.config.hidden_widths = detail::parse_widths(h.get("hidden"), source);
  ck.config.output_width = parse_uint(h.get("output"), source);
  ck.config.seed = parse_uint(h.get("seed"), source);
  ck.config.learning_rate = parse_double(h.get("lr"), source);
  ck.config.momentum = parse_double(h.get("momentum"), source);
  ck.config.weight_decay = parse_double(h.get("weight_decay"), source);
  ck.config.iterations = parse_uint(h.get("iterations"), source);
  for (const char* k : {"tool", "input", "hidden", "output", "seed", "lr", "momentum",
                        "weight_decay", "iterations"})
    h.fields.erase(k);
  ck.metadata = std::move(h.fields);

  std::size_t lineno = 1;
  auto next_tokens = [&](const char* tag) {
    if (!std::getline(in, line))
      throw FormatError(source + ": truncated checkpoint, expected '" + tag + "'");
    ++lineno;
    auto tok = split_ws(line);
    if (tok.empty() || tok[0] != tag)
      throw FormatError(source + ":" + std::to_string(lineno) + ": expected '" + tag + "' line");
    return tok;
  };
  const std::size_t n_layers = ck.config.hidden_widths.size() + 1;
  std::size_t prev = ck.config.input_width;
  for (std::size_t li = 0; li < n_layers; ++li) {
    auto tok = next_tokens("layer");
    const std::string where = source + ":" + std::to_string(lineno);
    if (tok.size() != 3) throw FormatError(where + ": layer line needs in and out widths");
    const std::size_t lin = parse_uint(tok[1], where), lout = parse_uint(tok[2], where);
    const std::size_t expect_out =
        li + 1 < n_layers ? ck.config.hidden_widths[li] : ck.config.output_width;
    if (lin != prev || lout != expect_out)
      throw FormatError(where + ": layer shape does not match header widths");
    DenseLayer l(lin, lout);
    for (std::size_t r = 0; r < lout; ++r) {
      auto wt = next_tokens("w");
      const std::string wwhere = source + ":" + std::to_string(lineno);
      if (wt.size() != lin + 1) throw FormatError(wwhere + ": weight row has wrong length");
      for (std::size_t c = 0; c < lin; ++c) l.w(r, c) = parse_double(wt[c + 1], wwhere);
    }
    auto bt = next_tokens("b");
    const std::string bwhere = source + ":" + std::to_string(lineno);
    if (bt.size() != lout + 1) throw FormatError(bwhere + ": bias row has wrong length");
    for (std::size_t r = 0; r < lout; ++r) l.bias[r] = parse_double(bt[r + 1], bwhere);
    ck.model.layers.push_back(std::move(l));
    prev = lout;
  }
  return ck;
}

}  // namespace fbe

#include "tenet/convnet.hpp"

#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include "tenet/ops.hpp"

namespace tenet {

ModelSpec ModelSpec::desk_default() {
  ModelSpec spec;
  spec.stages = {{32, 3, 1, 1, true}, {64, 3, 1, 1, true}, {128, 3, 1, 1, false}};
  spec.split_point = 3;
  return spec;
}

namespace {

struct Extent {
  std::size_t channels, height, width;
};

Extent apply_stage(const Extent& in, const ConvStage& s) {
  Extent out{s.out_channels,
             ops::conv_output_extent(in.height, s.kernel, s.stride, s.padding),
             ops::conv_output_extent(in.width, s.kernel, s.stride, s.padding)};
  if (s.pool) {
    if (out.height < 2 || out.width < 2) {
      throw DimensionError("pooling needs at least a 2x2 map");
    }
    out.height = (out.height - 2) / 2 + 1;
    out.width = (out.width - 2) / 2 + 1;
  }
  return out;
}

}  // namespace

void ModelSpec::validate() const {
  if (in_channels == 0 || height == 0 || width == 0) {
    throw std::invalid_argument("model: empty input shape");
  }
  if (stages.empty()) throw std::invalid_argument("model: no conv stages");
  if (split_point == 0 || split_point > stages.size()) {
    throw std::invalid_argument("model: split point must lie in [1, " +
                                std::to_string(stages.size()) + "]");
  }
  if (num_classes < 2) throw std::invalid_argument("model: need >= 2 classes");
  Extent e{in_channels, height, width};
  for (const ConvStage& s : stages) {
    if (s.out_channels == 0 || s.kernel == 0 || s.stride == 0) {
      throw std::invalid_argument("model: malformed conv stage");
    }
    try {
      e = apply_stage(e, s);
    } catch (const DimensionError& err) {
      throw std::invalid_argument(std::string("model: ") + err.what());
    }
  }
  for (std::size_t h : head_hidden) {
    if (h == 0) throw std::invalid_argument("model: zero-width hidden layer");
  }
}

Shape ModelSpec::feature_shape() const {
  Extent e{in_channels, height, width};
  for (std::size_t i = 0; i < split_point; ++i) e = apply_stage(e, stages[i]);
  return {e.channels, e.height, e.width};
}

std::size_t ModelSpec::parameter_count() const {
  std::size_t count = 0;
  std::size_t channels = in_channels;
  for (const ConvStage& s : stages) {
    count += s.out_channels * channels * s.kernel * s.kernel + s.out_channels;
    channels = s.out_channels;
  }
  std::size_t width_in = channels;
  for (std::size_t h : head_hidden) {
    count += h * width_in + h;
    width_in = h;
  }
  return count + num_classes * width_in + num_classes;
}

std::string to_string(const ModelSpec& spec) {
  std::ostringstream out;
  out << "input=" << spec.in_channels << "x" << spec.height << "x" << spec.width
      << ";stages=";
  for (std::size_t i = 0; i < spec.stages.size(); ++i) {
    const ConvStage& s = spec.stages[i];
    if (i != 0) out << ",";
    out << s.out_channels << ":" << s.kernel << ":" << s.stride << ":"
        << s.padding << (s.pool ? ":pool" : "");
  }
  out << ";split=" << spec.split_point << ";hidden=";
  for (std::size_t i = 0; i < spec.head_hidden.size(); ++i) {
    out << (i != 0 ? "," : "") << spec.head_hidden[i];
  }
  out << ";classes=" << spec.num_classes;
  return out.str();
}

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) parts.push_back(cur);
  if (!s.empty() && s.back() == sep) parts.emplace_back();
  return parts;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::size_t to_size(const std::string& s) {
  std::size_t pos = 0;
  const auto t = trim(s);
  const unsigned long long v = std::stoull(t, &pos);
  if (pos != t.size()) throw std::invalid_argument("not an integer: '" + s + "'");
  return static_cast<std::size_t>(v);
}

}  // namespace

ModelSpec parse_model_spec(const std::string& text) {
  ModelSpec spec;
  spec.stages.clear();
  for (const std::string& field : split(text, ';')) {
    const auto eq = field.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("model spec: malformed field '" + field + "'");
    }
    const std::string key = trim(field.substr(0, eq));
    const std::string value = trim(field.substr(eq + 1));
    if (key == "input") {
      const auto dims = split(value, 'x');
      if (dims.size() != 3) throw std::invalid_argument("model spec: input must be CxHxW");
      spec.in_channels = to_size(dims[0]);
      spec.height = to_size(dims[1]);
      spec.width = to_size(dims[2]);
    } else if (key == "stages") {
      for (const std::string& st : split(value, ',')) {
        const auto p = split(trim(st), ':');
        if (p.size() < 4 || p.size() > 5 || (p.size() == 5 && trim(p[4]) != "pool")) {
          throw std::invalid_argument("model spec: stage must be out:kernel:stride:padding[:pool], got '" + st + "'");
        }
        spec.stages.push_back({to_size(p[0]), to_size(p[1]), to_size(p[2]),
                               to_size(p[3]), p.size() == 5});
      }
    } else if (key == "split") {
      spec.split_point = to_size(value);
    } else if (key == "hidden") {
      spec.head_hidden.clear();
      if (!value.empty()) {
        for (const std::string& h : split(value, ',')) spec.head_hidden.push_back(to_size(h));
      }
    } else if (key == "classes") {
      spec.num_classes = to_size(value);
    } else {
      throw std::invalid_argument("model spec: unknown field '" + key + "'");
    }
  }
  spec.validate();
  return spec;
}

ConvNet ConvNet::zeros(const ModelSpec& spec) {
  spec.validate();
  ConvNet net;
  net.spec_ = spec;
  std::size_t channels = spec.in_channels;
  for (std::size_t i = 0; i < spec.stages.size(); ++i) {
    const ConvStage& s = spec.stages[i];
    const std::string prefix = "conv" + std::to_string(i);
    net.params_.push_back(
        {prefix + ".weight", Tensor::zeros({s.out_channels, channels, s.kernel, s.kernel}), {}});
    net.params_.push_back({prefix + ".bias", Tensor::zeros({s.out_channels}), {}});
    channels = s.out_channels;
  }
  std::size_t width_in = channels;
  std::vector<std::size_t> widths = spec.head_hidden;
  widths.push_back(spec.num_classes);
  for (std::size_t i = 0; i < widths.size(); ++i) {
    const std::string prefix = "dense" + std::to_string(i);
    net.params_.push_back({prefix + ".weight", Tensor::zeros({widths[i], width_in}), {}});
    net.params_.push_back({prefix + ".bias", Tensor::zeros({widths[i]}), {}});
    width_in = widths[i];
  }
  for (Parameter& p : net.params_) p.zero_grad();
  return net;
}

ConvNet ConvNet::init(const ModelSpec& spec, std::uint64_t seed) {
  ConvNet net = zeros(spec);
  std::mt19937_64 rng(seed);
  for (Parameter& p : net.params_) {
    if (p.value.rank() == 1) continue;  // bias
    std::size_t fan_in = 1;
    for (std::size_t a = 1; a < p.value.rank(); ++a) fan_in *= p.value.dim(a);
    std::normal_distribution<float> dist(0.0f, std::sqrt(2.0f / static_cast<float>(fan_in)));
    for (float& v : p.value.data()) v = dist(rng);
  }
  return net;
}

Parameter& ConvNet::param(const std::string& name) {
  for (Parameter& p : params_) {
    if (p.name == name) return p;
  }
  throw std::out_of_range("no parameter named '" + name + "'");
}

BoundParams ConvNet::bind(Tape& tape) {
  BoundParams bound;
  for (Parameter& p : params_) bound.vars.push_back(tape.parameter(p));
  return bound;
}

BoundParams ConvNet::bind_frozen(Tape& tape) const {
  BoundParams bound;
  for (const Parameter& p : params_) bound.vars.push_back(tape.constant(p.value));
  return bound;
}

std::size_t ConvNet::head_param_offset() const { return 2 * spec_.stages.size(); }

namespace {

Var run_stage(const BoundParams& bound, std::size_t index, const ConvStage& s,
              const Var& x) {
  Var y = ops::conv2d(x, bound.vars[2 * index], s.stride, s.padding);
  y = ops::relu(ops::add_channel_bias(y, bound.vars[2 * index + 1]));
  return s.pool ? ops::max_pool2d(y, 2, 2) : y;
}

}  // namespace

void ConvNet::check_input(const Tensor& x) const {
  if (x.rank() != 4 || Shape(x.shape().begin() + 1, x.shape().end()) != spec_.input_shape()) {
    throw DimensionError("model expects input [N," + std::to_string(spec_.in_channels) +
                         "," + std::to_string(spec_.height) + "," +
                         std::to_string(spec_.width) + "], got " + to_string(x.shape()));
  }
}

Var ConvNet::forward_features(const BoundParams& bound, const Var& x) const {
  check_input(x.value());
  Var y = x;
  for (std::size_t i = 0; i < spec_.split_point; ++i) {
    y = run_stage(bound, i, spec_.stages[i], y);
  }
  return y;
}

Var ConvNet::forward_classifier(const BoundParams& bound, const Var& features) const {
  const Tensor& a = features.value();
  const Shape expected = spec_.feature_shape();
  if (a.rank() != 4 || Shape(a.shape().begin() + 1, a.shape().end()) != expected) {
    throw DimensionError("classifier expects features [N," + std::to_string(expected[0]) +
                         "," + std::to_string(expected[1]) + "," +
                         std::to_string(expected[2]) + "], got " + to_string(a.shape()));
  }
  Var y = features;
  for (std::size_t i = spec_.split_point; i < spec_.stages.size(); ++i) {
    y = run_stage(bound, i, spec_.stages[i], y);
  }
  y = ops::global_avg_pool(y);
  const std::size_t layers = spec_.head_hidden.size() + 1;
  for (std::size_t i = 0; i < layers; ++i) {
    const std::size_t k = head_param_offset() + 2 * i;
    y = ops::dense(y, bound.vars[k], bound.vars[k + 1]);
    if (i + 1 < layers) y = ops::relu(y);
  }
  return y;
}

Var ConvNet::forward(const BoundParams& bound, const Var& x) const {
  return forward_classifier(bound, forward_features(bound, x));
}

Tensor ConvNet::features(const Tensor& x) const {
  Tape tape;
  const BoundParams bound = bind_frozen(tape);
  return forward_features(bound, tape.constant(x)).value();
}

Tensor ConvNet::classify(const Tensor& features) const {
  Tape tape;
  const BoundParams bound = bind_frozen(tape);
  return forward_classifier(bound, tape.constant(features)).value();
}

Tensor ConvNet::logits(const Tensor& x) const {
  Tape tape;
  const BoundParams bound = bind_frozen(tape);
  return forward(bound, tape.constant(x)).value();
}

std::vector<int> argmax_rows(const Tensor& logits) {
  if (logits.rank() != 2) throw DimensionError("argmax_rows: expected [N, K]");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  std::vector<int> out(n);
  for (std::size_t r = 0; r < n; ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < k; ++c) {
      if (logits[r * k + c] > logits[r * k + best]) best = c;
    }
    out[r] = static_cast<int>(best);
  }
  return out;
}

}  // namespace tenet

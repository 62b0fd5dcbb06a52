// SPDX-License-Identifier: Apache-2.0
#include "evfl/models.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>

#include "evfl/csv.hpp"
#include "evfl/error.hpp"

namespace evfl {
namespace {

constexpr char kMagic[8] = {'E', 'V', 'F', 'L', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in[at + i]) << (8 * i);
  return v;
}

void init_uniform(std::span<double> w, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : w) v = dist(rng);
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

std::string dense_name(std::size_t layer, const char* what) {
  return "dense" + std::to_string(layer) + "." + what;
}

}  // namespace

std::size_t ParameterSegment::size() const {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

ParameterLayout& ParameterLayout::add(std::string name,
                                      std::vector<std::size_t> shape) {
  ParameterSegment seg{std::move(name), size_, std::move(shape)};
  size_ += seg.size();
  segments_.push_back(std::move(seg));
  return *this;
}

const ParameterSegment& ParameterLayout::segment(std::string_view name) const {
  for (const auto& s : segments_) {
    if (s.name == name) return s;
  }
  throw ValidationError("no parameter segment '" + std::string(name) + "'");
}

std::span<double> ModelParameters::segment(std::string_view name) {
  const auto& s = layout.segment(name);
  return std::span<double>(values).subspan(s.offset, s.size());
}

std::span<const double> ModelParameters::segment(std::string_view name) const {
  const auto& s = layout.segment(name);
  return std::span<const double>(values).subspan(s.offset, s.size());
}

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<std::uint8_t> serialize_parameters(const ModelParameters& params,
                                               std::uint64_t arch_hash) {
  std::vector<std::uint8_t> out;
  out.reserve(kCheckpointHeaderBytes + 8 * params.values.size());
  for (char c : kMagic) out.push_back(static_cast<std::uint8_t>(c));
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<std::uint8_t>(kCheckpointVersion >> (8 * i)));
  }
  put_u64(out, arch_hash);
  put_u64(out, params.values.size());
  for (double v : params.values) put_u64(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

ModelParameters deserialize_parameters(std::span<const std::uint8_t> bytes,
                                       const ParameterLayout& layout,
                                       std::uint64_t arch_hash) {
  if (bytes.size() < kCheckpointHeaderBytes ||
      std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw ValidationError("checkpoint: bad magic");
  }
  std::uint32_t version = 0;
  for (int i = 0; i < 4; ++i) version |= static_cast<std::uint32_t>(bytes[8 + i]) << (8 * i);
  if (version != kCheckpointVersion) {
    throw ValidationError("checkpoint: unsupported version " + std::to_string(version));
  }
  if (get_u64(bytes, 12) != arch_hash) {
    throw ValidationError("checkpoint: architecture mismatch");
  }
  const std::uint64_t count = get_u64(bytes, 20);
  if (count != layout.size() ||
      bytes.size() != kCheckpointHeaderBytes + 8 * count) {
    throw ValidationError("checkpoint: parameter count mismatch");
  }
  ModelParameters p{layout, std::vector<double>(count)};
  for (std::size_t i = 0; i < count; ++i) {
    p.values[i] = std::bit_cast<double>(get_u64(bytes, kCheckpointHeaderBytes + 8 * i));
  }
  return p;
}

void adam_step(std::span<double> params, std::span<const double> grads,
               AdamState& state) {
  if (params.size() != grads.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw ValidationError("adam_step: layout mismatch");
  }
  const auto& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(c.beta1, t);
  const double bias2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * g;
    state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * g * g;
    const double m_hat = state.m[i] / bias1;
    const double v_hat = state.v[i] / bias2;
    params[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
  }
}

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kDummyMean: return "dummy-mean";
    case ModelKind::kDummyGaussian: return "dummy-gauss";
    case ModelKind::kLinear: return "lr";
    case ModelKind::kMlp: return "mlp";
  }
  return "unknown";
}

ModelKind parse_model_kind(std::string_view name) {
  if (name == "dummy-mean") return ModelKind::kDummyMean;
  if (name == "dummy-gauss") return ModelKind::kDummyGaussian;
  if (name == "lr") return ModelKind::kLinear;
  if (name == "mlp") return ModelKind::kMlp;
  throw ValidationError("model: unknown model '" + std::string(name) +
                        "' (expected dummy-mean|dummy-gauss|lr|mlp)");
}

DummyMean DummyMean::fit(std::span<const double> targets) {
  if (targets.empty()) throw ValidationError("dummy-mean: empty training set");
  return {std::accumulate(targets.begin(), targets.end(), 0.0) /
          static_cast<double>(targets.size())};
}

DummyGaussian DummyGaussian::fit(std::span<const double> targets) {
  const double mu = DummyMean::fit(targets).mean;
  double sq = 0.0;
  for (double y : targets) sq += (y - mu) * (y - mu);
  return {mu, std::sqrt(sq / static_cast<double>(targets.size()))};
}

double DummyGaussian::sample(Rng& rng) const {
  std::normal_distribution<double> z(0.0, 1.0);
  return mu + sigma * z(rng);
}

std::vector<double> DummyGaussian::predict(std::size_t n,
                                           std::uint64_t seed) const {
  Rng rng = make_rng(seed, {stream::kDummy});
  std::vector<double> out(n);
  for (double& v : out) v = sample(rng);
  return out;
}

void MlpSpec::validate() const {
  if (numeric_input_dim == 0) throw ValidationError("mlp: numeric_input_dim must be > 0");
  if (embedding_dim == 0) throw ValidationError("mlp: embedding_dim must be > 0");
  if (hidden.empty()) throw ValidationError("mlp: at least one hidden layer");
  for (auto h : hidden) {
    if (h == 0) throw ValidationError("mlp: hidden sizes must be positive");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw ValidationError("mlp: dropout_rate must be in [0, 1)");
  }
}

std::string MlpSpec::architecture() const {
  std::string s = "mlp;in=" + std::to_string(numeric_input_dim) +
                  ";emb=" + std::to_string(embedding_cardinality + 1) + "x" +
                  std::to_string(embedding_dim) + ";hidden=";
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(hidden[i]);
  }
  return s;
}

ParameterLayout MlpSpec::layout() const {
  ParameterLayout layout;
  layout.add("embedding", {embedding_cardinality + 1, embedding_dim});
  std::size_t in = embedding_dim + numeric_input_dim;
  for (std::size_t l = 0; l < hidden.size(); ++l) {
    layout.add(dense_name(l, "weight"), {hidden[l], in});
    layout.add(dense_name(l, "bias"), {hidden[l]});
    in = hidden[l];
  }
  layout.add("head.weight", {1, in});
  layout.add("head.bias", {1});
  return layout;
}

double softplus(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

double mlp_forward(const MlpSpec& spec, const ModelParameters& params,
                   std::span<const double> x, std::size_t station, Mode mode,
                   Rng* dropout_rng, MlpTape* tape) {
  if (x.size() != spec.numeric_input_dim) {
    throw ValidationError("mlp_forward: input dimension mismatch");
  }
  std::size_t row = station;
  if (row >= spec.embedding_cardinality) {
    if (mode == Mode::kTrain) {
      throw ValidationError("mlp_forward: station index out of range");
    }
    row = spec.embedding_cardinality;  // reserved unknown row
  }
  const bool drop = mode == Mode::kTrain && spec.dropout_rate > 0.0;
  if (drop && dropout_rng == nullptr) {
    throw ValidationError("mlp_forward: train mode needs a dropout generator");
  }
  const double keep_scale = 1.0 / (1.0 - spec.dropout_rate);
  std::bernoulli_distribution keep(1.0 - spec.dropout_rate);

  MlpTape local;
  MlpTape& t = tape ? *tape : local;
  t.embedding_row = row;
  t.inputs.resize(spec.hidden.size() + 1);
  t.pre.resize(spec.hidden.size());
  t.masks.resize(spec.hidden.size());

  auto emb = params.segment("embedding").subspan(row * spec.embedding_dim,
                                                 spec.embedding_dim);
  auto& a0 = t.inputs[0];
  a0.assign(emb.begin(), emb.end());
  a0.insert(a0.end(), x.begin(), x.end());

  for (std::size_t l = 0; l < spec.hidden.size(); ++l) {
    const auto& in = t.inputs[l];
    const std::size_t n_out = spec.hidden[l];
    const std::size_t n_in = in.size();
    auto w = params.segment(dense_name(l, "weight"));
    auto b = params.segment(dense_name(l, "bias"));
    auto& z = t.pre[l];
    auto& mask = t.masks[l];
    auto& out = t.inputs[l + 1];
    z.resize(n_out);
    mask.assign(n_out, 1.0);
    out.resize(n_out);
    for (std::size_t o = 0; o < n_out; ++o) {
      const double* wr = w.data() + o * n_in;
      double acc = b[o];
      for (std::size_t i = 0; i < n_in; ++i) acc += wr[i] * in[i];
      z[o] = acc;
      if (drop) mask[o] = keep(*dropout_rng) ? keep_scale : 0.0;
      out[o] = (acc > 0.0 ? acc : 0.0) * mask[o];
    }
  }

  const auto& last = t.inputs.back();
  auto hw = params.segment("head.weight");
  double z_out = params.segment("head.bias")[0];
  for (std::size_t i = 0; i < last.size(); ++i) z_out += hw[i] * last[i];
  t.output_pre = z_out;
  t.output = softplus(z_out);
  return t.output;
}

void mlp_backward(const MlpSpec& spec, const ModelParameters& params,
                  const MlpTape& tape, double dloss_doutput,
                  std::span<double> grad) {
  if (grad.size() != params.values.size()) {
    throw ValidationError("mlp_backward: gradient size mismatch");
  }
  const auto& layout = params.layout;
  auto grad_of = [&](std::string_view name) {
    const auto& s = layout.segment(name);
    return grad.subspan(s.offset, s.size());
  };

  const double g_out = dloss_doutput * sigmoid(tape.output_pre);
  const auto& last = tape.inputs.back();
  auto hw = params.segment("head.weight");
  auto g_hw = grad_of("head.weight");
  grad_of("head.bias")[0] += g_out;
  std::vector<double> upstream(last.size());
  for (std::size_t i = 0; i < last.size(); ++i) {
    g_hw[i] += g_out * last[i];
    upstream[i] = g_out * hw[i];
  }

  std::vector<double> dz;
  for (std::size_t l = spec.hidden.size(); l-- > 0;) {
    const auto& in = tape.inputs[l];
    const std::size_t n_out = spec.hidden[l];
    const std::size_t n_in = in.size();
    auto w = params.segment(dense_name(l, "weight"));
    auto g_w = grad_of(dense_name(l, "weight"));
    auto g_b = grad_of(dense_name(l, "bias"));
    dz.assign(n_out, 0.0);
    for (std::size_t o = 0; o < n_out; ++o) {
      if (tape.pre[l][o] > 0.0) dz[o] = upstream[o] * tape.masks[l][o];
    }
    std::vector<double> down(n_in, 0.0);
    for (std::size_t o = 0; o < n_out; ++o) {
      const double d = dz[o];
      if (d == 0.0) continue;
      g_b[o] += d;
      double* gw = g_w.data() + o * n_in;
      const double* wr = w.data() + o * n_in;
      for (std::size_t i = 0; i < n_in; ++i) {
        gw[i] += d * in[i];
        down[i] += wr[i] * d;
      }
    }
    upstream = std::move(down);
  }

  auto g_emb = grad_of("embedding").subspan(
      tape.embedding_row * spec.embedding_dim, spec.embedding_dim);
  for (std::size_t j = 0; j < spec.embedding_dim; ++j) g_emb[j] += upstream[j];
}

ParameterLayout linear_layout(std::size_t dim) {
  ParameterLayout layout;
  layout.add("weight", {dim});
  layout.add("bias", {1});
  return layout;
}

double linear_forward(const ModelParameters& params, std::span<const double> x) {
  auto w = params.segment("weight");
  if (x.size() != w.size()) {
    throw ValidationError("linear_forward: input dimension mismatch");
  }
  double y = params.segment("bias")[0];
  for (std::size_t i = 0; i < x.size(); ++i) y += w[i] * x[i];
  return y;
}

void Model::set_params(const ModelParameters& params) {
  if (!(params.layout == params_.layout) ||
      params.values.size() != params_.values.size()) {
    throw ValidationError("set_params: layout mismatch");
  }
  params_.values = params.values;
}

LinearModel::LinearModel(std::size_t dim, std::uint64_t seed) : dim_(dim) {
  if (dim == 0) throw ValidationError("lr: input dimension must be > 0");
  params_.layout = linear_layout(dim);
  params_.values.assign(params_.layout.size(), 0.0);
  Rng rng = make_rng(seed, {stream::kInit});
  init_uniform(params_.values, dim, rng);
}

std::string LinearModel::architecture() const {
  return "lr;in=" + std::to_string(dim_);
}

std::unique_ptr<Model> LinearModel::clone() const {
  return std::make_unique<LinearModel>(*this);
}

double LinearModel::predict(std::span<const double> x, std::size_t) const {
  return linear_forward(params_, x);
}

double LinearModel::loss_gradient(const TabularData& data,
                                  std::span<const std::size_t> rows, bool,
                                  Rng&, std::vector<double>& grad) const {
  if (rows.empty()) throw ValidationError("lr: empty batch");
  if (data.dim != dim_) throw ValidationError("lr: dimension mismatch");
  grad.assign(params_.values.size(), 0.0);
  const double scale = 1.0 / static_cast<double>(rows.size());
  double loss = 0.0;
  for (std::size_t r : rows) {
    const auto x = data.row(r);
    const double resid = linear_forward(params_, x) - data.targets[r];
    loss += resid * resid * scale;
    const double g = 2.0 * resid * scale;
    for (std::size_t i = 0; i < dim_; ++i) grad[i] += g * x[i];
    grad[dim_] += g;
  }
  return loss;
}

MlpModel::MlpModel(MlpSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  spec_.validate();
  params_.layout = spec_.layout();
  params_.values.assign(params_.layout.size(), 0.0);
  Rng rng = make_rng(seed, {stream::kInit});
  std::normal_distribution<double> emb_init(0.0, 0.1);
  for (double& v : params_.segment("embedding")) v = emb_init(rng);
  std::size_t in = spec_.embedding_dim + spec_.numeric_input_dim;
  for (std::size_t l = 0; l < spec_.hidden.size(); ++l) {
    init_uniform(params_.segment(dense_name(l, "weight")), in, rng);
    init_uniform(params_.segment(dense_name(l, "bias")), in, rng);
    in = spec_.hidden[l];
  }
  init_uniform(params_.segment("head.weight"), in, rng);
  init_uniform(params_.segment("head.bias"), in, rng);
}

std::unique_ptr<Model> MlpModel::clone() const {
  return std::make_unique<MlpModel>(*this);
}

double MlpModel::predict(std::span<const double> x, std::size_t station) const {
  return mlp_forward(spec_, params_, x, station, Mode::kEval, nullptr);
}

double MlpModel::loss_gradient(const TabularData& data,
                               std::span<const std::size_t> rows, bool train,
                               Rng& rng, std::vector<double>& grad) const {
  if (rows.empty()) throw ValidationError("mlp: empty batch");
  grad.assign(params_.values.size(), 0.0);
  const double scale = 1.0 / static_cast<double>(rows.size());
  const Mode mode = train ? Mode::kTrain : Mode::kEval;
  MlpTape tape;
  double loss = 0.0;
  for (std::size_t r : rows) {
    const double y_hat = mlp_forward(spec_, params_, data.row(r),
                                     data.stations[r], mode, &rng, &tape);
    const double resid = y_hat - data.targets[r];
    loss += resid * resid * scale;
    mlp_backward(spec_, params_, tape, 2.0 * resid * scale, grad);
  }
  return loss;
}

std::vector<double> predict_all(const Model& model, const TabularData& data) {
  std::vector<double> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    out[i] = model.predict(data.row(i), data.stations[i]);
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const Model& model) {
  const auto bytes =
      serialize_parameters(model.get_params(), model.architecture_hash());
  auto out = csv::open_output(path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

void load_checkpoint(const std::filesystem::path& path, Model& model) {
  auto in = csv::open_input(path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  model.set_params(deserialize_parameters(bytes, model.get_params().layout,
                                          model.architecture_hash()));
}

}  // namespace evfl

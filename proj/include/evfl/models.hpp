// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "evfl/random.hpp"
#include "evfl/tabular.hpp"

namespace evfl {

struct ParameterSegment {
  std::string name;
  std::size_t offset = 0;
  std::vector<std::size_t> shape;

  std::size_t size() const;
  bool operator==(const ParameterSegment&) const = default;
};

/// Named, contiguous segments of a flat parameter vector.
class ParameterLayout {
 public:
  ParameterLayout& add(std::string name, std::vector<std::size_t> shape);

  std::span<const ParameterSegment> segments() const { return segments_; }
  const ParameterSegment& segment(std::string_view name) const;
  std::size_t size() const { return size_; }

  bool operator==(const ParameterLayout&) const = default;

 private:
  std::vector<ParameterSegment> segments_;
  std::size_t size_ = 0;
};

/// Flat parameter snapshot; the unit exchanged and averaged by FedAvg.
struct ModelParameters {
  ParameterLayout layout;
  std::vector<double> values;

  std::span<double> segment(std::string_view name);
  std::span<const double> segment(std::string_view name) const;
};

/// 64-bit FNV-1a, used to fingerprint architecture descriptions.
std::uint64_t fnv1a64(std::string_view text);

inline constexpr std::size_t kCheckpointHeaderBytes = 28;

/// Header (8-byte magic, u32 version, u64 architecture hash, u64 count)
/// followed by little-endian IEEE-754 doubles.
std::vector<std::uint8_t> serialize_parameters(const ModelParameters& params,
                                               std::uint64_t arch_hash);
/// Throws ValidationError on a bad header, hash, or length.
ModelParameters deserialize_parameters(std::span<const std::uint8_t> bytes,
                                       const ParameterLayout& layout,
                                       std::uint64_t arch_hash);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamState() = default;
  AdamState(std::size_t n, AdamConfig cfg) : config(cfg), m(n, 0.0), v(n, 0.0) {}

  AdamConfig config;
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;
};

/// Bias-corrected Adam update in place.
void adam_step(std::span<double> params, std::span<const double> grads,
               AdamState& state);

enum class ModelKind { kDummyMean, kDummyGaussian, kLinear, kMlp };

std::string to_string(ModelKind kind);
/// Accepts `dummy-mean`, `dummy-gauss`, `lr`, `mlp`.
ModelKind parse_model_kind(std::string_view name);
inline bool is_trainable(ModelKind k) {
  return k == ModelKind::kLinear || k == ModelKind::kMlp;
}

/// Predicts the training-target mean everywhere.
struct DummyMean {
  double mean = 0.0;

  static DummyMean fit(std::span<const double> targets);
  double predict() const { return mean; }
};

/// Draws i.i.d. predictions from N(mu, sigma) of the training targets.
/// Draws are not clamped at zero.
struct DummyGaussian {
  double mu = 0.0;
  double sigma = 0.0;  // population

  static DummyGaussian fit(std::span<const double> targets);
  double sample(Rng& rng) const;
  std::vector<double> predict(std::size_t n, std::uint64_t seed) const;
};

enum class Mode { kTrain, kEval };

struct MlpSpec {
  std::size_t numeric_input_dim = 0;
  std::size_t embedding_cardinality = 0;  // known stations; +1 unknown row
  std::size_t embedding_dim = 16;
  std::vector<std::size_t> hidden{128, 128, 64};
  double dropout_rate = 0.2;

  void validate() const;
  std::string architecture() const;
  ParameterLayout layout() const;
};

/// Intermediate values of one MLP forward pass, consumed by mlp_backward.
struct MlpTape {
  std::size_t embedding_row = 0;
  std::vector<std::vector<double>> inputs;  // input of each dense layer
  std::vector<std::vector<double>> pre;     // pre-activation per hidden layer
  std::vector<std::vector<double>> masks;   // dropout scale per hidden unit
  double output_pre = 0.0;
  double output = 0.0;
};

double softplus(double z);

/// embedding[station] ++ x -> [dense, ReLU, dropout]* -> dense -> Softplus.
/// Train mode applies inverted dropout drawn from `dropout_rng`. Unknown
/// stations use the reserved last embedding row in eval mode.
double mlp_forward(const MlpSpec& spec, const ModelParameters& params,
                   std::span<const double> x, std::size_t station, Mode mode,
                   Rng* dropout_rng, MlpTape* tape = nullptr);

/// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(output).
void mlp_backward(const MlpSpec& spec, const ModelParameters& params,
                  const MlpTape& tape, double dloss_doutput,
                  std::span<double> grad);

ParameterLayout linear_layout(std::size_t dim);
double linear_forward(const ModelParameters& params, std::span<const double> x);

/// Common interface of the gradient-trained regressors.
class Model {
 public:
  virtual ~Model() = default;

  virtual ModelKind kind() const = 0;
  virtual std::string architecture() const = 0;
  virtual std::unique_ptr<Model> clone() const = 0;

  /// Eval-mode prediction.
  virtual double predict(std::span<const double> x,
                         std::size_t station) const = 0;

  /// Batch-mean squared error over `rows` and its exact gradient, written
  /// to `grad` (resized to the parameter count). `train` enables dropout.
  virtual double loss_gradient(const TabularData& data,
                               std::span<const std::size_t> rows, bool train,
                               Rng& rng, std::vector<double>& grad) const = 0;

  const ModelParameters& get_params() const { return params_; }
  /// In-place access for optimizers; the layout is fixed.
  std::span<double> mutable_values() { return params_.values; }
  /// Throws ValidationError when the layout differs.
  void set_params(const ModelParameters& params);
  std::uint64_t architecture_hash() const { return fnv1a64(architecture()); }

 protected:
  ModelParameters params_;
};

/// y = w.x + b, no output nonlinearity.
class LinearModel final : public Model {
 public:
  LinearModel(std::size_t dim, std::uint64_t seed);

  ModelKind kind() const override { return ModelKind::kLinear; }
  std::string architecture() const override;
  std::unique_ptr<Model> clone() const override;
  double predict(std::span<const double> x, std::size_t station) const override;
  double loss_gradient(const TabularData& data,
                       std::span<const std::size_t> rows, bool train, Rng& rng,
                       std::vector<double>& grad) const override;

 private:
  std::size_t dim_;
};

class MlpModel final : public Model {
 public:
  MlpModel(MlpSpec spec, std::uint64_t seed);

  ModelKind kind() const override { return ModelKind::kMlp; }
  std::string architecture() const override { return spec_.architecture(); }
  std::unique_ptr<Model> clone() const override;
  double predict(std::span<const double> x, std::size_t station) const override;
  double loss_gradient(const TabularData& data,
                       std::span<const std::size_t> rows, bool train, Rng& rng,
                       std::vector<double>& grad) const override;

  const MlpSpec& spec() const { return spec_; }

 private:
  MlpSpec spec_;
};

std::vector<double> predict_all(const Model& model, const TabularData& data);

void save_checkpoint(const std::filesystem::path& path, const Model& model);
/// Loads parameters into `model`; the architecture must match.
void load_checkpoint(const std::filesystem::path& path, Model& model);

}  // namespace evfl

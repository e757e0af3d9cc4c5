#pragma once

// Pointwise projection head S: D' -> D with a rectified hidden layer and a
// parallel linear skip, trained by correlation distillation against the
// frozen backbone similarities.

#include <array>
#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "fuss/rng.hpp"
#include "fuss/tensor.hpp"

namespace fuss {

struct HeadShape {
  std::size_t input_dim = 32;   // D'
  std::size_t hidden_dim = 32;  // D_hidden
  std::size_t output_dim = 8;   // D

  bool operator==(const HeadShape&) const = default;
};

enum class HeadTensor { HiddenWeight, HiddenBias, OutputWeight, OutputBias, SkipWeight };

inline constexpr std::array<HeadTensor, 5> kHeadTensors = {
    HeadTensor::HiddenWeight, HeadTensor::HiddenBias, HeadTensor::OutputWeight, HeadTensor::OutputBias,
    HeadTensor::SkipWeight};

std::string_view head_tensor_name(HeadTensor tensor);

/// All head parameters in one contiguous buffer, in kHeadTensors order:
/// hidden weight (Dh x D'), hidden bias (Dh), output weight (D x Dh),
/// output bias (D), skip weight (D x D'). Gradients use the same type.
class HeadParams {
 public:
  HeadParams() = default;
  explicit HeadParams(HeadShape shape);

  /// He-style Gaussian weights, zero biases.
  static HeadParams random(HeadShape shape, Rng& rng);

  const HeadShape& shape() const { return shape_; }
  std::size_t size() const { return values_.size(); }

  std::span<const double> flat() const { return values_; }
  std::span<double> flat() { return values_; }

  std::span<const double> tensor(HeadTensor t) const;
  std::span<double> tensor(HeadTensor t);
  std::vector<std::size_t> tensor_dims(HeadTensor t) const;

  bool all_finite() const;
  bool operator==(const HeadParams&) const = default;

 private:
  std::size_t offset(HeadTensor t) const;
  std::size_t length(HeadTensor t) const;

  HeadShape shape_;
  std::vector<double> values_;
};

FeatureMap forward(const HeadParams& params, const FeatureMap& input);

/// -sum (A - b) * Q over all index quadruples.
double corr_loss(const SimilarityTensor& backbone, const SimilarityTensor& projected, double b);

/// Forward activations for a set of images plus accumulated gradients with
/// respect to each image's head output. Backprop turns those into a
/// parameter gradient.
class HeadBatch {
 public:
  HeadBatch(const HeadParams& params, std::vector<const FeatureMap*> inputs);

  std::size_t size() const { return inputs_.size(); }
  const FeatureMap& input(std::size_t i) const { return *inputs_[i]; }
  const Matrix& output(std::size_t i) const { return outputs_[i]; }
  FeatureMap output_map(std::size_t i) const;

  Matrix& output_grad(std::size_t i) { return output_grads_[i]; }
  const Matrix& output_grad(std::size_t i) const { return output_grads_[i]; }

  HeadParams backward() const;

 private:
  HeadParams params_;
  std::vector<const FeatureMap*> inputs_;
  std::vector<Matrix> hidden_pre_;
  std::vector<Matrix> outputs_;
  std::vector<Matrix> output_grads_;
};

struct CorrPair {
  std::size_t query = 0;    // index into the batch
  std::size_t support = 0;  // index into the batch
};

enum class PairReduction { Mean, Sum };

/// Adds the correlation loss of every pair to the batch's output gradients
/// (backbone similarities held constant) and returns the reduced loss.
/// `unit_inputs[i]` is the row-normalized flattened input i; pass an empty
/// span to have it computed here.
double accumulate_corr_loss(HeadBatch& batch, std::span<const CorrPair> pairs, double b, PairReduction reduction,
                            std::span<const Matrix> unit_inputs = {});

struct CorrGradient {
  double loss = 0.0;
  HeadParams grad;
};

/// Loss and parameter gradient for one (query, support) pair.
CorrGradient corr_loss_grad(const HeadParams& params, const FeatureMap& query, const FeatureMap& support, double b);

struct BatchSpec {
  std::size_t query_count = 8;
  std::size_t nearest_neighbors = 1;
  std::size_t random_supports = 5;
  double b = 0.2;
  PairReduction reduction = PairReduction::Mean;
};

std::vector<double> mean_pool(const FeatureMap& features);

struct SupportSelection {
  std::vector<std::size_t> supports;  // nearest neighbours first, then random picks
  bool clamped = false;               // pool was too small for the requested count
};

/// Nearest neighbours by cosine of mean-pooled features (query excluded,
/// ties to the lowest index), then uniform draws without replacement from
/// the rest of the pool.
SupportSelection select_supports(std::size_t query, std::span<const std::vector<double>> pooled,
                                 const BatchSpec& spec, Rng& rng);

}  // namespace fuss

#include "fuss/head.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/core.h>

#include "fuss/errors.hpp"

namespace fuss {

std::string_view head_tensor_name(HeadTensor tensor) {
  switch (tensor) {
    case HeadTensor::HiddenWeight: return "hidden_weight";
    case HeadTensor::HiddenBias: return "hidden_bias";
    case HeadTensor::OutputWeight: return "output_weight";
    case HeadTensor::OutputBias: return "output_bias";
    case HeadTensor::SkipWeight: return "skip_weight";
  }
  return "unknown";
}

HeadParams::HeadParams(HeadShape shape) : shape_(shape) {
  if (shape.input_dim == 0 || shape.hidden_dim == 0 || shape.output_dim == 0) {
    throw ConfigError("projection head dimensions must be positive");
  }
  std::size_t total = 0;
  for (auto t : kHeadTensors) total += length(t);
  values_.assign(total, 0.0);
}

HeadParams HeadParams::random(HeadShape shape, Rng& rng) {
  HeadParams params(shape);
  auto fill = [&](HeadTensor t, double fan_in) {
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / fan_in));
    for (auto& v : params.tensor(t)) v = normal(rng);
  };
  fill(HeadTensor::HiddenWeight, static_cast<double>(shape.input_dim));
  fill(HeadTensor::OutputWeight, static_cast<double>(shape.hidden_dim));
  fill(HeadTensor::SkipWeight, static_cast<double>(shape.input_dim));
  return params;
}

std::size_t HeadParams::length(HeadTensor t) const {
  const auto& s = shape_;
  switch (t) {
    case HeadTensor::HiddenWeight: return s.hidden_dim * s.input_dim;
    case HeadTensor::HiddenBias: return s.hidden_dim;
    case HeadTensor::OutputWeight: return s.output_dim * s.hidden_dim;
    case HeadTensor::OutputBias: return s.output_dim;
    case HeadTensor::SkipWeight: return s.output_dim * s.input_dim;
  }
  return 0;
}

std::size_t HeadParams::offset(HeadTensor t) const {
  std::size_t off = 0;
  for (auto other : kHeadTensors) {
    if (other == t) break;
    off += length(other);
  }
  return off;
}

std::span<const double> HeadParams::tensor(HeadTensor t) const {
  return std::span<const double>(values_).subspan(offset(t), length(t));
}

std::span<double> HeadParams::tensor(HeadTensor t) { return std::span<double>(values_).subspan(offset(t), length(t)); }

std::vector<std::size_t> HeadParams::tensor_dims(HeadTensor t) const {
  const auto& s = shape_;
  switch (t) {
    case HeadTensor::HiddenWeight: return {s.hidden_dim, s.input_dim};
    case HeadTensor::HiddenBias: return {s.hidden_dim};
    case HeadTensor::OutputWeight: return {s.output_dim, s.hidden_dim};
    case HeadTensor::OutputBias: return {s.output_dim};
    case HeadTensor::SkipWeight: return {s.output_dim, s.input_dim};
  }
  return {};
}

bool HeadParams::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

namespace {

void check_input(const HeadParams& params, const FeatureMap& input) {
  if (input.dim() != params.shape().input_dim) {
    throw ConfigError(fmt::format("head expects input dim {}, got {}", params.shape().input_dim, input.dim()));
  }
}

// Fills hidden pre-activations (P x Dh) and outputs (P x D).
void forward_rows(const HeadParams& params, const FeatureMap& input, Matrix& hidden_pre, Matrix& output) {
  const auto& s = params.shape();
  const auto w1 = params.tensor(HeadTensor::HiddenWeight);
  const auto b1 = params.tensor(HeadTensor::HiddenBias);
  const auto w2 = params.tensor(HeadTensor::OutputWeight);
  const auto b2 = params.tensor(HeadTensor::OutputBias);
  const auto ws = params.tensor(HeadTensor::SkipWeight);
  hidden_pre = Matrix(input.pixels(), s.hidden_dim);
  output = Matrix(input.pixels(), s.output_dim);
  std::vector<double> relu(s.hidden_dim);
  for (std::size_t p = 0; p < input.pixels(); ++p) {
    const auto z = input.pixel(p);
    auto u = hidden_pre.row(p);
    for (std::size_t j = 0; j < s.hidden_dim; ++j) {
      const double* wj = w1.data() + j * s.input_dim;
      double acc = b1[j];
      for (std::size_t i = 0; i < s.input_dim; ++i) acc += wj[i] * z[i];
      u[j] = acc;
      relu[j] = acc > 0.0 ? acc : 0.0;
    }
    auto h = output.row(p);
    for (std::size_t o = 0; o < s.output_dim; ++o) {
      const double* w2o = w2.data() + o * s.hidden_dim;
      const double* wso = ws.data() + o * s.input_dim;
      double acc = b2[o];
      for (std::size_t j = 0; j < s.hidden_dim; ++j) acc += w2o[j] * relu[j];
      for (std::size_t i = 0; i < s.input_dim; ++i) acc += wso[i] * z[i];
      h[o] = acc;
    }
  }
}

}  // namespace

FeatureMap forward(const HeadParams& params, const FeatureMap& input) {
  check_input(params, input);
  Matrix hidden_pre, output;
  forward_rows(params, input, hidden_pre, output);
  return unflatten(output, input.height(), input.width());
}

double corr_loss(const SimilarityTensor& backbone, const SimilarityTensor& projected, double b) {
  if (!backbone.same_shape(projected)) throw ConfigError("correlation loss over differently shaped tensors");
  const auto a = backbone.matrix().values();
  const auto q = projected.matrix().values();
  double loss = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) loss -= (a[i] - b) * q[i];
  return loss;
}

HeadBatch::HeadBatch(const HeadParams& params, std::vector<const FeatureMap*> inputs)
    : params_(params), inputs_(std::move(inputs)) {
  hidden_pre_.resize(inputs_.size());
  outputs_.resize(inputs_.size());
  output_grads_.reserve(inputs_.size());
  for (std::size_t i = 0; i < inputs_.size(); ++i) {
    check_input(params_, *inputs_[i]);
    forward_rows(params_, *inputs_[i], hidden_pre_[i], outputs_[i]);
    output_grads_.emplace_back(outputs_[i].rows(), outputs_[i].cols());
  }
}

FeatureMap HeadBatch::output_map(std::size_t i) const {
  return unflatten(outputs_[i], inputs_[i]->height(), inputs_[i]->width());
}

HeadParams HeadBatch::backward() const {
  const auto& s = params_.shape();
  HeadParams grad(s);
  auto gw1 = grad.tensor(HeadTensor::HiddenWeight);
  auto gb1 = grad.tensor(HeadTensor::HiddenBias);
  auto gw2 = grad.tensor(HeadTensor::OutputWeight);
  auto gb2 = grad.tensor(HeadTensor::OutputBias);
  auto gws = grad.tensor(HeadTensor::SkipWeight);
  const auto w2 = params_.tensor(HeadTensor::OutputWeight);
  std::vector<double> gu(s.hidden_dim);
  for (std::size_t img = 0; img < inputs_.size(); ++img) {
    const auto& input = *inputs_[img];
    const auto& pre = hidden_pre_[img];
    const auto& gout = output_grads_[img];
    for (std::size_t p = 0; p < input.pixels(); ++p) {
      const auto g = gout.row(p);
      if (std::all_of(g.begin(), g.end(), [](double v) { return v == 0.0; })) continue;
      const auto z = input.pixel(p);
      const auto u = pre.row(p);
      std::fill(gu.begin(), gu.end(), 0.0);
      for (std::size_t o = 0; o < s.output_dim; ++o) {
        const double go = g[o];
        gb2[o] += go;
        double* gw2o = gw2.data() + o * s.hidden_dim;
        const double* w2o = w2.data() + o * s.hidden_dim;
        for (std::size_t j = 0; j < s.hidden_dim; ++j) {
          if (u[j] > 0.0) {
            gw2o[j] += go * u[j];
            gu[j] += w2o[j] * go;
          }
        }
        double* gwso = gws.data() + o * s.input_dim;
        for (std::size_t i = 0; i < s.input_dim; ++i) gwso[i] += go * z[i];
      }
      for (std::size_t j = 0; j < s.hidden_dim; ++j) {
        if (gu[j] == 0.0) continue;
        gb1[j] += gu[j];
        double* gw1j = gw1.data() + j * s.input_dim;
        for (std::size_t i = 0; i < s.input_dim; ++i) gw1j[i] += gu[j] * z[i];
      }
    }
  }
  return grad;
}

namespace {

// Loss of one pair with constant `weights` = A - b. Adds `scale` times the
// gradient with respect to each side's head output.
double corr_pair(const Matrix& weights, const UnitRows& hq, const UnitRows& hs, double scale, Matrix& gq,
                 Matrix& gs) {
  const std::size_t pq = hq.unit.rows();
  const std::size_t ps = hs.unit.rows();
  const std::size_t d = hq.unit.cols();
  double loss = 0.0;
  std::vector<double> col_diag(ps, 0.0);  // sum_p (A-b)_pq * Q_pq
  std::vector<double> acc_q(d);
  Matrix acc_s(ps, d);
  for (std::size_t p = 0; p < pq; ++p) {
    const double* up = hq.unit.row(p).data();
    const double* wp = weights.row(p).data();
    std::fill(acc_q.begin(), acc_q.end(), 0.0);
    double row_diag = 0.0;
    for (std::size_t q = 0; q < ps; ++q) {
      const double* uq = hs.unit.row(q).data();
      double cos = 0.0;
      for (std::size_t k = 0; k < d; ++k) cos += up[k] * uq[k];
      const double w = wp[q];
      loss -= w * cos;
      row_diag += w * cos;
      col_diag[q] += w * cos;
      double* as = acc_s.row(q).data();
      for (std::size_t k = 0; k < d; ++k) {
        acc_q[k] += w * uq[k];
        as[k] += w * up[k];
      }
    }
    if (hq.norms[p] == 0.0) continue;
    // d(-w cos)/dh_p = -w (u_q - cos u_p) / |h_p|
    const double inv = scale / hq.norms[p];
    auto g = gq.row(p);
    for (std::size_t k = 0; k < d; ++k) g[k] -= inv * (acc_q[k] - row_diag * up[k]);
  }
  for (std::size_t q = 0; q < ps; ++q) {
    if (hs.norms[q] == 0.0) continue;
    const double inv = scale / hs.norms[q];
    const double* uq = hs.unit.row(q).data();
    const double* as = acc_s.row(q).data();
    auto g = gs.row(q);
    for (std::size_t k = 0; k < d; ++k) g[k] -= inv * (as[k] - col_diag[q] * uq[k]);
  }
  return loss;
}

}  // namespace

double accumulate_corr_loss(HeadBatch& batch, std::span<const CorrPair> pairs, double b, PairReduction reduction,
                            std::span<const Matrix> unit_inputs) {
  if (pairs.empty()) return 0.0;
  std::vector<Matrix> computed;
  if (unit_inputs.empty()) {
    for (std::size_t i = 0; i < batch.size(); ++i) computed.push_back(normalize_rows(flatten(batch.input(i))).unit);
    unit_inputs = computed;
  }
  if (unit_inputs.size() != batch.size()) throw ConfigError("one normalized input per batch image is required");

  std::vector<UnitRows> unit_outputs;
  unit_outputs.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) unit_outputs.push_back(normalize_rows(batch.output(i)));

  const double scale = reduction == PairReduction::Mean ? 1.0 / static_cast<double>(pairs.size()) : 1.0;
  double total = 0.0;
  Matrix weights;
  for (const auto& pair : pairs) {
    if (pair.query >= batch.size() || pair.support >= batch.size()) throw ConfigError("pair index out of range");
    weights = multiply_transposed(unit_inputs[pair.query], unit_inputs[pair.support]);
    for (double& w : weights.values()) w = std::clamp(w, -1.0, 1.0) - b;
    if (pair.query == pair.support) {
      Matrix gq(batch.output(pair.query).rows(), batch.output(pair.query).cols());
      Matrix gs(gq.rows(), gq.cols());
      total += corr_pair(weights, unit_outputs[pair.query], unit_outputs[pair.support], scale, gq, gs);
      auto& g = batch.output_grad(pair.query);
      for (std::size_t k = 0; k < g.size(); ++k) g.values()[k] += gq.values()[k] + gs.values()[k];
    } else {
      total += corr_pair(weights, unit_outputs[pair.query], unit_outputs[pair.support], scale,
                         batch.output_grad(pair.query), batch.output_grad(pair.support));
    }
  }
  return total * scale;
}

CorrGradient corr_loss_grad(const HeadParams& params, const FeatureMap& query, const FeatureMap& support, double b) {
  HeadBatch batch(params, {&query, &support});
  const CorrPair pair{0, 1};
  const double loss = accumulate_corr_loss(batch, std::span<const CorrPair>(&pair, 1), b, PairReduction::Sum);
  return {loss, batch.backward()};
}

std::vector<double> mean_pool(const FeatureMap& features) {
  std::vector<double> pooled(features.dim(), 0.0);
  for (std::size_t p = 0; p < features.pixels(); ++p) {
    const auto px = features.pixel(p);
    for (std::size_t d = 0; d < features.dim(); ++d) pooled[d] += px[d];
  }
  if (features.pixels() > 0) {
    for (auto& v : pooled) v /= static_cast<double>(features.pixels());
  }
  return pooled;
}

SupportSelection select_supports(std::size_t query, std::span<const std::vector<double>> pooled,
                                 const BatchSpec& spec, Rng& rng) {
  if (query >= pooled.size()) throw ConfigError("query outside the support pool");
  SupportSelection selection;
  const std::size_t available = pooled.size() - 1;
  std::size_t nn = spec.nearest_neighbors;
  std::size_t random = spec.random_supports;
  if (nn + random > available) {
    selection.clamped = true;
    nn = std::min(nn, available);
    random = available - nn;
  }

  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < pooled.size(); ++i) {
    if (i != query) candidates.push_back(i);
  }
  std::vector<double> sim(pooled.size(), 0.0);
  for (auto i : candidates) sim[i] = cosine_similarity(pooled[query], pooled[i]);
  std::stable_sort(candidates.begin(), candidates.end(), [&](std::size_t a, std::size_t b) { return sim[a] > sim[b]; });
  selection.supports.assign(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(nn));

  std::vector<std::size_t> rest(candidates.begin() + static_cast<std::ptrdiff_t>(nn), candidates.end());
  std::sort(rest.begin(), rest.end());
  // Partial Fisher-Yates over the remaining pool.
  for (std::size_t i = 0; i < random; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, rest.size() - 1);
    std::swap(rest[i], rest[pick(rng)]);
    selection.supports.push_back(rest[i]);
  }
  return selection;
}

}  // namespace fuss

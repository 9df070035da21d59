#include "nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "core/error.hpp"

namespace ddnet::nn {
namespace {

void require_same_shape(const Tensor& a, const Shape& expected, const char* what) {
  if (a.shape() != expected) {
    fail(Errc::dimension, std::string(what) + ": upstream shape " + shape_string(a.shape()) +
                              " does not match forward shape " + shape_string(expected));
  }
}

std::size_t spatial_size(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t i = 2; i < s.size(); ++i) n *= s[i];
  return n;
}

}  // namespace

const char* layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::relu: return "relu";
    case LayerKind::maxpool2d: return "maxpool2d";
    case LayerKind::dense: return "dense";
    case LayerKind::batchnorm: return "batchnorm";
    case LayerKind::dropout: return "dropout";
    case LayerKind::flatten: return "flatten";
    case LayerKind::softmax_xent: return "softmax_xent";
  }
  return "?";
}

LayerKind layer_kind_from_name(const std::string& name) {
  for (auto k : {LayerKind::conv2d, LayerKind::relu, LayerKind::maxpool2d, LayerKind::dense,
                 LayerKind::batchnorm, LayerKind::dropout, LayerKind::flatten,
                 LayerKind::softmax_xent}) {
    if (name == layer_kind_name(k)) return k;
  }
  fail(Errc::parse, "unknown layer kind '" + name + "'");
}

BatchNormState BatchNormState::identity(std::size_t channels) {
  BatchNormState s;
  s.gamma = Tensor({channels}, 1.0);
  s.beta = Tensor({channels}, 0.0);
  s.running_mean = Tensor({channels}, 0.0);
  s.running_var = Tensor({channels}, 1.0);
  return s;
}

// ---------------------------------------------------------------------------
// conv2d

LayerOutput conv2d_forward(const Tensor& input, const ConvParams& p) {
  require_rank(input, 4, "conv2d input");
  require_rank(p.weights, 4, "conv2d weights");
  const std::size_t out_ch = p.weights.dim(0);
  const std::size_t k = p.weights.dim(2);
  if (p.weights.dim(3) != k) fail(Errc::dimension, "conv2d kernels must be square");
  if (input.dim(1) != p.weights.dim(1)) {
    fail(Errc::dimension, "conv2d channel mismatch: input " + shape_string(input.shape()) +
                              ", weights " + shape_string(p.weights.shape()));
  }
  if (p.bias.shape() != Shape{out_ch}) {
    fail(Errc::dimension, "conv2d bias shape " + shape_string(p.bias.shape()));
  }
  if (!p.weights.all_finite() || !p.bias.all_finite()) {
    fail(Errc::numeric, "conv2d weights contain non-finite values");
  }
  const ConvGeometry g{input.dim(1), input.dim(2), input.dim(3), k, p.stride, p.padding};
  const std::size_t oh = g.out_h();
  const std::size_t ow = g.out_w();
  if (oh == 0 || ow == 0) {
    fail(Errc::dimension, "conv2d kernel " + std::to_string(k) + " larger than padded input " +
                              shape_string(input.shape()));
  }
  const std::size_t batch = input.dim(0);
  const std::size_t plane = oh * ow;
  const std::size_t cols_w = batch * plane;
  const std::size_t image = g.channels * g.height * g.width;

  std::vector<double> cols(g.patch() * cols_w);
  for (std::size_t n = 0; n < batch; ++n) {
    im2col_into(input.raw() + n * image, g, cols.data() + n * plane, cols_w);
  }
  std::vector<double> prod(out_ch * cols_w);
  gemm(out_ch, cols_w, g.patch(), p.weights.raw(), g.patch(), cols.data(), cols_w, prod.data(),
       cols_w);

  Tensor out({batch, out_ch, oh, ow});
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t o = 0; o < out_ch; ++o) {
      const double* src = prod.data() + o * cols_w + n * plane;
      double* dst = out.raw() + (n * out_ch + o) * plane;
      const double b = p.bias[o];
      for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i] + b;
    }
  }

  LayerOutput result{std::move(out), {}};
  auto& c = result.cache;
  c.kind = LayerKind::conv2d;
  c.input_shape = input.shape();
  c.saved = {input, p.weights};
  c.kernel = k;
  c.stride = p.stride;
  c.padding = p.padding;
  return result;
}

namespace {

LayerGrads conv2d_backward(const LayerCache& cache, const Tensor& upstream, bool want_input) {
  const Tensor& input = cache.saved.at(0);
  const Tensor& weights = cache.saved.at(1);
  const std::size_t out_ch = weights.dim(0);
  const ConvGeometry g{input.dim(1), input.dim(2), input.dim(3), cache.kernel, cache.stride,
                       cache.padding};
  const std::size_t batch = input.dim(0);
  const std::size_t plane = g.out_h() * g.out_w();
  const std::size_t cols_w = batch * plane;
  const std::size_t image = g.channels * g.height * g.width;
  require_same_shape(upstream, {batch, out_ch, g.out_h(), g.out_w()}, "conv2d backward");

  // Upstream as [out_ch x (batch*plane)], matching the forward product layout.
  std::vector<double> dprod(out_ch * cols_w);
  Tensor dbias({out_ch}, 0.0);
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t o = 0; o < out_ch; ++o) {
      const double* src = upstream.raw() + (n * out_ch + o) * plane;
      std::copy_n(src, plane, dprod.data() + o * cols_w + n * plane);
    }
  }
  for (std::size_t o = 0; o < out_ch; ++o) {
    double s = 0.0;
    const double* row = dprod.data() + o * cols_w;
    for (std::size_t i = 0; i < cols_w; ++i) s += row[i];
    dbias[o] = s;
  }

  std::vector<double> cols(g.patch() * cols_w);
  for (std::size_t n = 0; n < batch; ++n) {
    im2col_into(input.raw() + n * image, g, cols.data() + n * plane, cols_w);
  }
  Tensor dweights(weights.shape());
  gemm(Op::none, Op::transpose, out_ch, g.patch(), cols_w, dprod.data(), cols_w, cols.data(),
       cols_w, dweights.raw(), g.patch());

  LayerGrads grads;
  if (want_input) {
    // Reuse the cols buffer for d(cols).
    gemm(Op::transpose, Op::none, g.patch(), cols_w, out_ch, weights.raw(), g.patch(), dprod.data(),
         cols_w, cols.data(), cols_w);
    grads.input = Tensor(input.shape(), 0.0);
    for (std::size_t n = 0; n < batch; ++n) {
      col2im_add(cols.data() + n * plane, cols_w, g, grads.input.raw() + n * image);
    }
  }
  grads.params.push_back(std::move(dweights));
  grads.params.push_back(std::move(dbias));
  return grads;
}

}  // namespace

// ---------------------------------------------------------------------------
// relu

LayerOutput relu_forward(const Tensor& input) {
  Tensor out = input;
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  LayerOutput r{std::move(out), {}};
  r.cache.kind = LayerKind::relu;
  r.cache.input_shape = input.shape();
  r.cache.saved = {input};
  return r;
}

Tensor relu_replay(const Tensor& input, const LayerCache& cache) {
  const Tensor& ref = cache.saved.at(0);
  if (input.shape() != ref.shape()) fail(Errc::dimension, "relu replay shape mismatch");
  Tensor out = input;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!(ref[i] > 0.0)) out[i] = 0.0;
  }
  return out;
}

// ---------------------------------------------------------------------------
// maxpool

LayerOutput maxpool_forward(const Tensor& input, std::size_t kernel, std::size_t stride) {
  require_rank(input, 4, "maxpool input");
  if (kernel == 0 || stride == 0) fail(Errc::invalid_argument, "maxpool needs kernel, stride >= 1");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (h < kernel || w < kernel) {
    fail(Errc::dimension, "maxpool window " + std::to_string(kernel) + " larger than input " +
                              shape_string(input.shape()));
  }
  const std::size_t oh = (h - kernel) / stride + 1;
  const std::size_t ow = (w - kernel) / stride + 1;
  Tensor out({n, c, oh, ow});
  std::vector<std::size_t> argmax(out.size());
  std::size_t o = 0;
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const std::size_t base = plane * h * w;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x, ++o) {
        std::size_t best = base + (y * stride) * w + x * stride;
        double best_v = input[best];
        for (std::size_t i = 0; i < kernel; ++i) {
          for (std::size_t j = 0; j < kernel; ++j) {
            const std::size_t idx = base + (y * stride + i) * w + (x * stride + j);
            // Strict comparison keeps the smallest flat index on ties.
            if (input[idx] > best_v) {
              best_v = input[idx];
              best = idx;
            }
          }
        }
        out[o] = best_v;
        argmax[o] = best;
      }
    }
  }
  LayerOutput r{std::move(out), {}};
  r.cache.kind = LayerKind::maxpool2d;
  r.cache.input_shape = input.shape();
  r.cache.argmax = std::move(argmax);
  r.cache.kernel = kernel;
  r.cache.stride = stride;
  return r;
}

Tensor maxpool_replay(const Tensor& input, const LayerCache& cache) {
  if (input.shape() != cache.input_shape) fail(Errc::dimension, "maxpool replay shape mismatch");
  const auto& s = cache.input_shape;
  const std::size_t oh = (s[2] - cache.kernel) / cache.stride + 1;
  const std::size_t ow = (s[3] - cache.kernel) / cache.stride + 1;
  Tensor out({s[0], s[1], oh, ow});
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = input[cache.argmax[i]];
  return out;
}

// ---------------------------------------------------------------------------
// dense

LayerOutput dense_forward(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  require_rank(weights, 2, "dense weights");
  if (input.rank() != 2 || input.dim(1) != weights.dim(0)) {
    fail(Errc::dimension, "dense input " + shape_string(input.shape()) +
                              " does not match weights " + shape_string(weights.shape()));
  }
  const std::size_t units = weights.dim(1);
  if (bias.shape() != Shape{units}) {
    fail(Errc::dimension, "dense bias shape " + shape_string(bias.shape()));
  }
  Tensor out = matmul(input, weights);
  for (std::size_t r = 0; r < out.dim(0); ++r) {
    for (std::size_t u = 0; u < units; ++u) out.at(r, u) += bias[u];
  }
  LayerOutput res{std::move(out), {}};
  res.cache.kind = LayerKind::dense;
  res.cache.input_shape = input.shape();
  res.cache.saved = {input, weights};
  return res;
}

namespace {

LayerGrads dense_backward(const LayerCache& cache, const Tensor& upstream, bool want_input) {
  const Tensor& input = cache.saved.at(0);
  const Tensor& weights = cache.saved.at(1);
  const std::size_t batch = input.dim(0), features = input.dim(1), units = weights.dim(1);
  require_same_shape(upstream, {batch, units}, "dense backward");

  LayerGrads g;
  if (want_input) {
    g.input = Tensor({batch, features});
    gemm(Op::none, Op::transpose, batch, features, units, upstream.raw(), units, weights.raw(),
         units, g.input.raw(), features);
  }
  Tensor dw({features, units});
  gemm(Op::transpose, Op::none, features, units, batch, input.raw(), features, upstream.raw(),
       units, dw.raw(), units);
  Tensor db({units}, 0.0);
  for (std::size_t r = 0; r < batch; ++r) {
    for (std::size_t u = 0; u < units; ++u) db[u] += upstream.at(r, u);
  }
  g.params.push_back(std::move(dw));
  g.params.push_back(std::move(db));
  return g;
}

}  // namespace

// ---------------------------------------------------------------------------
// batchnorm

LayerOutput batchnorm_forward(const Tensor& input, BatchNormState& state, Mode mode) {
  if (input.rank() != 2 && input.rank() != 4) {
    fail(Errc::dimension, "batchnorm expects N x C or N x C x H x W, got " +
                              shape_string(input.shape()));
  }
  const std::size_t batch = input.dim(0), channels = input.dim(1);
  const std::size_t spatial = spatial_size(input.shape());
  const Shape ch{channels};
  if (state.gamma.shape() != ch || state.beta.shape() != ch || state.running_mean.shape() != ch ||
      state.running_var.shape() != ch) {
    fail(Errc::dimension, "batchnorm state does not match " + std::to_string(channels) +
                              " channels");
  }
  const double m = static_cast<double>(batch * spatial);
  if (mode == Mode::train && batch * spatial < 2) {
    fail(Errc::invalid_argument, "batchnorm in train mode needs at least 2 values per channel");
  }

  Tensor out(input.shape());
  Tensor xhat(input.shape());
  std::vector<double> inv_std(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    double mean, var;
    if (mode == Mode::train) {
      double s = 0.0;
      for (std::size_t n = 0; n < batch; ++n) {
        const double* p = input.raw() + (n * channels + c) * spatial;
        for (std::size_t i = 0; i < spatial; ++i) s += p[i];
      }
      mean = s / m;
      double ss = 0.0;
      for (std::size_t n = 0; n < batch; ++n) {
        const double* p = input.raw() + (n * channels + c) * spatial;
        for (std::size_t i = 0; i < spatial; ++i) ss += (p[i] - mean) * (p[i] - mean);
      }
      var = ss / m;
      state.running_mean[c] = (1.0 - state.momentum) * state.running_mean[c] + state.momentum * mean;
      state.running_var[c] = (1.0 - state.momentum) * state.running_var[c] + state.momentum * var;
    } else {
      mean = state.running_mean[c];
      var = state.running_var[c];
    }
    inv_std[c] = 1.0 / std::sqrt(var + state.epsilon);
    const double gamma = state.gamma[c], beta = state.beta[c];
    for (std::size_t n = 0; n < batch; ++n) {
      const std::size_t off = (n * channels + c) * spatial;
      for (std::size_t i = 0; i < spatial; ++i) {
        const double xh = (input[off + i] - mean) * inv_std[c];
        xhat[off + i] = xh;
        out[off + i] = gamma * xh + beta;
      }
    }
  }
  LayerOutput r{std::move(out), {}};
  r.cache.kind = LayerKind::batchnorm;
  r.cache.input_shape = input.shape();
  r.cache.inv_std = std::move(inv_std);
  r.cache.normalized = std::move(xhat);
  r.cache.gamma = state.gamma;
  r.cache.batch_statistics = mode == Mode::train;
  return r;
}

namespace {

LayerGrads batchnorm_backward(const LayerCache& cache, const Tensor& upstream) {
  require_same_shape(upstream, cache.input_shape, "batchnorm backward");
  const std::size_t batch = cache.input_shape[0], channels = cache.input_shape[1];
  const std::size_t spatial = spatial_size(cache.input_shape);
  const double m = static_cast<double>(batch * spatial);
  const Tensor& xhat = cache.normalized;

  LayerGrads g;
  g.input = Tensor(cache.input_shape);
  Tensor dgamma({channels}), dbeta({channels});
  for (std::size_t c = 0; c < channels; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t n = 0; n < batch; ++n) {
      const std::size_t off = (n * channels + c) * spatial;
      for (std::size_t i = 0; i < spatial; ++i) {
        sum_dy += upstream[off + i];
        sum_dy_xhat += upstream[off + i] * xhat[off + i];
      }
    }
    dgamma[c] = sum_dy_xhat;
    dbeta[c] = sum_dy;
    const double scale = cache.gamma[c] * cache.inv_std[c];
    for (std::size_t n = 0; n < batch; ++n) {
      const std::size_t off = (n * channels + c) * spatial;
      for (std::size_t i = 0; i < spatial; ++i) {
        if (cache.batch_statistics) {
          g.input[off + i] =
              scale / m * (m * upstream[off + i] - sum_dy - xhat[off + i] * sum_dy_xhat);
        } else {
          g.input[off + i] = scale * upstream[off + i];
        }
      }
    }
  }
  g.params.push_back(std::move(dgamma));
  g.params.push_back(std::move(dbeta));
  return g;
}

}  // namespace

// ---------------------------------------------------------------------------
// dropout

LayerOutput dropout_forward(const Tensor& input, double rate, Mode mode, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    fail(Errc::invalid_argument, "dropout rate must be in [0, 1), got " + std::to_string(rate));
  }
  LayerOutput r{input, {}};
  r.cache.kind = LayerKind::dropout;
  r.cache.input_shape = input.shape();
  if (mode == Mode::infer || rate == 0.0) return r;

  const double keep_scale = 1.0 / (1.0 - rate);
  Tensor mask(input.shape());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mask[i] = rng.uniform() < rate ? 0.0 : keep_scale;
    r.output[i] *= mask[i];
  }
  r.cache.mask = std::move(mask);
  return r;
}

Tensor dropout_replay(const Tensor& input, const LayerCache& cache) {
  if (input.shape() != cache.input_shape) fail(Errc::dimension, "dropout replay shape mismatch");
  Tensor out = input;
  if (!cache.mask.empty()) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= cache.mask[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// softmax + cross entropy

Tensor softmax(const Tensor& logits) {
  require_rank(logits, 2, "softmax");
  Tensor probs(logits.shape());
  const std::size_t rows = logits.dim(0), k = logits.dim(1);
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j) mx = std::max(mx, logits.at(r, j));
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      probs.at(r, j) = std::exp(logits.at(r, j) - mx);
      z += probs.at(r, j);
    }
    for (std::size_t j = 0; j < k; ++j) probs.at(r, j) /= z;
  }
  return probs;
}

SoftmaxXent softmax_cross_entropy(const Tensor& logits, const std::vector<std::size_t>& labels) {
  require_rank(logits, 2, "softmax_cross_entropy");
  const std::size_t rows = logits.dim(0), k = logits.dim(1);
  if (labels.size() != rows) {
    fail(Errc::dimension, "got " + std::to_string(labels.size()) + " labels for " +
                              std::to_string(rows) + " rows");
  }
  for (std::size_t r = 0; r < rows; ++r) {
    if (labels[r] >= k) {
      fail(Errc::invalid_argument, "label " + std::to_string(labels[r]) + " at row " +
                                       std::to_string(r) + " outside [0, " + std::to_string(k) +
                                       ")");
    }
  }
  SoftmaxXent res;
  res.probs = softmax(logits);
  res.grad_logits = res.probs;
  const double inv_n = 1.0 / static_cast<double>(rows);
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j) mx = std::max(mx, logits.at(r, j));
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(logits.at(r, j) - mx);
    // log-sum-exp form keeps the loss finite when the true-class probability
    // underflows.
    loss += std::log(z) - (logits.at(r, labels[r]) - mx);
    res.grad_logits.at(r, labels[r]) -= 1.0;
  }
  for (double& g : res.grad_logits.data()) g *= inv_n;
  res.loss = loss * inv_n;
  res.cache.kind = LayerKind::softmax_xent;
  res.cache.input_shape = logits.shape();
  res.cache.saved = {res.probs};
  res.cache.labels = labels;
  return res;
}

// ---------------------------------------------------------------------------

LayerGrads layer_backward(LayerKind kind, const LayerCache& cache, const Tensor& upstream,
                          bool want_input_grad) {
  if (kind != cache.kind) {
    fail(Errc::invalid_argument, std::string("backward for ") + layer_kind_name(kind) +
                                     " given a " + layer_kind_name(cache.kind) + " cache");
  }
  switch (kind) {
    case LayerKind::conv2d:
      return conv2d_backward(cache, upstream, want_input_grad);
    case LayerKind::dense:
      return dense_backward(cache, upstream, want_input_grad);
    case LayerKind::batchnorm:
      return batchnorm_backward(cache, upstream);
    case LayerKind::relu: {
      require_same_shape(upstream, cache.input_shape, "relu backward");
      LayerGrads g{upstream, {}};
      const Tensor& in = cache.saved.at(0);
      for (std::size_t i = 0; i < in.size(); ++i) {
        if (!(in[i] > 0.0)) g.input[i] = 0.0;
      }
      return g;
    }
    case LayerKind::maxpool2d: {
      const auto& s = cache.input_shape;
      require_same_shape(upstream,
                         {s[0], s[1], (s[2] - cache.kernel) / cache.stride + 1,
                          (s[3] - cache.kernel) / cache.stride + 1},
                         "maxpool backward");
      LayerGrads g{Tensor(s, 0.0), {}};
      for (std::size_t i = 0; i < upstream.size(); ++i) g.input[cache.argmax[i]] += upstream[i];
      return g;
    }
    case LayerKind::dropout: {
      require_same_shape(upstream, cache.input_shape, "dropout backward");
      LayerGrads g{upstream, {}};
      if (!cache.mask.empty()) {
        for (std::size_t i = 0; i < g.input.size(); ++i) g.input[i] *= cache.mask[i];
      }
      return g;
    }
    case LayerKind::flatten:
      return LayerGrads{upstream.reshaped(cache.input_shape), {}};
    case LayerKind::softmax_xent: {
      if (upstream.size() != 1) fail(Errc::dimension, "softmax_xent upstream must be a scalar");
      const Tensor& probs = cache.saved.at(0);
      LayerGrads g{probs, {}};
      const double scale = upstream[0] / static_cast<double>(probs.dim(0));
      for (std::size_t r = 0; r < probs.dim(0); ++r) g.input.at(r, cache.labels[r]) -= 1.0;
      for (double& v : g.input.data()) v *= scale;
      return g;
    }
  }
  fail(Errc::invalid_argument, "unsupported layer kind");
}

}  // namespace ddnet::nn

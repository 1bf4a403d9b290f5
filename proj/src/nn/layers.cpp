#include "salgail/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "salgail/error.hpp"

namespace salgail::nn {

const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv2d: return "Conv2d";
    case LayerKind::Dense: return "Dense";
    case LayerKind::LeakyReLU: return "LeakyReLU";
    case LayerKind::BatchNorm: return "BatchNorm";
    case LayerKind::Softmax: return "Softmax";
    case LayerKind::Flatten: return "Flatten";
    case LayerKind::Concat: return "Concat";
  }
  return "?";
}

namespace {

[[noreturn]] void shape_error(const char* layer, const std::string& detail) {
  throw InputError(std::string(layer) + ": shape mismatch (" + detail + ")");
}

void require_cache(bool cached, const char* layer) {
  if (!cached) throw std::logic_error(std::string(layer) + ": backward called before forward");
}

void uniform_fill(Tensor& t, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : t.data) v = dist(rng);
  round_to_float(t);
}

}  // namespace

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(int in_channels, int out_channels, int kernel, int stride)
    : in_channels_(in_channels),
      out_channels_(out_channels),
      kernel_(kernel),
      stride_(stride),
      weight_("weight", {out_channels, in_channels, kernel, kernel}),
      bias_("bias", {out_channels}) {
  if (in_channels < 1 || out_channels < 1 || kernel < 1 || stride < 1) {
    throw ConfigError("Conv2d: invalid geometry");
  }
}

void Conv2d::init(std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_channels_ * kernel_ * kernel_));
  uniform_fill(weight_.value, bound, rng);
  uniform_fill(bias_.value, bound, rng);
}

namespace {

// Unrolls one batch item into a [C*k*k, oh*ow] patch matrix.
void im2col(const double* x, int c, int h, int w, int k, int stride, int oh, int ow, double* col) {
  const std::size_t p = static_cast<std::size_t>(oh) * ow;
  for (int ci = 0; ci < c; ++ci) {
    const double* plane = x + static_cast<std::size_t>(ci) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        double* row = col + ((static_cast<std::size_t>(ci) * k + ky) * k + kx) * p;
        for (int oy = 0; oy < oh; ++oy) {
          const double* src = plane + static_cast<std::size_t>(oy * stride + ky) * w + kx;
          for (int ox = 0; ox < ow; ++ox) row[oy * ow + ox] = src[ox * stride];
        }
      }
    }
  }
}

void col2im_add(const double* col, int c, int h, int w, int k, int stride, int oh, int ow, double* x) {
  const std::size_t p = static_cast<std::size_t>(oh) * ow;
  for (int ci = 0; ci < c; ++ci) {
    double* plane = x + static_cast<std::size_t>(ci) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const double* row = col + ((static_cast<std::size_t>(ci) * k + ky) * k + kx) * p;
        for (int oy = 0; oy < oh; ++oy) {
          double* dst = plane + static_cast<std::size_t>(oy * stride + ky) * w + kx;
          for (int ox = 0; ox < ow; ++ox) dst[ox * stride] += row[oy * ow + ox];
        }
      }
    }
  }
}

}  // namespace

Tensor Conv2d::predict(const Tensor& x) const {
  if (x.rank() != 4 || x.dim(1) != in_channels_ || x.dim(2) < kernel_ || x.dim(3) < kernel_) {
    shape_error("Conv2d", "input " + x.shape_string());
  }
  const int n = x.dim(0);
  const int h = x.dim(2);
  const int w = x.dim(3);
  const int oh = output_extent(h);
  const int ow = output_extent(w);
  const std::size_t p = static_cast<std::size_t>(oh) * ow;
  const std::size_t kk = static_cast<std::size_t>(in_channels_) * kernel_ * kernel_;
  Tensor y({n, out_channels_, oh, ow});
  std::vector<double> col(kk * p);
  const double* wd = weight_.value.data.data();
  for (int b = 0; b < n; ++b) {
    im2col(x.data.data() + static_cast<std::size_t>(b) * in_channels_ * h * w, in_channels_, h, w, kernel_, stride_,
           oh, ow, col.data());
    for (int o = 0; o < out_channels_; ++o) {
      double* yrow = y.data.data() + (static_cast<std::size_t>(b) * out_channels_ + o) * p;
      std::fill(yrow, yrow + p, bias_.value[o]);
      const double* wrow = wd + static_cast<std::size_t>(o) * kk;
      for (std::size_t r = 0; r < kk; ++r) {
        const double wv = wrow[r];
        const double* crow = col.data() + r * p;
        for (std::size_t q = 0; q < p; ++q) yrow[q] += wv * crow[q];
      }
    }
  }
  return y;
}

Tensor Conv2d::forward(const Tensor& x, bool /*train*/) {
  Tensor y = predict(x);
  input_ = x;
  cached_ = true;
  return y;
}

Tensor Conv2d::backward(const Tensor& g) {
  require_cache(cached_, "Conv2d");
  const Tensor& x = input_;
  const int n = x.dim(0);
  const int h = x.dim(2);
  const int w = x.dim(3);
  const int oh = output_extent(h);
  const int ow = output_extent(w);
  if (g.rank() != 4 || g.dim(0) != n || g.dim(1) != out_channels_ || g.dim(2) != oh || g.dim(3) != ow) {
    shape_error("Conv2d", "grad " + g.shape_string());
  }
  const std::size_t p = static_cast<std::size_t>(oh) * ow;
  const std::size_t kk = static_cast<std::size_t>(in_channels_) * kernel_ * kernel_;
  Tensor gx(x.shape);
  std::vector<double> col(kk * p);
  std::vector<double> gcol(kk * p);
  const double* wd = weight_.value.data.data();
  double* gwd = weight_.grad.data.data();
  for (int b = 0; b < n; ++b) {
    const std::size_t in_off = static_cast<std::size_t>(b) * in_channels_ * h * w;
    im2col(x.data.data() + in_off, in_channels_, h, w, kernel_, stride_, oh, ow, col.data());
    std::fill(gcol.begin(), gcol.end(), 0.0);
    for (int o = 0; o < out_channels_; ++o) {
      const double* grow = g.data.data() + (static_cast<std::size_t>(b) * out_channels_ + o) * p;
      double gb = 0.0;
      for (std::size_t q = 0; q < p; ++q) gb += grow[q];
      bias_.grad[o] += gb;
      const double* wrow = wd + static_cast<std::size_t>(o) * kk;
      double* gwrow = gwd + static_cast<std::size_t>(o) * kk;
      for (std::size_t r = 0; r < kk; ++r) {
        const double* crow = col.data() + r * p;
        double* gcrow = gcol.data() + r * p;
        const double wv = wrow[r];
        double acc = 0.0;
        for (std::size_t q = 0; q < p; ++q) {
          acc += grow[q] * crow[q];
          gcrow[q] += wv * grow[q];
        }
        gwrow[r] += acc;
      }
    }
    col2im_add(gcol.data(), in_channels_, h, w, kernel_, stride_, oh, ow, gx.data.data() + in_off);
  }
  return gx;
}

nlohmann::json Conv2d::spec() const {
  return {{"kind", "Conv2d"}, {"in_channels", in_channels_}, {"out_channels", out_channels_},
          {"kernel", kernel_}, {"stride", stride_}};
}

// ---------------------------------------------------------------- Dense

Dense::Dense(int in_features, int out_features)
    : in_(in_features), out_(out_features), weight_("weight", {out_features, in_features}),
      bias_("bias", {out_features}) {
  if (in_features < 1 || out_features < 1) throw ConfigError("Dense: invalid size");
}

void Dense::init(std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_));
  uniform_fill(weight_.value, bound, rng);
  uniform_fill(bias_.value, bound, rng);
}

Tensor Dense::predict(const Tensor& x) const {
  if (x.rank() != 2 || x.dim(1) != in_) shape_error("Dense", "input " + x.shape_string());
  const int n = x.dim(0);
  Tensor y({n, out_});
  for (int b = 0; b < n; ++b) {
    const double* xr = x.data.data() + static_cast<std::size_t>(b) * in_;
    for (int o = 0; o < out_; ++o) {
      const double* wr = weight_.value.data.data() + static_cast<std::size_t>(o) * in_;
      double acc = bias_.value[o];
      for (int i = 0; i < in_; ++i) acc += wr[i] * xr[i];
      y[static_cast<std::size_t>(b) * out_ + o] = acc;
    }
  }
  return y;
}

Tensor Dense::forward(const Tensor& x, bool /*train*/) {
  Tensor y = predict(x);
  input_ = x;
  cached_ = true;
  return y;
}

Tensor Dense::backward(const Tensor& g) {
  require_cache(cached_, "Dense");
  const int n = input_.dim(0);
  if (g.rank() != 2 || g.dim(0) != n || g.dim(1) != out_) shape_error("Dense", "grad " + g.shape_string());
  Tensor gx({n, in_});
  for (int b = 0; b < n; ++b) {
    const double* xr = input_.data.data() + static_cast<std::size_t>(b) * in_;
    double* gxr = gx.data.data() + static_cast<std::size_t>(b) * in_;
    for (int o = 0; o < out_; ++o) {
      const double go = g[static_cast<std::size_t>(b) * out_ + o];
      if (go == 0.0) continue;
      bias_.grad[o] += go;
      double* gwr = weight_.grad.data.data() + static_cast<std::size_t>(o) * in_;
      const double* wr = weight_.value.data.data() + static_cast<std::size_t>(o) * in_;
      for (int i = 0; i < in_; ++i) {
        gwr[i] += go * xr[i];
        gxr[i] += go * wr[i];
      }
    }
  }
  return gx;
}

nlohmann::json Dense::spec() const {
  return {{"kind", "Dense"}, {"in_features", in_}, {"out_features", out_}};
}

// ---------------------------------------------------------------- LeakyReLU

Tensor LeakyReLU::predict(const Tensor& x) const {
  Tensor y = x;
  for (auto& v : y.data) {
    if (v < 0.0) v *= slope_;
  }
  return y;
}

Tensor LeakyReLU::forward(const Tensor& x, bool /*train*/) {
  input_ = x;
  cached_ = true;
  return predict(x);
}

Tensor LeakyReLU::backward(const Tensor& g) {
  require_cache(cached_, "LeakyReLU");
  if (g.shape != input_.shape) shape_error("LeakyReLU", "grad " + g.shape_string());
  Tensor gx = g;
  for (std::size_t i = 0; i < gx.size(); ++i) {
    if (input_[i] < 0.0) gx[i] *= slope_;
  }
  return gx;
}

void LeakyReLU::activation_pattern(std::vector<char>& out) const {
  for (double v : input_.data) out.push_back(v < 0.0 ? 0 : 1);
}

nlohmann::json LeakyReLU::spec() const { return {{"kind", "LeakyReLU"}, {"negative_slope", slope_}}; }

// ---------------------------------------------------------------- BatchNorm

BatchNorm::BatchNorm(int channels, double eps, double momentum)
    : channels_(channels),
      eps_(eps),
      momentum_(momentum),
      gamma_("gamma", {channels}),
      beta_("beta", {channels}),
      running_mean_({channels}, 0.0),
      running_var_({channels}, 1.0) {
  if (channels < 1 || !(eps > 0.0) || !(momentum >= 0.0 && momentum <= 1.0)) {
    throw ConfigError("BatchNorm: invalid settings");
  }
  gamma_.value.fill(1.0);
}

void BatchNorm::init(std::mt19937_64& /*rng*/) {
  gamma_.value.fill(1.0);
  beta_.value.fill(0.0);
  running_mean_.fill(0.0);
  running_var_.fill(1.0);
}

namespace {

struct BnGeometry {
  int batch;
  int channels;
  std::size_t spatial;
};

BnGeometry bn_geometry(const Tensor& x, int channels) {
  if ((x.rank() != 2 && x.rank() != 4) || x.dim(1) != channels) {
    shape_error("BatchNorm", "input " + x.shape_string());
  }
  std::size_t spatial = 1;
  for (int i = 2; i < x.rank(); ++i) spatial *= static_cast<std::size_t>(x.dim(i));
  return {x.dim(0), channels, spatial};
}

}  // namespace

Tensor BatchNorm::normalize(const Tensor& x, const std::vector<double>& mean,
                            const std::vector<double>& invstd, Tensor* xhat) const {
  const BnGeometry g = bn_geometry(x, channels_);
  Tensor y(x.shape);
  if (xhat) *xhat = Tensor(x.shape);
  for (int b = 0; b < g.batch; ++b) {
    for (int c = 0; c < channels_; ++c) {
      const std::size_t off = (static_cast<std::size_t>(b) * channels_ + c) * g.spatial;
      for (std::size_t s = 0; s < g.spatial; ++s) {
        const double h = (x[off + s] - mean[c]) * invstd[c];
        if (xhat) (*xhat)[off + s] = h;
        y[off + s] = gamma_.value[c] * h + beta_.value[c];
      }
    }
  }
  return y;
}

Tensor BatchNorm::predict(const Tensor& x) const {
  std::vector<double> mean(running_mean_.data);
  std::vector<double> invstd(channels_);
  for (int c = 0; c < channels_; ++c) invstd[c] = 1.0 / std::sqrt(running_var_[c] + eps_);
  return normalize(x, mean, invstd, nullptr);
}

Tensor BatchNorm::forward(const Tensor& x, bool train) {
  const BnGeometry g = bn_geometry(x, channels_);
  std::vector<double> mean(channels_, 0.0);
  invstd_.assign(channels_, 0.0);
  if (train) {
    const double m = static_cast<double>(g.batch) * static_cast<double>(g.spatial);
    std::vector<double> var(channels_, 0.0);
    for (int c = 0; c < channels_; ++c) {
      double s = 0.0;
      for (int b = 0; b < g.batch; ++b) {
        const std::size_t off = (static_cast<std::size_t>(b) * channels_ + c) * g.spatial;
        for (std::size_t k = 0; k < g.spatial; ++k) s += x[off + k];
      }
      mean[c] = s / m;
      double ss = 0.0;
      for (int b = 0; b < g.batch; ++b) {
        const std::size_t off = (static_cast<std::size_t>(b) * channels_ + c) * g.spatial;
        for (std::size_t k = 0; k < g.spatial; ++k) ss += (x[off + k] - mean[c]) * (x[off + k] - mean[c]);
      }
      var[c] = ss / m;
      invstd_[c] = 1.0 / std::sqrt(var[c] + eps_);
      const double unbiased = m > 1.0 ? var[c] * m / (m - 1.0) : var[c];
      running_mean_[c] = (1.0 - momentum_) * running_mean_[c] + momentum_ * mean[c];
      running_var_[c] = (1.0 - momentum_) * running_var_[c] + momentum_ * unbiased;
    }
    round_to_float(running_mean_);
    round_to_float(running_var_);
  } else {
    mean = running_mean_.data;
    for (int c = 0; c < channels_; ++c) invstd_[c] = 1.0 / std::sqrt(running_var_[c] + eps_);
  }
  batch_stats_ = train;
  cached_ = true;
  return normalize(x, mean, invstd_, &xhat_);
}

Tensor BatchNorm::backward(const Tensor& grad) {
  require_cache(cached_, "BatchNorm");
  if (grad.shape != xhat_.shape) shape_error("BatchNorm", "grad " + grad.shape_string());
  const BnGeometry g = bn_geometry(grad, channels_);
  const double m = static_cast<double>(g.batch) * static_cast<double>(g.spatial);
  Tensor gx(grad.shape);
  for (int c = 0; c < channels_; ++c) {
    double sum_g = 0.0;
    double sum_gx = 0.0;
    for (int b = 0; b < g.batch; ++b) {
      const std::size_t off = (static_cast<std::size_t>(b) * channels_ + c) * g.spatial;
      for (std::size_t k = 0; k < g.spatial; ++k) {
        sum_g += grad[off + k];
        sum_gx += grad[off + k] * xhat_[off + k];
      }
    }
    gamma_.grad[c] += sum_gx;
    beta_.grad[c] += sum_g;
    const double gam = gamma_.value[c];
    for (int b = 0; b < g.batch; ++b) {
      const std::size_t off = (static_cast<std::size_t>(b) * channels_ + c) * g.spatial;
      for (std::size_t k = 0; k < g.spatial; ++k) {
        if (batch_stats_) {
          gx[off + k] = gam * invstd_[c] / m * (m * grad[off + k] - sum_g - xhat_[off + k] * sum_gx);
        } else {
          gx[off + k] = gam * invstd_[c] * grad[off + k];
        }
      }
    }
  }
  return gx;
}

nlohmann::json BatchNorm::spec() const {
  return {{"kind", "BatchNorm"}, {"channels", channels_}, {"eps", eps_}, {"momentum", momentum_}};
}

// ---------------------------------------------------------------- Softmax

Tensor Softmax::predict(const Tensor& x) const {
  if (x.rank() != 2) shape_error("Softmax", "input " + x.shape_string());
  Tensor y = log_softmax(x);
  for (auto& v : y.data) v = std::exp(v);
  return y;
}

Tensor Softmax::forward(const Tensor& x, bool /*train*/) {
  output_ = predict(x);
  cached_ = true;
  return output_;
}

Tensor Softmax::backward(const Tensor& g) {
  require_cache(cached_, "Softmax");
  if (g.shape != output_.shape) shape_error("Softmax", "grad " + g.shape_string());
  const int n = g.dim(0);
  const int f = g.dim(1);
  Tensor gx(g.shape);
  for (int b = 0; b < n; ++b) {
    const std::size_t off = static_cast<std::size_t>(b) * f;
    double dot = 0.0;
    for (int i = 0; i < f; ++i) dot += g[off + i] * output_[off + i];
    for (int i = 0; i < f; ++i) gx[off + i] = output_[off + i] * (g[off + i] - dot);
  }
  return gx;
}

nlohmann::json Softmax::spec() const { return {{"kind", "Softmax"}}; }

// ---------------------------------------------------------------- Flatten

Tensor Flatten::predict(const Tensor& x) const {
  if (x.rank() < 2) shape_error("Flatten", "input " + x.shape_string());
  Tensor y = x;
  y.shape = {x.dim(0), static_cast<int>(x.size() / static_cast<std::size_t>(x.dim(0)))};
  return y;
}

Tensor Flatten::forward(const Tensor& x, bool /*train*/) {
  input_shape_ = x.shape;
  cached_ = true;
  return predict(x);
}

Tensor Flatten::backward(const Tensor& g) {
  require_cache(cached_, "Flatten");
  if (g.size() != shape_size(input_shape_)) shape_error("Flatten", "grad " + g.shape_string());
  Tensor gx = g;
  gx.shape = input_shape_;
  return gx;
}

nlohmann::json Flatten::spec() const { return {{"kind", "Flatten"}}; }

// ---------------------------------------------------------------- Concat

Tensor Concat::predict(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0)) {
    shape_error("Concat", a.shape_string() + " + " + b.shape_string());
  }
  const int n = a.dim(0);
  const int fa = a.dim(1);
  const int fb = b.dim(1);
  Tensor y({n, fa + fb});
  for (int i = 0; i < n; ++i) {
    std::copy_n(a.data.begin() + static_cast<std::ptrdiff_t>(i) * fa, fa,
                y.data.begin() + static_cast<std::ptrdiff_t>(i) * (fa + fb));
    std::copy_n(b.data.begin() + static_cast<std::ptrdiff_t>(i) * fb, fb,
                y.data.begin() + static_cast<std::ptrdiff_t>(i) * (fa + fb) + fa);
  }
  return y;
}

Tensor Concat::forward(const Tensor& a, const Tensor& b) {
  Tensor y = predict(a, b);
  left_ = a.dim(1);
  right_ = b.dim(1);
  return y;
}

std::pair<Tensor, Tensor> Concat::backward(const Tensor& g) const {
  if (left_ + right_ == 0) throw std::logic_error("Concat: backward called before forward");
  if (g.rank() != 2 || g.dim(1) != left_ + right_) shape_error("Concat", "grad " + g.shape_string());
  const int n = g.dim(0);
  Tensor ga({n, left_});
  Tensor gb({n, right_});
  for (int i = 0; i < n; ++i) {
    const auto row = g.data.begin() + static_cast<std::ptrdiff_t>(i) * (left_ + right_);
    std::copy_n(row, left_, ga.data.begin() + static_cast<std::ptrdiff_t>(i) * left_);
    std::copy_n(row + left_, right_, gb.data.begin() + static_cast<std::ptrdiff_t>(i) * right_);
  }
  return {std::move(ga), std::move(gb)};
}

nlohmann::json Concat::spec() const { return {{"kind", "Concat"}}; }

// ---------------------------------------------------------------- StreamDense

StreamDense::StreamDense(int streams, int in_features, int out_features)
    : streams_(streams), in_(in_features), out_(out_features),
      weight_("weight", {streams, out_features, in_features}), bias_("bias", {streams, out_features}) {
  if (streams < 1 || in_features < 1 || out_features < 1) throw ConfigError("StreamDense: invalid size");
}

void StreamDense::init(std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_));
  uniform_fill(weight_.value, bound, rng);
  uniform_fill(bias_.value, bound, rng);
}

Tensor StreamDense::predict(const Tensor& x, const Tensor& code) const {
  if (x.rank() != 2 || x.dim(1) != in_) shape_error("StreamDense", "input " + x.shape_string());
  if (code.rank() != 2 || code.dim(0) != x.dim(0) || code.dim(1) != streams_) {
    shape_error("StreamDense", "code " + code.shape_string());
  }
  const int n = x.dim(0);
  Tensor y({n, out_});
  for (int b = 0; b < n; ++b) {
    const double* xr = x.data.data() + static_cast<std::size_t>(b) * in_;
    for (int s = 0; s < streams_; ++s) {
      const double c = code[static_cast<std::size_t>(b) * streams_ + s];
      if (c == 0.0) continue;
      for (int o = 0; o < out_; ++o) {
        const std::size_t row = static_cast<std::size_t>(s) * out_ + o;
        const double* wr = weight_.value.data.data() + row * in_;
        double acc = bias_.value[row];
        for (int i = 0; i < in_; ++i) acc += wr[i] * xr[i];
        y[static_cast<std::size_t>(b) * out_ + o] += c * acc;
      }
    }
  }
  return y;
}

Tensor StreamDense::forward(const Tensor& x, const Tensor& code) {
  Tensor y = predict(x, code);
  input_ = x;
  code_ = code;
  cached_ = true;
  return y;
}

Tensor StreamDense::backward(const Tensor& g) {
  require_cache(cached_, "StreamDense");
  const int n = input_.dim(0);
  if (g.rank() != 2 || g.dim(0) != n || g.dim(1) != out_) shape_error("StreamDense", "grad " + g.shape_string());
  Tensor gx({n, in_});
  for (int b = 0; b < n; ++b) {
    const double* xr = input_.data.data() + static_cast<std::size_t>(b) * in_;
    double* gxr = gx.data.data() + static_cast<std::size_t>(b) * in_;
    for (int s = 0; s < streams_; ++s) {
      const double c = code_[static_cast<std::size_t>(b) * streams_ + s];
      if (c == 0.0) continue;
      for (int o = 0; o < out_; ++o) {
        const double go = c * g[static_cast<std::size_t>(b) * out_ + o];
        if (go == 0.0) continue;
        const std::size_t row = static_cast<std::size_t>(s) * out_ + o;
        bias_.grad[row] += go;
        double* gwr = weight_.grad.data.data() + row * in_;
        const double* wr = weight_.value.data.data() + row * in_;
        for (int i = 0; i < in_; ++i) {
          gwr[i] += go * xr[i];
          gxr[i] += go * wr[i];
        }
      }
    }
  }
  return gx;
}

nlohmann::json StreamDense::spec() const {
  return {{"kind", "StreamDense"}, {"streams", streams_}, {"in_features", in_}, {"out_features", out_}};
}

// ---------------------------------------------------------------- Sequential

Sequential::Sequential(const Sequential& other) {
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

Sequential& Sequential::operator=(const Sequential& other) {
  if (this != &other) {
    layers_.clear();
    for (const auto& l : other.layers_) layers_.push_back(l->clone());
  }
  return *this;
}

Tensor Sequential::forward(const Tensor& x, bool train) {
  Tensor h = x;
  for (auto& l : layers_) h = l->forward(h, train);
  return h;
}

Tensor Sequential::predict(const Tensor& x) const {
  Tensor h = x;
  for (const auto& l : layers_) h = l->predict(h);
  return h;
}

Tensor Sequential::backward(const Tensor& grad_out) {
  Tensor g = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

std::vector<Parameter*> Sequential::parameters() {
  std::vector<Parameter*> out;
  for (auto& l : layers_) {
    for (auto* p : l->parameters()) out.push_back(p);
  }
  return out;
}

std::vector<Tensor*> Sequential::buffers() {
  std::vector<Tensor*> out;
  for (auto& l : layers_) {
    for (auto* b : l->buffers()) out.push_back(b);
  }
  return out;
}

void Sequential::init(std::mt19937_64& rng) {
  for (auto& l : layers_) l->init(rng);
}

void Sequential::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

nlohmann::json Sequential::spec() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& l : layers_) arr.push_back(l->spec());
  return arr;
}

void Sequential::activation_pattern(std::vector<char>& out) const {
  for (const auto& l : layers_) l->activation_pattern(out);
}

std::unique_ptr<Layer> make_layer(const nlohmann::json& s) {
  const std::string kind = s.at("kind").get<std::string>();
  if (kind == "Conv2d") {
    return std::make_unique<Conv2d>(s.at("in_channels").get<int>(), s.at("out_channels").get<int>(),
                                    s.at("kernel").get<int>(), s.at("stride").get<int>());
  }
  if (kind == "Dense") {
    return std::make_unique<Dense>(s.at("in_features").get<int>(), s.at("out_features").get<int>());
  }
  if (kind == "LeakyReLU") return std::make_unique<LeakyReLU>(s.at("negative_slope").get<double>());
  if (kind == "BatchNorm") {
    return std::make_unique<BatchNorm>(s.at("channels").get<int>(), s.at("eps").get<double>(),
                                       s.at("momentum").get<double>());
  }
  if (kind == "Softmax") return std::make_unique<Softmax>();
  if (kind == "Flatten") return std::make_unique<Flatten>();
  throw ConfigError("unknown layer kind '" + kind + "'");
}

Sequential make_sequential(const nlohmann::json& specs) {
  Sequential seq;
  for (const auto& s : specs) seq.add(make_layer(s));
  return seq;
}

Tensor log_softmax(const Tensor& logits) {
  if (logits.rank() != 2) shape_error("log_softmax", logits.shape_string());
  const int n = logits.dim(0);
  const int f = logits.dim(1);
  Tensor out(logits.shape);
  for (int b = 0; b < n; ++b) {
    const std::size_t off = static_cast<std::size_t>(b) * f;
    double mx = logits[off];
    for (int i = 1; i < f; ++i) mx = std::max(mx, logits[off + i]);
    double s = 0.0;
    for (int i = 0; i < f; ++i) s += std::exp(logits[off + i] - mx);
    const double lse = mx + std::log(s);
    for (int i = 0; i < f; ++i) out[off + i] = logits[off + i] - lse;
  }
  return out;
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double log_sigmoid(double z) {
  if (z >= 0.0) return -std::log1p(std::exp(-z));
  return z - std::log1p(std::exp(z));
}

}  // namespace salgail::nn

// Copyright 2026 The equicascade Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "equicascade/nn/layers.hpp"

#include <Eigen/Core>
#include <cmath>
#include <limits>

namespace equicascade::nn {
namespace {

template <typename T>
using MatrixRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapRM = Eigen::Map<MatrixRM<T>>;
template <typename T>
using ConstMapRM = Eigen::Map<const MatrixRM<T>>;

template <typename T>
void he_normal(Tensor<T>& t, int fan_in, Rng& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  for (auto& v : t.values()) v = static_cast<T>(dist(rng));
}

}  // namespace

// ---------------------------------------------------------------- Conv2d

template <typename T>
Conv2d<T>::Conv2d(int in_channels, int out_channels, int kernel, int stride, int padding, bool bias,
                  Rng& rng)
    : in_(in_channels), out_(out_channels), k_(kernel), stride_(stride), pad_(padding), has_bias_(bias) {
  if (in_ <= 0 || out_ <= 0 || k_ <= 0 || stride_ <= 0 || pad_ < 0) {
    throw InvalidArgument("Conv2d: invalid geometry");
  }
  weight_ = {"weight", Tensor<T>(out_, in_, k_, k_), Tensor<T>(out_, in_, k_, k_)};
  he_normal(weight_.value, in_ * k_ * k_, rng);
  if (has_bias_) bias_ = {"bias", Tensor<T>(out_, 1, 1, 1), Tensor<T>(out_, 1, 1, 1)};
}

template <typename T>
void Conv2d<T>::im2col(const T* src, int h, int w, T* cols) const {
  const int ho = output_size(h);
  const int wo = output_size(w);
  const std::size_t hw = static_cast<std::size_t>(ho) * wo;
  for (int c = 0; c < in_; ++c) {
    const T* plane = src + static_cast<std::size_t>(c) * h * w;
    for (int ky = 0; ky < k_; ++ky) {
      for (int kx = 0; kx < k_; ++kx) {
        T* row = cols + (static_cast<std::size_t>(c) * k_ * k_ + ky * k_ + kx) * hw;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride_ - pad_ + ky;
          T* out = row + static_cast<std::size_t>(oy) * wo;
          if (iy < 0 || iy >= h) {
            std::fill(out, out + wo, T(0));
            continue;
          }
          const T* in_row = plane + static_cast<std::size_t>(iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride_ - pad_ + kx;
            out[ox] = (ix >= 0 && ix < w) ? in_row[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void Conv2d<T>::col2im(const T* cols, int h, int w, T* dst) const {
  const int ho = output_size(h);
  const int wo = output_size(w);
  const std::size_t hw = static_cast<std::size_t>(ho) * wo;
  for (int c = 0; c < in_; ++c) {
    T* plane = dst + static_cast<std::size_t>(c) * h * w;
    for (int ky = 0; ky < k_; ++ky) {
      for (int kx = 0; kx < k_; ++kx) {
        const T* row = cols + (static_cast<std::size_t>(c) * k_ * k_ + ky * k_ + kx) * hw;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride_ - pad_ + ky;
          if (iy < 0 || iy >= h) continue;
          T* out_row = plane + static_cast<std::size_t>(iy) * w;
          const T* in = row + static_cast<std::size_t>(oy) * wo;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride_ - pad_ + kx;
            if (ix >= 0 && ix < w) out_row[ix] += in[ox];
          }
        }
      }
    }
  }
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x, Mode) {
  input_ = x;
  return infer(x);
}

template <typename T>
Tensor<T> Conv2d<T>::infer(const Tensor<T>& x) const {
  if (x.c() != in_) {
    throw InvalidArgument("Conv2d: expected " + std::to_string(in_) + " input channels, got " +
                          x.shape_string());
  }
  const int ho = output_size(x.h());
  const int wo = output_size(x.w());
  if (ho <= 0 || wo <= 0) throw InvalidArgument("Conv2d: input too small " + x.shape_string());
  Tensor<T> y(x.n(), out_, ho, wo);
  const int kdim = in_ * k_ * k_;
  const int hw = ho * wo;
  const bool direct = (k_ == 1 && stride_ == 1 && pad_ == 0);
  std::vector<T> cols(direct ? 0 : static_cast<std::size_t>(kdim) * hw);
  ConstMapRM<T> wmat(weight_.value.data(), out_, kdim);
  for (int i = 0; i < x.n(); ++i) {
    const T* src = x.sample(i);
    if (!direct) {
      im2col(src, x.h(), x.w(), cols.data());
      src = cols.data();
    }
    MapRM<T> out(y.sample(i), out_, hw);
    out.noalias() = wmat * ConstMapRM<T>(src, kdim, hw);
    if (has_bias_) {
      for (int o = 0; o < out_; ++o) out.row(o).array() += bias_.value[static_cast<std::size_t>(o)];
    }
  }
  return y;
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& grad_out) {
  const Tensor<T>& x = input_;
  const int ho = output_size(x.h());
  const int wo = output_size(x.w());
  const int kdim = in_ * k_ * k_;
  const int hw = ho * wo;
  const bool direct = (k_ == 1 && stride_ == 1 && pad_ == 0);
  Tensor<T> dx = Tensor<T>::zeros_like(x);
  std::vector<T> cols(direct ? 0 : static_cast<std::size_t>(kdim) * hw);
  std::vector<T> dcols(static_cast<std::size_t>(kdim) * hw);
  ConstMapRM<T> wmat(weight_.value.data(), out_, kdim);
  MapRM<T> dw(weight_.grad.data(), out_, kdim);
  for (int i = 0; i < x.n(); ++i) {
    ConstMapRM<T> g(grad_out.sample(i), out_, hw);
    const T* src = x.sample(i);
    if (!direct) {
      im2col(src, x.h(), x.w(), cols.data());
      src = cols.data();
    }
    dw.noalias() += g * ConstMapRM<T>(src, kdim, hw).transpose();
    if (has_bias_) {
      // plain loop: Eigen's vectorised sum depends on the row's alignment
      for (int o = 0; o < out_; ++o) {
        const T* row = grad_out.sample(i) + static_cast<std::size_t>(o) * hw;
        T acc = 0;
        for (int k = 0; k < hw; ++k) acc += row[k];
        bias_.grad[static_cast<std::size_t>(o)] += acc;
      }
    }
    if (direct) {
      MapRM<T>(dx.sample(i), kdim, hw).noalias() = wmat.transpose() * g;
    } else {
      MapRM<T>(dcols.data(), kdim, hw).noalias() = wmat.transpose() * g;
      col2im(dcols.data(), x.h(), x.w(), dx.sample(i));
    }
  }
  return dx;
}

template <typename T>
std::vector<Parameter<T>*> Conv2d<T>::parameters() {
  if (has_bias_) return {&weight_, &bias_};
  return {&weight_};
}

// ----------------------------------------------------------- BatchNorm2d

template <typename T>
BatchNorm2d<T>::BatchNorm2d(int channels, T momentum, T eps)
    : channels_(channels),
      momentum_(momentum),
      eps_(eps),
      gamma_{"gamma", Tensor<T>(channels, 1, 1, 1, T(1)), Tensor<T>(channels, 1, 1, 1)},
      beta_{"beta", Tensor<T>(channels, 1, 1, 1), Tensor<T>(channels, 1, 1, 1)},
      running_mean_(channels, 1, 1, 1),
      running_var_(channels, 1, 1, 1, T(1)) {}

template <typename T>
Tensor<T> BatchNorm2d<T>::forward(const Tensor<T>& x, Mode mode) {
  if (x.c() != channels_) throw InvalidArgument("BatchNorm2d: channel mismatch " + x.shape_string());
  last_mode_ = mode;
  const int n = x.n();
  const std::size_t plane = x.plane();
  const double count = static_cast<double>(n) * plane;
  Tensor<T> y = Tensor<T>::zeros_like(x);
  xhat_ = Tensor<T>::zeros_like(x);
  inv_std_.assign(static_cast<std::size_t>(channels_), T(0));
  for (int c = 0; c < channels_; ++c) {
    const auto cs = static_cast<std::size_t>(c);
    T mean;
    T var;
    if (mode == Mode::kTrain) {
      double s = 0;
      for (int i = 0; i < n; ++i) {
        const T* p = x.sample(i) + cs * plane;
        for (std::size_t j = 0; j < plane; ++j) s += p[j];
      }
      const double m = s / count;
      double ss = 0;
      for (int i = 0; i < n; ++i) {
        const T* p = x.sample(i) + cs * plane;
        for (std::size_t j = 0; j < plane; ++j) ss += (p[j] - m) * (p[j] - m);
      }
      mean = static_cast<T>(m);
      var = static_cast<T>(ss / count);
      const double unbiased = count > 1 ? ss / (count - 1) : ss;
      running_mean_[cs] = (1 - momentum_) * running_mean_[cs] + momentum_ * mean;
      running_var_[cs] = (1 - momentum_) * running_var_[cs] + momentum_ * static_cast<T>(unbiased);
    } else {
      mean = running_mean_[cs];
      var = running_var_[cs];
    }
    const T inv = T(1) / std::sqrt(var + eps_);
    inv_std_[cs] = inv;
    const T g = gamma_.value[cs];
    const T b = beta_.value[cs];
    for (int i = 0; i < n; ++i) {
      const T* p = x.sample(i) + cs * plane;
      T* xh = xhat_.sample(i) + cs * plane;
      T* q = y.sample(i) + cs * plane;
      for (std::size_t j = 0; j < plane; ++j) {
        xh[j] = (p[j] - mean) * inv;
        q[j] = g * xh[j] + b;
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> BatchNorm2d<T>::infer(const Tensor<T>& x) const {
  if (x.c() != channels_) throw InvalidArgument("BatchNorm2d: channel mismatch " + x.shape_string());
  Tensor<T> y = Tensor<T>::zeros_like(x);
  const std::size_t plane = x.plane();
  for (int c = 0; c < channels_; ++c) {
    const auto cs = static_cast<std::size_t>(c);
    const T inv = T(1) / std::sqrt(running_var_[cs] + eps_);
    const T scale = gamma_.value[cs] * inv;
    const T shift = beta_.value[cs] - running_mean_[cs] * scale;
    for (int i = 0; i < x.n(); ++i) {
      const T* p = x.sample(i) + cs * plane;
      T* q = y.sample(i) + cs * plane;
      for (std::size_t j = 0; j < plane; ++j) q[j] = p[j] * scale + shift;
    }
  }
  return y;
}

template <typename T>
Tensor<T> BatchNorm2d<T>::backward(const Tensor<T>& grad_out) {
  const int n = grad_out.n();
  const std::size_t plane = grad_out.plane();
  const double count = static_cast<double>(n) * plane;
  Tensor<T> dx = Tensor<T>::zeros_like(grad_out);
  for (int c = 0; c < channels_; ++c) {
    const auto cs = static_cast<std::size_t>(c);
    double sum_dy = 0;
    double sum_dy_xhat = 0;
    for (int i = 0; i < n; ++i) {
      const T* dy = grad_out.sample(i) + cs * plane;
      const T* xh = xhat_.sample(i) + cs * plane;
      for (std::size_t j = 0; j < plane; ++j) {
        sum_dy += dy[j];
        sum_dy_xhat += dy[j] * xh[j];
      }
    }
    gamma_.grad[cs] += static_cast<T>(sum_dy_xhat);
    beta_.grad[cs] += static_cast<T>(sum_dy);
    const T g = gamma_.value[cs];
    const T inv = inv_std_[cs];
    for (int i = 0; i < n; ++i) {
      const T* dy = grad_out.sample(i) + cs * plane;
      const T* xh = xhat_.sample(i) + cs * plane;
      T* d = dx.sample(i) + cs * plane;
      if (last_mode_ == Mode::kTrain) {
        const T mean_dy = static_cast<T>(sum_dy / count);
        const T mean_dy_xhat = static_cast<T>(sum_dy_xhat / count);
        for (std::size_t j = 0; j < plane; ++j) d[j] = g * inv * (dy[j] - mean_dy - xh[j] * mean_dy_xhat);
      } else {
        for (std::size_t j = 0; j < plane; ++j) d[j] = g * inv * dy[j];
      }
    }
  }
  return dx;
}

template <typename T>
std::vector<Parameter<T>*> BatchNorm2d<T>::parameters() {
  return {&gamma_, &beta_};
}

template <typename T>
std::vector<Buffer<T>> BatchNorm2d<T>::buffers() {
  return {{buffer_prefix_ + "running_mean", &running_mean_}, {buffer_prefix_ + "running_var", &running_var_}};
}

template <typename T>
void BatchNorm2d<T>::add_name_prefix(const std::string& prefix) {
  Layer<T>::add_name_prefix(prefix);
  buffer_prefix_ = prefix + buffer_prefix_;
}

// ------------------------------------------------------------ activations

template <typename T>
Tensor<T> ReLU<T>::forward(const Tensor<T>& x, Mode) {
  input_ = x;
  return infer(x);
}

template <typename T>
Tensor<T> ReLU<T>::infer(const Tensor<T>& x) const {
  Tensor<T> y = x;
  for (auto& v : y.values()) v = v > T(0) ? v : T(0);
  return y;
}

template <typename T>
Tensor<T> ReLU<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> dx = grad_out;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    if (!(input_[i] > T(0))) dx[i] = T(0);
  }
  return dx;
}

template <typename T>
Tensor<T> LeakyReLU<T>::forward(const Tensor<T>& x, Mode) {
  input_ = x;
  return infer(x);
}

template <typename T>
Tensor<T> LeakyReLU<T>::infer(const Tensor<T>& x) const {
  Tensor<T> y = x;
  for (auto& v : y.values()) v = v > T(0) ? v : slope_ * v;
  return y;
}

template <typename T>
Tensor<T> LeakyReLU<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> dx = grad_out;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    if (!(input_[i] > T(0))) dx[i] *= slope_;
  }
  return dx;
}

// ---------------------------------------------------------------- pooling

template <typename T>
Tensor<T> MaxPool2d<T>::forward(const Tensor<T>& x, Mode) {
  in_dims_ = x.dims();
  return pool(x, &argmax_);
}

template <typename T>
Tensor<T> MaxPool2d<T>::infer(const Tensor<T>& x) const {
  return pool(x, nullptr);
}

template <typename T>
Tensor<T> MaxPool2d<T>::pool(const Tensor<T>& x, std::vector<std::uint32_t>* argmax) const {
  const int ho = output_size(x.h());
  const int wo = output_size(x.w());
  if (ho <= 0 || wo <= 0) throw InvalidArgument("MaxPool2d: input too small " + x.shape_string());
  Tensor<T> y(x.n(), x.c(), ho, wo);
  if (argmax) argmax->assign(y.size(), 0);
  std::size_t o = 0;
  for (int i = 0; i < x.n(); ++i) {
    for (int c = 0; c < x.c(); ++c) {
      const std::size_t base = (static_cast<std::size_t>(i) * x.c() + c) * x.plane();
      for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox, ++o) {
          T best = -std::numeric_limits<T>::infinity();
          std::size_t best_idx = base;
          for (int ky = 0; ky < k_; ++ky) {
            for (int kx = 0; kx < k_; ++kx) {
              const std::size_t idx =
                  base + static_cast<std::size_t>(oy * stride_ + ky) * x.w() + (ox * stride_ + kx);
              if (x[idx] > best) {
                best = x[idx];
                best_idx = idx;
              }
            }
          }
          y[o] = best;
          if (argmax) (*argmax)[o] = static_cast<std::uint32_t>(best_idx);
        }
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> MaxPool2d<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> dx(in_dims_[0], in_dims_[1], in_dims_[2], in_dims_[3]);
  for (std::size_t o = 0; o < grad_out.size(); ++o) dx[argmax_[o]] += grad_out[o];
  return dx;
}

template <typename T>
Tensor<T> GlobalAvgPool<T>::forward(const Tensor<T>& x, Mode) {
  in_dims_ = x.dims();
  return infer(x);
}

template <typename T>
Tensor<T> GlobalAvgPool<T>::infer(const Tensor<T>& x) const {
  Tensor<T> y(x.n(), x.c(), 1, 1);
  const std::size_t plane = x.plane();
  for (std::size_t p = 0; p < y.size(); ++p) {
    const T* src = x.data() + p * plane;
    double s = 0;
    for (std::size_t j = 0; j < plane; ++j) s += src[j];
    y[p] = static_cast<T>(s / static_cast<double>(plane));
  }
  return y;
}

template <typename T>
Tensor<T> GlobalAvgPool<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> dx(in_dims_[0], in_dims_[1], in_dims_[2], in_dims_[3]);
  const std::size_t plane = dx.plane();
  const T scale = T(1) / static_cast<T>(plane);
  for (std::size_t p = 0; p < grad_out.size(); ++p) {
    T* dst = dx.data() + p * plane;
    for (std::size_t j = 0; j < plane; ++j) dst[j] = grad_out[p] * scale;
  }
  return dx;
}

// ----------------------------------------------------------------- Linear

template <typename T>
Linear<T>::Linear(int in_features, int out_features, Rng& rng)
    : in_(in_features),
      out_(out_features),
      weight_{"weight", Tensor<T>(out_features, in_features, 1, 1), Tensor<T>(out_features, in_features, 1, 1)},
      bias_{"bias", Tensor<T>(out_features, 1, 1, 1), Tensor<T>(out_features, 1, 1, 1)} {
  he_normal(weight_.value, in_, rng);
}

template <typename T>
Tensor<T> Linear<T>::forward(const Tensor<T>& x, Mode) {
  input_ = x;
  return infer(x);
}

template <typename T>
Tensor<T> Linear<T>::infer(const Tensor<T>& x) const {
  if (static_cast<int>(x.sample_size()) != in_) {
    throw InvalidArgument("Linear: expected " + std::to_string(in_) + " features, got " + x.shape_string());
  }
  Tensor<T> y(x.n(), out_, 1, 1);
  ConstMapRM<T> xin(x.data(), x.n(), in_);
  ConstMapRM<T> w(weight_.value.data(), out_, in_);
  MapRM<T> out(y.data(), x.n(), out_);
  out.noalias() = xin * w.transpose();
  for (int i = 0; i < x.n(); ++i) {
    for (int o = 0; o < out_; ++o) out(i, o) += bias_.value[static_cast<std::size_t>(o)];
  }
  return y;
}

template <typename T>
Tensor<T> Linear<T>::backward(const Tensor<T>& grad_out) {
  const int n = input_.n();
  Tensor<T> dx = Tensor<T>::zeros_like(input_);
  ConstMapRM<T> g(grad_out.data(), n, out_);
  ConstMapRM<T> xin(input_.data(), n, in_);
  ConstMapRM<T> w(weight_.value.data(), out_, in_);
  MapRM<T>(weight_.grad.data(), out_, in_).noalias() += g.transpose() * xin;
  for (int o = 0; o < out_; ++o) bias_.grad[static_cast<std::size_t>(o)] += g.col(o).sum();
  MapRM<T>(dx.data(), n, in_).noalias() = g * w;
  return dx;
}

template <typename T>
std::vector<Parameter<T>*> Linear<T>::parameters() {
  return {&weight_, &bias_};
}

// ------------------------------------------------------------ RegionLayer

namespace {

inline int cell_edge(int i, int extent, int grid) { return i * extent / grid; }

template <typename T>
Tensor<T> gather_patch(const Tensor<T>& x, int y0, int y1, int x0, int x1) {
  Tensor<T> p(x.n(), x.c(), y1 - y0, x1 - x0);
  for (int i = 0; i < x.n(); ++i)
    for (int c = 0; c < x.c(); ++c)
      for (int y = y0; y < y1; ++y)
        for (int xx = x0; xx < x1; ++xx) p.at(i, c, y - y0, xx - x0) = x.at(i, c, y, xx);
  return p;
}

template <typename T>
void add_patch(Tensor<T>& dst, const Tensor<T>& p, int y0, int x0) {
  for (int i = 0; i < p.n(); ++i)
    for (int c = 0; c < p.c(); ++c)
      for (int y = 0; y < p.h(); ++y)
        for (int xx = 0; xx < p.w(); ++xx) dst.at(i, c, y + y0, xx + x0) += p.at(i, c, y, xx);
}

}  // namespace

template <typename T>
RegionLayer<T>::RegionLayer(int channels, int grid, Rng& rng) : channels_(channels), grid_(grid) {
  if (grid_ <= 0) throw InvalidArgument("RegionLayer: grid must be positive");
  cells_.reserve(static_cast<std::size_t>(grid_) * grid_);
  for (int r = 0; r < grid_; ++r) {
    for (int c = 0; c < grid_; ++c) {
      cells_.push_back(Cell{BatchNorm2d<T>(channels_), ReLU<T>(), Conv2d<T>(channels_, channels_, 3, 1, 1, true, rng)});
      auto& cell = cells_.back();
      const std::string prefix = "cell" + std::to_string(r) + "_" + std::to_string(c) + ".";
      cell.bn.add_name_prefix(prefix + "bn.");
      cell.conv.add_name_prefix(prefix + "conv.");
    }
  }
}

template <typename T>
Tensor<T> RegionLayer<T>::forward(const Tensor<T>& x, Mode mode) {
  if (x.c() != channels_) throw InvalidArgument("RegionLayer: channel mismatch " + x.shape_string());
  if (x.h() < grid_ || x.w() < grid_) {
    throw InvalidArgument("RegionLayer: feature map " + x.shape_string() + " smaller than the grid");
  }
  in_dims_ = x.dims();
  Tensor<T> y = x;
  for (int r = 0; r < grid_; ++r) {
    for (int c = 0; c < grid_; ++c) {
      auto& cell = cells_[static_cast<std::size_t>(r * grid_ + c)];
      const int y0 = cell_edge(r, x.h(), grid_), y1 = cell_edge(r + 1, x.h(), grid_);
      const int x0 = cell_edge(c, x.w(), grid_), x1 = cell_edge(c + 1, x.w(), grid_);
      Tensor<T> p = gather_patch(x, y0, y1, x0, x1);
      p = cell.conv.forward(cell.relu.forward(cell.bn.forward(p, mode), mode), mode);
      add_patch(y, p, y0, x0);
    }
  }
  return y;
}

template <typename T>
Tensor<T> RegionLayer<T>::infer(const Tensor<T>& x) const {
  if (x.c() != channels_) throw InvalidArgument("RegionLayer: channel mismatch " + x.shape_string());
  if (x.h() < grid_ || x.w() < grid_) {
    throw InvalidArgument("RegionLayer: feature map " + x.shape_string() + " smaller than the grid");
  }
  Tensor<T> y = x;
  for (int r = 0; r < grid_; ++r) {
    for (int c = 0; c < grid_; ++c) {
      const auto& cell = cells_[static_cast<std::size_t>(r * grid_ + c)];
      const int y0 = cell_edge(r, x.h(), grid_), y1 = cell_edge(r + 1, x.h(), grid_);
      const int x0 = cell_edge(c, x.w(), grid_), x1 = cell_edge(c + 1, x.w(), grid_);
      Tensor<T> p = gather_patch(x, y0, y1, x0, x1);
      add_patch(y, cell.conv.infer(cell.relu.infer(cell.bn.infer(p))), y0, x0);
    }
  }
  return y;
}

template <typename T>
Tensor<T> RegionLayer<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> dx = grad_out;
  const int h = in_dims_[2];
  const int w = in_dims_[3];
  for (int r = 0; r < grid_; ++r) {
    for (int c = 0; c < grid_; ++c) {
      auto& cell = cells_[static_cast<std::size_t>(r * grid_ + c)];
      const int y0 = cell_edge(r, h, grid_), y1 = cell_edge(r + 1, h, grid_);
      const int x0 = cell_edge(c, w, grid_), x1 = cell_edge(c + 1, w, grid_);
      Tensor<T> g = gather_patch(grad_out, y0, y1, x0, x1);
      g = cell.bn.backward(cell.relu.backward(cell.conv.backward(g)));
      add_patch(dx, g, y0, x0);
    }
  }
  return dx;
}

template <typename T>
std::vector<Parameter<T>*> RegionLayer<T>::parameters() {
  std::vector<Parameter<T>*> out;
  for (auto& cell : cells_) {
    for (auto* p : cell.bn.parameters()) out.push_back(p);
    for (auto* p : cell.conv.parameters()) out.push_back(p);
  }
  return out;
}

template <typename T>
std::vector<Buffer<T>> RegionLayer<T>::buffers() {
  std::vector<Buffer<T>> out;
  for (auto& cell : cells_) {
    for (auto b : cell.bn.buffers()) out.push_back(b);
  }
  return out;
}

template <typename T>
void RegionLayer<T>::add_name_prefix(const std::string& prefix) {
  for (auto& cell : cells_) {
    cell.bn.add_name_prefix(prefix);
    cell.conv.add_name_prefix(prefix);
  }
}

template class Conv2d<float>;
template class Conv2d<double>;
template class BatchNorm2d<float>;
template class BatchNorm2d<double>;
template class ReLU<float>;
template class ReLU<double>;
template class LeakyReLU<float>;
template class LeakyReLU<double>;
template class MaxPool2d<float>;
template class MaxPool2d<double>;
template class GlobalAvgPool<float>;
template class GlobalAvgPool<double>;
template class Linear<float>;
template class Linear<double>;
template class RegionLayer<float>;
template class RegionLayer<double>;

}  // namespace equicascade::nn

#include "pdanet/autograd.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pdanet {

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) const {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  return n;
}

template <typename T>
Var<T> Tape<T>::leaf(Tensor<T> value) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->requires_grad = recording_;
  return n;
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, std::function<void(Node<T>&)> backward) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  if (recording_) {
    n->requires_grad = true;
    n->backward = std::move(backward);
    nodes_.push_back(n);
  }
  return n;
}

template <typename T>
void Tape<T>::backward(const Var<T>& root) {
  if (!recording_) throw std::logic_error("backward on a non-recording tape");
  if (root->value.size() != 1) throw std::invalid_argument("backward root must be a scalar");
  root->grad_buffer().fill(T(1));
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node<T>& node = **it;
    if (node.grad.empty() || !node.backward) continue;
    node.backward(node);
  }
}

template <typename T>
Conv2d<T>::Conv2d(std::string name, int in, int out, int kernel_size, int dilation_rate)
    : weight(name + ".weight", Shape{out, in, kernel_size * kernel_size}),
      bias(name + ".bias", Shape{out, 1, 1}),
      in_channels(in),
      out_channels(out),
      kernel(kernel_size),
      dilation(dilation_rate) {
  if (in < 1 || out < 1 || kernel_size < 1 || kernel_size % 2 == 0 || dilation_rate < 1) {
    throw std::invalid_argument("conv " + name + ": invalid geometry");
  }
}

template <typename T>
void Conv2d<T>::init(InitRng& rng) {
  const double bound = std::sqrt(6.0 / (static_cast<double>(in_channels) * kernel * kernel));
  for (auto& w : weight.value.values()) w = static_cast<T>(rng.uniform(-bound, bound));
  bias.value.fill(T(0));
}

template <typename T>
Linear<T>::Linear(std::string name, int in, int out)
    : weight(name + ".weight", Shape{out, in, 1}),
      bias(name + ".bias", Shape{out, 1, 1}),
      in_features(in),
      out_features(out) {
  if (in < 1 || out < 1) throw std::invalid_argument("linear " + name + ": invalid geometry");
}

template <typename T>
void Linear<T>::init(InitRng& rng) {
  const double bound = std::sqrt(3.0 / static_cast<double>(in_features));
  for (auto& w : weight.value.values()) w = static_cast<T>(rng.uniform(-bound, bound));
  bias.value.fill(T(0));
}

namespace ops {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using StridedMap = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using ConstStridedMap = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + to_string(a) + " vs " +
                                to_string(b));
  }
}

constexpr std::size_t kIm2colBudget = std::size_t{1} << 22;

int rows_per_chunk(int k_elems, int width, int height) {
  const std::size_t per_row = static_cast<std::size_t>(k_elems) * width;
  const std::size_t rows = std::max<std::size_t>(1, kIm2colBudget / std::max<std::size_t>(1, per_row));
  return static_cast<int>(std::min<std::size_t>(rows, static_cast<std::size_t>(height)));
}

// cols(k, p) for output rows [r0, r0 + nrows); zero outside the image.
template <typename T>
void im2col(const Tensor<T>& x, int kernel, int dilation, int r0, int nrows, RowMat<T>& cols) {
  const int C = x.channels(), H = x.height(), W = x.width();
  const int pad = dilation * (kernel - 1) / 2;
  cols.resize(static_cast<Eigen::Index>(C) * kernel * kernel, static_cast<Eigen::Index>(nrows) * W);
  for (int c = 0; c < C; ++c) {
    const T* src = x.channel(c);
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        T* dst = cols.row((c * kernel + ky) * kernel + kx).data();
        const int dy = ky * dilation - pad, dx = kx * dilation - pad;
        for (int r = 0; r < nrows; ++r) {
          const int sy = r0 + r + dy;
          T* out = dst + static_cast<std::size_t>(r) * W;
          if (sy < 0 || sy >= H) {
            std::fill(out, out + W, T(0));
            continue;
          }
          const T* row = src + static_cast<std::size_t>(sy) * W;
          for (int w = 0; w < W; ++w) {
            const int sx = w + dx;
            out[w] = (sx >= 0 && sx < W) ? row[sx] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const RowMat<T>& cols, int kernel, int dilation, int r0, int nrows, Tensor<T>& dx) {
  const int C = dx.channels(), H = dx.height(), W = dx.width();
  const int pad = dilation * (kernel - 1) / 2;
  for (int c = 0; c < C; ++c) {
    T* dst = dx.channel(c);
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        const T* src = cols.row((c * kernel + ky) * kernel + kx).data();
        const int dy = ky * dilation - pad, dxo = kx * dilation - pad;
        for (int r = 0; r < nrows; ++r) {
          const int sy = r0 + r + dy;
          if (sy < 0 || sy >= H) continue;
          const T* in = src + static_cast<std::size_t>(r) * W;
          T* row = dst + static_cast<std::size_t>(sy) * W;
          const int w_lo = std::max(0, -dxo), w_hi = std::min(W, W - dxo);
          for (int w = w_lo; w < w_hi; ++w) row[w + dxo] += in[w];
        }
      }
    }
  }
}

template <typename T>
T sigmoid_scalar(T v) {
  return T(1) / (T(1) + std::exp(-v));
}

}  // namespace

template <typename T>
Var<T> conv2d(Tape<T>& tape, const Var<T>& x, Conv2d<T>& conv) {
  const Tensor<T>& in = x->value;
  if (in.channels() != conv.in_channels) {
    throw std::invalid_argument(conv.weight.name + ": expected " + std::to_string(conv.in_channels) +
                                " input channels, got " + std::to_string(in.channels()));
  }
  const int H = in.height(), W = in.width();
  const Eigen::Index HW = static_cast<Eigen::Index>(H) * W;
  const int Cout = conv.out_channels;
  const int K = conv.in_channels * conv.kernel * conv.kernel;
  Tensor<T> out(Cout, H, W);
  Eigen::Map<const RowMat<T>> weight(conv.weight.value.data(), Cout, K);

  if (conv.kernel == 1) {
    Eigen::Map<const RowMat<T>> xm(in.data(), K, HW);
    Eigen::Map<RowMat<T>> ym(out.data(), Cout, HW);
    ym.noalias() = weight * xm;
  } else {
    RowMat<T> cols;
    const int step = rows_per_chunk(K, W, H);
    for (int r0 = 0; r0 < H; r0 += step) {
      const int nrows = std::min(step, H - r0);
      im2col(in, conv.kernel, conv.dilation, r0, nrows, cols);
      StridedMap<T> ym(out.data() + static_cast<std::size_t>(r0) * W, Cout,
                       static_cast<Eigen::Index>(nrows) * W, Eigen::OuterStride<>(HW));
      ym.noalias() = weight * cols;
    }
  }
  for (int c = 0; c < Cout; ++c) {
    const T b = conv.bias.value[c];
    T* p = out.channel(c);
    for (Eigen::Index i = 0; i < HW; ++i) p[i] += b;
  }

  Conv2d<T>* layer = &conv;
  return tape.record(std::move(out), [x, layer](Node<T>& self) {
    const Tensor<T>& in = x->value;
    const Tensor<T>& g = self.grad;
    const int H = in.height(), W = in.width();
    const Eigen::Index HW = static_cast<Eigen::Index>(H) * W;
    const int Cout = layer->out_channels;
    const int K = layer->in_channels * layer->kernel * layer->kernel;
    Eigen::Map<const RowMat<T>> weight(layer->weight.value.data(), Cout, K);
    Eigen::Map<RowMat<T>> dweight(layer->weight.grad.data(), Cout, K);

    for (int c = 0; c < Cout; ++c) {
      const T* p = g.channel(c);
      T acc = T(0);
      for (Eigen::Index i = 0; i < HW; ++i) acc += p[i];
      layer->bias.grad[c] += acc;
    }
    Tensor<T>* dx = x->requires_grad ? &x->grad_buffer() : nullptr;

    if (layer->kernel == 1) {
      Eigen::Map<const RowMat<T>> xm(in.data(), K, HW);
      Eigen::Map<const RowMat<T>> gm(g.data(), Cout, HW);
      dweight.noalias() += gm * xm.transpose();
      if (dx) {
        Eigen::Map<RowMat<T>> dxm(dx->data(), K, HW);
        dxm.noalias() += weight.transpose() * gm;
      }
      return;
    }
    RowMat<T> cols, dcols;
    const int step = rows_per_chunk(K, W, H);
    for (int r0 = 0; r0 < H; r0 += step) {
      const int nrows = std::min(step, H - r0);
      im2col(in, layer->kernel, layer->dilation, r0, nrows, cols);
      ConstStridedMap<T> gm(g.data() + static_cast<std::size_t>(r0) * W, Cout,
                            static_cast<Eigen::Index>(nrows) * W, Eigen::OuterStride<>(HW));
      dweight.noalias() += gm * cols.transpose();
      if (dx) {
        dcols.noalias() = weight.transpose() * gm;
        col2im_add(dcols, layer->kernel, layer->dilation, r0, nrows, *dx);
      }
    }
  });
}

template <typename T>
Var<T> linear(Tape<T>& tape, const Var<T>& x, Linear<T>& fc) {
  const Tensor<T>& in = x->value;
  if (static_cast<int>(in.size()) != fc.in_features) {
    throw std::invalid_argument(fc.weight.name + ": expected " + std::to_string(fc.in_features) +
                                " features, got " + std::to_string(in.size()));
  }
  Tensor<T> out(fc.out_features, 1, 1);
  for (int o = 0; o < fc.out_features; ++o) {
    T acc = fc.bias.value[o];
    const T* w = fc.weight.value.data() + static_cast<std::size_t>(o) * fc.in_features;
    for (int i = 0; i < fc.in_features; ++i) acc += w[i] * in[i];
    out[o] = acc;
  }
  Linear<T>* layer = &fc;
  return tape.record(std::move(out), [x, layer](Node<T>& self) {
    const Tensor<T>& in = x->value;
    const int nin = layer->in_features;
    Tensor<T>* dx = x->requires_grad ? &x->grad_buffer() : nullptr;
    for (int o = 0; o < layer->out_features; ++o) {
      const T g = self.grad[o];
      layer->bias.grad[o] += g;
      T* dw = layer->weight.grad.data() + static_cast<std::size_t>(o) * nin;
      const T* w = layer->weight.value.data() + static_cast<std::size_t>(o) * nin;
      for (int i = 0; i < nin; ++i) {
        dw[i] += g * in[i];
        if (dx) (*dx)[i] += g * w[i];
      }
    }
  });
}

template <typename T>
Var<T> relu(Tape<T>& tape, const Var<T>& x) {
  Tensor<T> out(x->value.shape());
  std::vector<std::uint8_t> keep;
  if (tape.decision_mode() == Tape<T>::Decisions::Free) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(x->value[i], T(0));
  } else {
    keep.resize(out.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      keep[i] = static_cast<std::uint8_t>(tape.decide(x->value[i] > T(0)));
      out[i] = keep[i] ? x->value[i] : T(0);
    }
  }
  return tape.record(std::move(out), [x, keep = std::move(keep)](Node<T>& self) {
    if (!x->requires_grad) return;
    Tensor<T>& dx = x->grad_buffer();
    for (std::size_t i = 0; i < dx.size(); ++i) {
      const bool pass = keep.empty() ? x->value[i] > T(0) : keep[i] != 0;
      if (pass) dx[i] += self.grad[i];
    }
  });
}

template <typename T>
Var<T> sigmoid(Tape<T>& tape, const Var<T>& x) {
  Tensor<T> out(x->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid_scalar(x->value[i]);
  return tape.record(std::move(out), [x](Node<T>& self) {
    if (!x->requires_grad) return;
    Tensor<T>& dx = x->grad_buffer();
    for (std::size_t i = 0; i < dx.size(); ++i) {
      const T s = self.value[i];
      dx[i] += self.grad[i] * s * (T(1) - s);
    }
  });
}

template <typename T>
Var<T> max_pool2(Tape<T>& tape, const Var<T>& x) {
  const Tensor<T>& in = x->value;
  const int C = in.channels(), OH = in.height() / 2, OW = in.width() / 2;
  if (OH < 1 || OW < 1) throw std::invalid_argument("max_pool2: input smaller than 2x2");
  Tensor<T> out(C, OH, OW);
  std::vector<std::uint32_t> argmax(out.size());
  std::size_t o = 0;
  for (int c = 0; c < C; ++c) {
    for (int h = 0; h < OH; ++h) {
      for (int w = 0; w < OW; ++w, ++o) {
        std::size_t best = (static_cast<std::size_t>(c) * in.height() + 2 * h) * in.width() + 2 * w;
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            const std::size_t idx =
                (static_cast<std::size_t>(c) * in.height() + 2 * h + dy) * in.width() + 2 * w + dx;
            if (in[idx] > in[best]) best = idx;
          }
        }
        best = tape.decide(static_cast<std::uint32_t>(best));
        out[o] = in[best];
        argmax[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return tape.record(std::move(out), [x, argmax = std::move(argmax)](Node<T>& self) {
    if (!x->requires_grad) return;
    Tensor<T>& dx = x->grad_buffer();
    for (std::size_t i = 0; i < argmax.size(); ++i) dx[argmax[i]] += self.grad[i];
  });
}

namespace {
struct Bin {
  int lo;
  int hi;
};

std::vector<Bin> adaptive_bins(int in, int out) {
  std::vector<Bin> bins(out);
  for (int i = 0; i < out; ++i) {
    const int lo = static_cast<int>((static_cast<long long>(i) * in) / out);
    const int hi = static_cast<int>(((static_cast<long long>(i) + 1) * in + out - 1) / out);
    bins[i] = {lo, hi};
  }
  return bins;
}
}  // namespace

template <typename T>
Var<T> adaptive_avg_pool(Tape<T>& tape, const Var<T>& x, int out_h, int out_w) {
  const Tensor<T>& in = x->value;
  if (out_h < 1 || out_w < 1 || out_h > in.height() || out_w > in.width()) {
    throw std::invalid_argument("adaptive_avg_pool: cannot pool " + to_string(in.shape()) + " to " +
                                std::to_string(out_h) + "x" + std::to_string(out_w));
  }
  const auto by = adaptive_bins(in.height(), out_h);
  const auto bx = adaptive_bins(in.width(), out_w);
  Tensor<T> out(in.channels(), out_h, out_w);
  for (int c = 0; c < in.channels(); ++c) {
    for (int i = 0; i < out_h; ++i) {
      for (int j = 0; j < out_w; ++j) {
        T acc = T(0);
        for (int h = by[i].lo; h < by[i].hi; ++h) {
          for (int w = bx[j].lo; w < bx[j].hi; ++w) acc += in(c, h, w);
        }
        out(c, i, j) = acc / static_cast<T>((by[i].hi - by[i].lo) * (bx[j].hi - bx[j].lo));
      }
    }
  }
  return tape.record(std::move(out), [x, by, bx](Node<T>& self) {
    if (!x->requires_grad) return;
    Tensor<T>& dx = x->grad_buffer();
    const Tensor<T>& g = self.grad;
    for (int c = 0; c < g.channels(); ++c) {
      for (int i = 0; i < g.height(); ++i) {
        for (int j = 0; j < g.width(); ++j) {
          const T share =
              g(c, i, j) / static_cast<T>((by[i].hi - by[i].lo) * (bx[j].hi - bx[j].lo));
          for (int h = by[i].lo; h < by[i].hi; ++h) {
            for (int w = bx[j].lo; w < bx[j].hi; ++w) dx(c, h, w) += share;
          }
        }
      }
    }
  });
}

namespace {
struct Tap {
  int i0;
  int i1;
  double frac;  // weight of i1
};

std::vector<Tap> bilinear_taps(int in, int out) {
  std::vector<Tap> taps(out);
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    int i0 = static_cast<int>(src);
    if (i0 > in - 1) i0 = in - 1;
    const int i1 = std::min(i0 + 1, in - 1);
    taps[o] = {i0, i1, src - i0};
  }
  return taps;
}
}  // namespace

template <typename T>
Var<T> upsample_bilinear(Tape<T>& tape, const Var<T>& x, int out_h, int out_w) {
  const Tensor<T>& in = x->value;
  if (out_h < 1 || out_w < 1) throw std::invalid_argument("upsample_bilinear: empty target");
  const auto ty = bilinear_taps(in.height(), out_h);
  const auto tx = bilinear_taps(in.width(), out_w);
  Tensor<T> out(in.channels(), out_h, out_w);
  for (int c = 0; c < in.channels(); ++c) {
    for (int i = 0; i < out_h; ++i) {
      const T fy = static_cast<T>(ty[i].frac);
      for (int j = 0; j < out_w; ++j) {
        const T fx = static_cast<T>(tx[j].frac);
        const T top = in(c, ty[i].i0, tx[j].i0) * (T(1) - fx) + in(c, ty[i].i0, tx[j].i1) * fx;
        const T bot = in(c, ty[i].i1, tx[j].i0) * (T(1) - fx) + in(c, ty[i].i1, tx[j].i1) * fx;
        out(c, i, j) = top * (T(1) - fy) + bot * fy;
      }
    }
  }
  return tape.record(std::move(out), [x, ty, tx](Node<T>& self) {
    if (!x->requires_grad) return;
    Tensor<T>& dx = x->grad_buffer();
    const Tensor<T>& g = self.grad;
    for (int c = 0; c < g.channels(); ++c) {
      for (int i = 0; i < g.height(); ++i) {
        const T fy = static_cast<T>(ty[i].frac);
        for (int j = 0; j < g.width(); ++j) {
          const T fx = static_cast<T>(tx[j].frac);
          const T v = g(c, i, j);
          dx(c, ty[i].i0, tx[j].i0) += v * (T(1) - fy) * (T(1) - fx);
          dx(c, ty[i].i0, tx[j].i1) += v * (T(1) - fy) * fx;
          dx(c, ty[i].i1, tx[j].i0) += v * fy * (T(1) - fx);
          dx(c, ty[i].i1, tx[j].i1) += v * fy * fx;
        }
      }
    }
  });
}

template <typename T>
Var<T> add(Tape<T>& tape, const Var<T>& a, const Var<T>& b) {
  require_same_shape(a->value.shape(), b->value.shape(), "add");
  Tensor<T> out = a->value;
  out.add(b->value);
  return tape.record(std::move(out), [a, b](Node<T>& self) {
    if (a->requires_grad) a->grad_buffer().add(self.grad);
    if (b->requires_grad) b->grad_buffer().add(self.grad);
  });
}

template <typename T>
Var<T> mul(Tape<T>& tape, const Var<T>& a, const Var<T>& b) {
  require_same_shape(a->value.shape(), b->value.shape(), "mul");
  Tensor<T> out(a->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] * b->value[i];
  return tape.record(std::move(out), [a, b](Node<T>& self) {
    if (a->requires_grad) {
      Tensor<T>& da = a->grad_buffer();
      for (std::size_t i = 0; i < da.size(); ++i) da[i] += self.grad[i] * b->value[i];
    }
    if (b->requires_grad) {
      Tensor<T>& db = b->grad_buffer();
      for (std::size_t i = 0; i < db.size(); ++i) db[i] += self.grad[i] * a->value[i];
    }
  });
}

template <typename T>
Var<T> mul_channel(Tape<T>& tape, const Var<T>& x, const Var<T>& gate) {
  const Shape s = x->value.shape();
  require_same_shape(gate->value.shape(), Shape{s.channels, 1, 1}, "mul_channel");
  Tensor<T> out(s);
  const std::size_t plane = s.plane();
  for (int c = 0; c < s.channels; ++c) {
    const T g = gate->value[c];
    const T* src = x->value.channel(c);
    T* dst = out.channel(c);
    for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i] * g;
  }
  return tape.record(std::move(out), [x, gate](Node<T>& self) {
    const Shape s = x->value.shape();
    const std::size_t plane = s.plane();
    Tensor<T>* dx = x->requires_grad ? &x->grad_buffer() : nullptr;
    Tensor<T>* dg = gate->requires_grad ? &gate->grad_buffer() : nullptr;
    for (int c = 0; c < s.channels; ++c) {
      const T g = gate->value[c];
      const T* up = self.grad.channel(c);
      const T* src = x->value.channel(c);
      T acc = T(0);
      if (dx) {
        T* d = dx->channel(c);
        for (std::size_t i = 0; i < plane; ++i) d[i] += up[i] * g;
      }
      if (dg) {
        for (std::size_t i = 0; i < plane; ++i) acc += up[i] * src[i];
        (*dg)[c] += acc;
      }
    }
  });
}

template <typename T>
Var<T> mul_spatial(Tape<T>& tape, const Var<T>& x, const Var<T>& gate) {
  const Shape s = x->value.shape();
  require_same_shape(gate->value.shape(), Shape{1, s.height, s.width}, "mul_spatial");
  Tensor<T> out(s);
  const std::size_t plane = s.plane();
  const T* gv = gate->value.data();
  for (int c = 0; c < s.channels; ++c) {
    const T* src = x->value.channel(c);
    T* dst = out.channel(c);
    for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i] * gv[i];
  }
  return tape.record(std::move(out), [x, gate](Node<T>& self) {
    const Shape s = x->value.shape();
    const std::size_t plane = s.plane();
    const T* gv = gate->value.data();
    Tensor<T>* dx = x->requires_grad ? &x->grad_buffer() : nullptr;
    Tensor<T>* dg = gate->requires_grad ? &gate->grad_buffer() : nullptr;
    for (int c = 0; c < s.channels; ++c) {
      const T* up = self.grad.channel(c);
      const T* src = x->value.channel(c);
      if (dx) {
        T* d = dx->channel(c);
        for (std::size_t i = 0; i < plane; ++i) d[i] += up[i] * gv[i];
      }
      if (dg) {
        T* d = dg->data();
        for (std::size_t i = 0; i < plane; ++i) d[i] += up[i] * src[i];
      }
    }
  });
}

template <typename T>
Var<T> maximum(Tape<T>& tape, const Var<T>& a, const Var<T>& b) {
  require_same_shape(a->value.shape(), b->value.shape(), "maximum");
  Tensor<T> out(a->value.shape());
  std::vector<std::uint8_t> pick_a;
  if (tape.decision_mode() == Tape<T>::Decisions::Free) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(a->value[i], b->value[i]);
  } else {
    pick_a.resize(out.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      pick_a[i] = static_cast<std::uint8_t>(tape.decide(a->value[i] >= b->value[i]));
      out[i] = pick_a[i] ? a->value[i] : b->value[i];
    }
  }
  return tape.record(std::move(out), [a, b, pick_a = std::move(pick_a)](Node<T>& self) {
    Tensor<T>* da = a->requires_grad ? &a->grad_buffer() : nullptr;
    Tensor<T>* db = b->requires_grad ? &b->grad_buffer() : nullptr;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const bool to_a = pick_a.empty() ? a->value[i] >= b->value[i] : pick_a[i] != 0;
      if (to_a) {
        if (da) (*da)[i] += self.grad[i];
      } else if (db) {
        (*db)[i] += self.grad[i];
      }
    }
  });
}

template <typename T>
Var<T> concat_channels(Tape<T>& tape, const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_channels: no inputs");
  const int H = parts.front()->value.height(), W = parts.front()->value.width();
  int C = 0;
  for (const auto& p : parts) {
    if (p->value.height() != H || p->value.width() != W) {
      throw std::invalid_argument("concat_channels: spatial mismatch " +
                                  to_string(parts.front()->value.shape()) + " vs " +
                                  to_string(p->value.shape()));
    }
    C += p->value.channels();
  }
  Tensor<T> out(C, H, W);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    std::copy(p->value.data(), p->value.data() + p->value.size(), out.data() + offset);
    offset += p->value.size();
  }
  return tape.record(std::move(out), [parts](Node<T>& self) {
    std::size_t offset = 0;
    for (const auto& p : parts) {
      if (p->requires_grad) {
        Tensor<T>& d = p->grad_buffer();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[offset + i];
      }
      offset += p->value.size();
    }
  });
}

template <typename T>
Var<T> scale(Tape<T>& tape, const Var<T>& x, T factor) {
  Tensor<T> out(x->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x->value[i] * factor;
  return tape.record(std::move(out), [x, factor](Node<T>& self) {
    if (!x->requires_grad) return;
    Tensor<T>& dx = x->grad_buffer();
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += self.grad[i] * factor;
  });
}

template <typename T>
Var<T> mse(Tape<T>& tape, const Var<T>& pred, const Tensor<T>& target) {
  require_same_shape(pred->value.shape(), target.shape(), "mse");
  const std::size_t n = target.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(pred->value[i]) - static_cast<double>(target[i]);
    acc += d * d;
  }
  Tensor<T> out(1, 1, 1, static_cast<T>(acc / static_cast<double>(n)));
  return tape.record(std::move(out), [pred, target](Node<T>& self) {
    if (!pred->requires_grad) return;
    Tensor<T>& d = pred->grad_buffer();
    const T k = self.grad[0] * T(2) / static_cast<T>(target.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += k * (pred->value[i] - target[i]);
  });
}

template <typename T>
Var<T> bce(Tape<T>& tape, const Var<T>& prob, int label) {
  if (prob->value.size() != 1) throw std::invalid_argument("bce: probability must be scalar");
  if (label != 0 && label != 1) throw std::invalid_argument("bce: label must be 0 or 1");
  constexpr double lo = 1e-7, hi = 1.0 - 1e-7;
  const double p = static_cast<double>(prob->value[0]);
  const std::uint32_t side = tape.decide(p < lo ? 1 : (p > hi ? 2 : 0));
  const double pc = side == 1 ? lo : (side == 2 ? hi : p);
  const double loss = label == 1 ? -std::log(pc) : -std::log(1.0 - pc);
  const bool clipped = side != 0;
  return tape.record(Tensor<T>(1, 1, 1, static_cast<T>(loss)), [prob, label, pc, clipped](Node<T>& self) {
    if (!prob->requires_grad || clipped) return;
    const double g = label == 1 ? -1.0 / pc : 1.0 / (1.0 - pc);
    prob->grad_buffer()[0] += self.grad[0] * static_cast<T>(g);
  });
}

#define PDANET_INSTANTIATE_OPS(T)                                                         \
  template Var<T> conv2d(Tape<T>&, const Var<T>&, Conv2d<T>&);                            \
  template Var<T> linear(Tape<T>&, const Var<T>&, Linear<T>&);                            \
  template Var<T> relu(Tape<T>&, const Var<T>&);                                          \
  template Var<T> sigmoid(Tape<T>&, const Var<T>&);                                       \
  template Var<T> max_pool2(Tape<T>&, const Var<T>&);                                     \
  template Var<T> adaptive_avg_pool(Tape<T>&, const Var<T>&, int, int);                   \
  template Var<T> upsample_bilinear(Tape<T>&, const Var<T>&, int, int);                   \
  template Var<T> add(Tape<T>&, const Var<T>&, const Var<T>&);                            \
  template Var<T> mul(Tape<T>&, const Var<T>&, const Var<T>&);                            \
  template Var<T> mul_channel(Tape<T>&, const Var<T>&, const Var<T>&);                    \
  template Var<T> mul_spatial(Tape<T>&, const Var<T>&, const Var<T>&);                    \
  template Var<T> maximum(Tape<T>&, const Var<T>&, const Var<T>&);                        \
  template Var<T> concat_channels(Tape<T>&, const std::vector<Var<T>>&);                  \
  template Var<T> scale(Tape<T>&, const Var<T>&, T);                                      \
  template Var<T> mse(Tape<T>&, const Var<T>&, const Tensor<T>&);                         \
  template Var<T> bce(Tape<T>&, const Var<T>&, int);

PDANET_INSTANTIATE_OPS(float)
PDANET_INSTANTIATE_OPS(double)
#undef PDANET_INSTANTIATE_OPS

}  // namespace ops

template class Tape<float>;
template class Tape<double>;
template struct Conv2d<float>;
template struct Conv2d<double>;
template struct Linear<float>;
template struct Linear<double>;

}  // namespace pdanet

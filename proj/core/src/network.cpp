#include "bpseg/network.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <random>

#include "bpseg/rng.hpp"

namespace bpseg {

namespace {

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.1;

std::atomic<std::uint64_t> g_forward_passes{0};

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapR = Eigen::Map<MatR<T>>;
template <typename T>
using CMapR = Eigen::Map<const MatR<T>>;
template <typename T>
using StridedR = Eigen::Map<MatR<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using CStridedR = Eigen::Map<const MatR<T>, 0, Eigen::OuterStride<>>;

std::string level_name(const char* prefix, int level) { return std::string(prefix) + std::to_string(level); }

}  // namespace

void NetworkConfig::validate() const {
  if (depth < 2) fail(ErrorCode::kInvalidConfig, "depth must be >= 2");
  if (depth > 8) fail(ErrorCode::kInvalidConfig, "depth must be <= 8");
  if (base_channels < 1) fail(ErrorCode::kInvalidConfig, "base_channels must be >= 1");
  if (in_channels < 1 || out_channels < 1) fail(ErrorCode::kInvalidConfig, "channel counts must be >= 1");
  if (attention_reduction < 1) fail(ErrorCode::kInvalidConfig, "attention_reduction must be >= 1");
}

void NetworkConfig::check_input(int height, int width) const {
  const int step = 1 << (depth - 1);
  if (height <= 0 || width <= 0 || height % step != 0 || width % step != 0) {
    fail(ErrorCode::kShapeMismatch, "input " + std::to_string(width) + "x" + std::to_string(height) +
                                        " must be divisible by " + std::to_string(step));
  }
}

int NetworkConfig::gate_width(int level) const noexcept { return std::max(1, channels(level) / attention_reduction); }

template <typename T>
std::size_t ModelParams<T>::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].name == name) return i;
  }
  fail(ErrorCode::kInvalidArgument, "no parameter named " + name);
}

template <typename T>
std::size_t ModelParams<T>::trainable_count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : entries) n += p.trainable ? p.numel() : 0;
  return n;
}

template <typename T>
void ModelParams<T>::zero_grad() noexcept {
  for (auto& p : entries) std::fill(p.grad.begin(), p.grad.end(), T{});
}

template <typename T>
bool ModelParams<T>::all_finite() const noexcept {
  for (const auto& p : entries) {
    for (T v : p.value) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

template <typename T>
bool ModelParams<T>::operator==(const ModelParams& o) const {
  if (!(config == o.config) || entries.size() != o.entries.size()) return false;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& a = entries[i];
    const auto& b = o.entries[i];
    if (a.name != b.name || a.shape != b.shape || a.trainable != b.trainable || a.value != b.value) return false;
  }
  return true;
}

namespace {

template <typename T>
struct ParamBuilder {
  ModelParams<T>& params;
  Rng rng;

  void add(const std::string& name, std::vector<int> shape, int fan_in, bool trainable = true, T fill = T{}) {
    Parameter<T> p;
    p.name = name;
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    p.shape = std::move(shape);
    p.trainable = trainable;
    p.value.assign(n, fill);
    if (fan_in > 0) {
      const double bound = std::sqrt(6.0 / fan_in);
      for (auto& v : p.value) {
        const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        v = static_cast<T>(bound * (2.0 * u - 1.0));
      }
    }
    p.grad.assign(n, T{});
    params.entries.push_back(std::move(p));
  }

  void conv_bn(const std::string& prefix, int cin, int cout) {
    add(prefix + ".weight", {cout, cin, 3, 3}, cin * 9);
  }

  void bn(const std::string& prefix, int c) {
    add(prefix + ".gamma", {c}, 0, true, T(1));
    add(prefix + ".beta", {c}, 0, true, T(0));
    add(prefix + ".running_mean", {c}, 0, false, T(0));
    add(prefix + ".running_var", {c}, 0, false, T(1));
  }
};

}  // namespace

template <typename T>
ModelParams<T> build_model(const NetworkConfig& cfg) {
  cfg.validate();
  ModelParams<T> params;
  params.config = cfg;
  ParamBuilder<T> b{params, Rng(cfg.seed)};
  for (int l = 0; l < cfg.depth; ++l) {
    const std::string p = level_name("enc", l);
    const int cin = l == 0 ? cfg.in_channels : cfg.channels(l - 1);
    b.conv_bn(p + ".conv1", cin, cfg.channels(l));
    b.bn(p + ".bn1", cfg.channels(l));
    b.conv_bn(p + ".conv2", cfg.channels(l), cfg.channels(l));
    b.bn(p + ".bn2", cfg.channels(l));
  }
  for (int l = cfg.depth - 2; l >= 0; --l) {
    const std::string p = level_name("dec", l);
    const int c = cfg.channels(l);
    const int f = cfg.gate_width(l);
    b.add(p + ".up.weight", {cfg.channels(l + 1), c, 2, 2}, cfg.channels(l + 1));
    b.add(p + ".up.bias", {c}, 0);
    b.add(p + ".gate.wx", {f, c}, c);
    b.add(p + ".gate.wg", {f, c}, c);
    b.add(p + ".gate.bias", {f}, 0);
    b.add(p + ".gate.psi", {1, f}, f);
    b.add(p + ".gate.psi_bias", {1}, 0);
    b.conv_bn(p + ".conv1", 2 * c, c);
    b.bn(p + ".bn1", c);
    b.conv_bn(p + ".conv2", c, c);
    b.bn(p + ".bn2", c);
  }
  b.add("head.weight", {cfg.out_channels, cfg.channels(0)}, cfg.channels(0));
  b.add("head.bias", {cfg.out_channels}, 0);
  return params;
}

std::size_t trainable_parameter_count(const NetworkConfig& cfg) {
  cfg.validate();
  std::size_t total = 0;
  for (int l = 0; l < cfg.depth; ++l) {
    const std::size_t c = static_cast<std::size_t>(cfg.channels(l));
    const std::size_t cin = l == 0 ? static_cast<std::size_t>(cfg.in_channels) : c / 2;
    total += 9 * cin * c + 9 * c * c + 4 * c;
  }
  for (int l = 0; l + 1 < cfg.depth; ++l) {
    const std::size_t c = static_cast<std::size_t>(cfg.channels(l));
    const std::size_t f = static_cast<std::size_t>(cfg.gate_width(l));
    total += 4 * (2 * c) * c + c;        // transposed conv
    total += 2 * f * c + f + f + 1;      // gate
    total += 9 * 2 * c * c + 9 * c * c + 4 * c;
  }
  total += static_cast<std::size_t>(cfg.out_channels) * static_cast<std::size_t>(cfg.channels(0) + 1);
  return total;
}

// ---------------------------------------------------------------------------
// Layer kernels. All operate on one image at a time with row-major planes.

namespace {

// Rows [y0, y1) of the 3x3 patch matrix: (c * 9) x ((y1 - y0) * w).
template <typename T>
void im2col3x3(const T* in, int c, int h, int w, int y0, int y1, T* col) {
  const std::size_t hw = static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  const std::size_t cols = static_cast<std::size_t>(y1 - y0) * static_cast<std::size_t>(w);
  for (int ci = 0; ci < c; ++ci) {
    const T* plane = in + static_cast<std::size_t>(ci) * hw;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        T* row = col + (static_cast<std::size_t>(ci) * 9 + static_cast<std::size_t>(ky * 3 + kx)) * cols;
        const int dx = kx - 1;
        const int x0 = std::max(0, -dx);
        const int x1 = std::min(w, w - dx);
        for (int y = y0; y < y1; ++y) {
          T* dst = row + static_cast<std::size_t>(y - y0) * static_cast<std::size_t>(w);
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= h) {
            std::fill(dst, dst + w, T{});
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(sy) * static_cast<std::size_t>(w);
          std::fill(dst, dst + x0, T{});
          std::copy(src + x0 + dx, src + x1 + dx, dst + x0);
          std::fill(dst + x1, dst + w, T{});
        }
      }
    }
  }
}

template <typename T>
void col2im3x3_add(const T* col, int c, int h, int w, int y0, int y1, T* in) {
  const std::size_t hw = static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  const std::size_t cols = static_cast<std::size_t>(y1 - y0) * static_cast<std::size_t>(w);
  for (int ci = 0; ci < c; ++ci) {
    T* plane = in + static_cast<std::size_t>(ci) * hw;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const T* row = col + (static_cast<std::size_t>(ci) * 9 + static_cast<std::size_t>(ky * 3 + kx)) * cols;
        const int dx = kx - 1;
        const int x0 = std::max(0, -dx);
        const int x1 = std::min(w, w - dx);
        for (int y = y0; y < y1; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= h) continue;
          const T* src = row + static_cast<std::size_t>(y - y0) * static_cast<std::size_t>(w);
          T* dst = plane + static_cast<std::size_t>(sy) * static_cast<std::size_t>(w);
          for (int x = x0; x < x1; ++x) dst[x + dx] += src[x];
        }
      }
    }
  }
}

// Rows per im2col strip; keeps the patch panel cache resident.
int strip_rows(int h, int w) { return std::clamp(2048 / std::max(1, w), 1, h); }

template <typename T>
T sigmoid(T v) {
  if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
  const T e = std::exp(v);
  return e / (T(1) + e);
}

// q = ReLU(Wx x + Wg g + b), alpha = sigmoid(psi q + psi_b), gated = alpha x.
template <typename T>
void gate_forward_image(const T* x, const T* g, int c, std::size_t hw, const GateWeights<T>& wt, T* q, T* alpha,
                        T* gated) {
  const auto n = static_cast<Eigen::Index>(hw);
  CMapR<T> xm(x, c, n);
  CMapR<T> gm(g, c, n);
  MapR<T> qm(q, wt.inner, n);
  CMapR<T> wx(wt.wx, wt.inner, c);
  CMapR<T> wg(wt.wg, wt.inner, c);
  qm.noalias() = wx * xm;
  qm.noalias() += wg * gm;
  for (int f = 0; f < wt.inner; ++f) {
    T* row = q + static_cast<std::size_t>(f) * hw;
    const T b = wt.bias[f];
    for (std::size_t p = 0; p < hw; ++p) row[p] = std::max(T(0), row[p] + b);
  }
  Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> am(alpha, n);
  Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> psi(wt.psi, wt.inner);
  am.noalias() = psi * qm;
  for (std::size_t p = 0; p < hw; ++p) alpha[p] = sigmoid(alpha[p] + wt.psi_bias);
  for (int ch = 0; ch < c; ++ch) {
    const T* xs = x + static_cast<std::size_t>(ch) * hw;
    T* out = gated + static_cast<std::size_t>(ch) * hw;
    for (std::size_t p = 0; p < hw; ++p) out[p] = xs[p] * alpha[p];
  }
}

template <typename T>
void check_finite(const Tensor<T>& t, const char* what) {
  for (T v : t.data) {
    if (!std::isfinite(v)) fail(ErrorCode::kNonFiniteActivation, std::string("non-finite value in ") + what);
  }
}

}  // namespace

template <typename T>
GateOutput<T> attention_gate(const Tensor<T>& x, const Tensor<T>& g, const GateWeights<T>& weights) {
  if (!x.same_shape(g)) fail(ErrorCode::kShapeMismatch, "gate inputs differ in shape");
  if (x.c != weights.channels) fail(ErrorCode::kShapeMismatch, "gate channel count mismatch");
  GateOutput<T> out;
  out.gated.reset(x.n, x.c, x.h, x.w);
  out.alpha.reset(x.n, 1, x.h, x.w);
  std::vector<T> q(static_cast<std::size_t>(weights.inner) * x.plane());
  for (int i = 0; i < x.n; ++i) {
    gate_forward_image(x.image(i), g.image(i), x.c, x.plane(), weights, q.data(), out.alpha.image(i),
                       out.gated.image(i));
  }
  return out;
}

// ---------------------------------------------------------------------------

template <typename T>
struct Network<T>::Impl {
  ModelParams<T>* params;
  const NetworkConfig cfg;
  Mode mode = Mode::kInference;
  bool has_forward = false;
  std::vector<T> col;
  std::vector<T> dcol;

  explicit Impl(ModelParams<T>* p) : params(p), cfg(p->config) {}

  T* value(std::size_t idx) { return params->entries[idx].value.data(); }
  T* grad(std::size_t idx) { return params->entries[idx].grad.data(); }

  void ensure_scratch(std::size_t n) {
    if (col.size() < n) col.resize(n);
    if (dcol.size() < n) dcol.resize(n);
  }

  // conv3x3 (no bias) -> batch norm -> ReLU.
  struct Unit {
    int cin = 0;
    int cout = 0;
    std::size_t w = 0, gamma = 0, beta = 0, rmean = 0, rvar = 0;
    const Tensor<T>* input = nullptr;
    Tensor<T> conv;
    Tensor<T> out;
    std::vector<double> mean;
    std::vector<double> invstd;
  };

  struct Encoder {
    Unit a, b;
    Tensor<T> pooled;
    std::vector<std::int32_t> pool_index;
    Tensor<T> d_out, d_mid, d_in;
  };

  struct Decoder {
    int c = 0;
    int inner = 0;
    std::size_t up_w = 0, up_b = 0, wx = 0, wg = 0, gbias = 0, psi = 0, psi_b = 0;
    const Tensor<T>* below = nullptr;
    Tensor<T> up, q, alpha, gated, concat;
    Unit a, b;
    Tensor<T> d_out, d_mid, d_concat, d_gated, d_up, d_skip;
  };

  std::vector<Encoder> enc;
  std::vector<Decoder> dec;
  std::size_t head_w = 0, head_b = 0;
  const Tensor<T>* head_input = nullptr;
  Tensor<T> logits;
  Tensor<T> d_head_in;
  Tensor<T> d_bottom;

  void bind_unit(Unit& u, const std::string& conv, const std::string& bn, int cin, int cout) {
    u.cin = cin;
    u.cout = cout;
    u.w = params->index_of(conv + ".weight");
    u.gamma = params->index_of(bn + ".gamma");
    u.beta = params->index_of(bn + ".beta");
    u.rmean = params->index_of(bn + ".running_mean");
    u.rvar = params->index_of(bn + ".running_var");
  }

  void bind() {
    cfg.validate();
    enc.resize(static_cast<std::size_t>(cfg.depth));
    dec.resize(static_cast<std::size_t>(cfg.depth - 1));
    for (int l = 0; l < cfg.depth; ++l) {
      const std::string p = level_name("enc", l);
      const int cin = l == 0 ? cfg.in_channels : cfg.channels(l - 1);
      auto& e = enc[static_cast<std::size_t>(l)];
      bind_unit(e.a, p + ".conv1", p + ".bn1", cin, cfg.channels(l));
      bind_unit(e.b, p + ".conv2", p + ".bn2", cfg.channels(l), cfg.channels(l));
    }
    for (int l = 0; l + 1 < cfg.depth; ++l) {
      const std::string p = level_name("dec", l);
      auto& d = dec[static_cast<std::size_t>(l)];
      d.c = cfg.channels(l);
      d.inner = cfg.gate_width(l);
      d.up_w = params->index_of(p + ".up.weight");
      d.up_b = params->index_of(p + ".up.bias");
      d.wx = params->index_of(p + ".gate.wx");
      d.wg = params->index_of(p + ".gate.wg");
      d.gbias = params->index_of(p + ".gate.bias");
      d.psi = params->index_of(p + ".gate.psi");
      d.psi_b = params->index_of(p + ".gate.psi_bias");
      bind_unit(d.a, p + ".conv1", p + ".bn1", 2 * d.c, d.c);
      bind_unit(d.b, p + ".conv2", p + ".bn2", d.c, d.c);
    }
    head_w = params->index_of("head.weight");
    head_b = params->index_of("head.bias");
  }

  // -- conv/bn/relu unit -----------------------------------------------------

  void unit_forward(Unit& u, const Tensor<T>& in) {
    u.input = &in;
    const int n = in.n, h = in.h, w = in.w;
    const std::size_t hw = in.plane();
    u.conv.ensure(n, u.cout, h, w);
    u.out.ensure(n, u.cout, h, w);
    const int strip = strip_rows(h, w);
    ensure_scratch(static_cast<std::size_t>(u.cin) * 9 * static_cast<std::size_t>(strip * w));
    CMapR<T> wm(value(u.w), u.cout, u.cin * 9);
    for (int i = 0; i < n; ++i) {
      for (int y0 = 0; y0 < h; y0 += strip) {
        const int y1 = std::min(h, y0 + strip);
        const Eigen::Index cols = static_cast<Eigen::Index>(y1 - y0) * w;
        im2col3x3(in.image(i), u.cin, h, w, y0, y1, col.data());
        CMapR<T> cm(col.data(), u.cin * 9, cols);
        StridedR<T> om(u.conv.image(i) + static_cast<std::size_t>(y0) * static_cast<std::size_t>(w), u.cout, cols,
                       Eigen::OuterStride<>(static_cast<Eigen::Index>(hw)));
        om.noalias() = wm * cm;
      }
    }

    u.mean.assign(static_cast<std::size_t>(u.cout), 0.0);
    u.invstd.assign(static_cast<std::size_t>(u.cout), 0.0);
    const T* gamma = value(u.gamma);
    const T* beta = value(u.beta);
    T* rmean = value(u.rmean);
    T* rvar = value(u.rvar);
    const double count = static_cast<double>(n) * static_cast<double>(hw);
    for (int ch = 0; ch < u.cout; ++ch) {
      double mean;
      double var;
      if (mode == Mode::kTrain) {
        double s = 0.0;
        for (int i = 0; i < n; ++i) {
          const T* p = u.conv.channel(i, ch);
          for (std::size_t k = 0; k < hw; ++k) s += p[k];
        }
        mean = s / count;
        double ss = 0.0;
        for (int i = 0; i < n; ++i) {
          const T* p = u.conv.channel(i, ch);
          for (std::size_t k = 0; k < hw; ++k) {
            const double d = p[k] - mean;
            ss += d * d;
          }
        }
        var = ss / count;
        const double unbiased = count > 1 ? ss / (count - 1) : var;
        rmean[ch] = static_cast<T>((1.0 - kBnMomentum) * rmean[ch] + kBnMomentum * mean);
        rvar[ch] = static_cast<T>((1.0 - kBnMomentum) * rvar[ch] + kBnMomentum * unbiased);
      } else {
        mean = rmean[ch];
        var = rvar[ch];
      }
      const double invstd = 1.0 / std::sqrt(var + kBnEps);
      u.mean[static_cast<std::size_t>(ch)] = mean;
      u.invstd[static_cast<std::size_t>(ch)] = invstd;
      const T scale = static_cast<T>(gamma[ch] * invstd);
      const T shift = static_cast<T>(beta[ch] - gamma[ch] * invstd * mean);
      for (int i = 0; i < n; ++i) {
        const T* p = u.conv.channel(i, ch);
        T* o = u.out.channel(i, ch);
        for (std::size_t k = 0; k < hw; ++k) o[k] = std::max(T(0), p[k] * scale + shift);
      }
    }
  }

  // dout is consumed. din may be null when the input gradient is not needed.
  void unit_backward(Unit& u, Tensor<T>& dout, Tensor<T>* din) {
    const Tensor<T>& in = *u.input;
    const int n = in.n, h = in.h, w = in.w;
    const std::size_t hw = in.plane();
    const T* gamma = value(u.gamma);
    T* dgamma = grad(u.gamma);
    T* dbeta = grad(u.beta);
    const double count = static_cast<double>(n) * static_cast<double>(hw);

    for (int ch = 0; ch < u.cout; ++ch) {
      const double mean = u.mean[static_cast<std::size_t>(ch)];
      const double invstd = u.invstd[static_cast<std::size_t>(ch)];
      double sum_dy = 0.0;
      double sum_dy_xhat = 0.0;
      for (int i = 0; i < n; ++i) {
        T* d = dout.channel(i, ch);
        const T* o = u.out.channel(i, ch);
        const T* x = u.conv.channel(i, ch);
        for (std::size_t k = 0; k < hw; ++k) {
          if (!(o[k] > T(0))) d[k] = T(0);
          sum_dy += d[k];
          sum_dy_xhat += d[k] * (x[k] - mean) * invstd;
        }
      }
      dgamma[ch] += static_cast<T>(sum_dy_xhat);
      dbeta[ch] += static_cast<T>(sum_dy);
      const double g = gamma[ch];
      for (int i = 0; i < n; ++i) {
        T* d = dout.channel(i, ch);
        const T* x = u.conv.channel(i, ch);
        if (mode == Mode::kTrain) {
          for (std::size_t k = 0; k < hw; ++k) {
            const double xhat = (x[k] - mean) * invstd;
            d[k] = static_cast<T>(g * invstd / count * (count * d[k] - sum_dy - xhat * sum_dy_xhat));
          }
        } else {
          for (std::size_t k = 0; k < hw; ++k) d[k] = static_cast<T>(d[k] * g * invstd);
        }
      }
    }

    const int strip = strip_rows(h, w);
    ensure_scratch(static_cast<std::size_t>(u.cin) * 9 * static_cast<std::size_t>(strip * w));
    CMapR<T> wm(value(u.w), u.cout, u.cin * 9);
    MapR<T> dwm(grad(u.w), u.cout, u.cin * 9);
    if (din != nullptr) din->reset(n, u.cin, h, w);
    for (int i = 0; i < n; ++i) {
      for (int y0 = 0; y0 < h; y0 += strip) {
        const int y1 = std::min(h, y0 + strip);
        const Eigen::Index cols = static_cast<Eigen::Index>(y1 - y0) * w;
        im2col3x3(in.image(i), u.cin, h, w, y0, y1, col.data());
        CMapR<T> cm(col.data(), u.cin * 9, cols);
        CStridedR<T> dm(dout.image(i) + static_cast<std::size_t>(y0) * static_cast<std::size_t>(w), u.cout, cols,
                        Eigen::OuterStride<>(static_cast<Eigen::Index>(hw)));
        dwm.noalias() += dm * cm.transpose();
        if (din != nullptr) {
          MapR<T> dcm(dcol.data(), u.cin * 9, cols);
          dcm.noalias() = wm.transpose() * dm;
          col2im3x3_add(dcol.data(), u.cin, h, w, y0, y1, din->image(i));
        }
      }
    }
  }

  // -- pooling ---------------------------------------------------------------

  static void pool_forward(const Tensor<T>& in, Tensor<T>& out, std::vector<std::int32_t>& index) {
    const int oh = in.h / 2, ow = in.w / 2;
    out.ensure(in.n, in.c, oh, ow);
    index.resize(out.size());
    std::size_t o = 0;
    for (int i = 0; i < in.n; ++i) {
      for (int ch = 0; ch < in.c; ++ch) {
        const T* p = in.channel(i, ch);
        for (int y = 0; y < oh; ++y) {
          for (int x = 0; x < ow; ++x, ++o) {
            const std::int32_t base = (2 * y) * in.w + 2 * x;
            std::int32_t best = base;
            for (std::int32_t cand : {base + 1, base + in.w, base + in.w + 1}) {
              if (p[cand] > p[best]) best = cand;
            }
            index[o] = best;
            out.data[o] = p[best];
          }
        }
      }
    }
  }

  static void pool_backward_add(const Tensor<T>& dout, const std::vector<std::int32_t>& index, Tensor<T>& din) {
    std::size_t o = 0;
    for (int i = 0; i < dout.n; ++i) {
      for (int ch = 0; ch < dout.c; ++ch) {
        T* p = din.channel(i, ch);
        for (std::size_t k = 0; k < dout.plane(); ++k, ++o) p[index[o]] += dout.data[o];
      }
    }
  }

  // -- decoder pieces -------------------------------------------------------

  void up_forward(Decoder& d, const Tensor<T>& below) {
    d.below = &below;
    const int cin = below.c, cout = d.c;
    const int ih = below.h, iw = below.w, oh = 2 * ih, ow = 2 * iw;
    const std::size_t ihw = below.plane();
    d.up.ensure(below.n, cout, oh, ow);
    ensure_scratch(static_cast<std::size_t>(cout) * 4 * ihw);
    CMapR<T> wm(value(d.up_w), cin, cout * 4);
    const T* bias = value(d.up_b);
    for (int i = 0; i < below.n; ++i) {
      CMapR<T> xm(below.image(i), cin, static_cast<Eigen::Index>(ihw));
      MapR<T> ym(col.data(), cout * 4, static_cast<Eigen::Index>(ihw));
      ym.noalias() = wm.transpose() * xm;
      for (int co = 0; co < cout; ++co) {
        T* out = d.up.channel(i, co);
        for (int k = 0; k < 4; ++k) {
          const int dy = k / 2, dx = k % 2;
          const T* row = col.data() + (static_cast<std::size_t>(co) * 4 + static_cast<std::size_t>(k)) * ihw;
          for (int y = 0; y < ih; ++y) {
            for (int x = 0; x < iw; ++x) {
              out[(2 * y + dy) * ow + 2 * x + dx] = row[y * iw + x] + bias[co];
            }
          }
        }
      }
    }
  }

  void up_backward(Decoder& d, const Tensor<T>& dup, Tensor<T>& dbelow) {
    const Tensor<T>& below = *d.below;
    const int cin = below.c, cout = d.c;
    const int ih = below.h, iw = below.w, ow = 2 * iw;
    const std::size_t ihw = below.plane();
    dbelow.reset(below.n, cin, ih, iw);
    ensure_scratch(static_cast<std::size_t>(cout) * 4 * ihw);
    CMapR<T> wm(value(d.up_w), cin, cout * 4);
    MapR<T> dwm(grad(d.up_w), cin, cout * 4);
    T* dbias = grad(d.up_b);
    for (int i = 0; i < below.n; ++i) {
      for (int co = 0; co < cout; ++co) {
        const T* g = dup.channel(i, co);
        double bsum = 0.0;
        for (int k = 0; k < 4; ++k) {
          const int dy = k / 2, dx = k % 2;
          T* row = col.data() + (static_cast<std::size_t>(co) * 4 + static_cast<std::size_t>(k)) * ihw;
          for (int y = 0; y < ih; ++y) {
            for (int x = 0; x < iw; ++x) {
              const T v = g[(2 * y + dy) * ow + 2 * x + dx];
              row[y * iw + x] = v;
              bsum += v;
            }
          }
        }
        dbias[co] += static_cast<T>(bsum);
      }
      CMapR<T> dym(col.data(), cout * 4, static_cast<Eigen::Index>(ihw));
      CMapR<T> xm(below.image(i), cin, static_cast<Eigen::Index>(ihw));
      dwm.noalias() += xm * dym.transpose();
      MapR<T> dxm(dbelow.image(i), cin, static_cast<Eigen::Index>(ihw));
      dxm.noalias() = wm * dym;
    }
  }

  GateWeights<T> gate_weights(const Decoder& d) {
    GateWeights<T> g;
    g.channels = d.c;
    g.inner = d.inner;
    g.wx = value(d.wx);
    g.wg = value(d.wg);
    g.bias = value(d.gbias);
    g.psi = value(d.psi);
    g.psi_bias = value(d.psi_b)[0];
    return g;
  }

  void gate_forward(Decoder& d, const Tensor<T>& skip) {
    const GateWeights<T> gw = gate_weights(d);
    d.q.ensure(skip.n, d.inner, skip.h, skip.w);
    d.alpha.ensure(skip.n, 1, skip.h, skip.w);
    d.gated.ensure(skip.n, skip.c, skip.h, skip.w);
    for (int i = 0; i < skip.n; ++i) {
      gate_forward_image(skip.image(i), d.up.image(i), d.c, skip.plane(), gw, d.q.image(i), d.alpha.image(i),
                         d.gated.image(i));
    }
  }

  // Adds the gate's contribution to d.d_up; writes d.d_skip.
  void gate_backward(Decoder& d, const Tensor<T>& skip) {
    const std::size_t hw = skip.plane();
    const auto n = static_cast<Eigen::Index>(hw);
    const int c = d.c, f = d.inner;
    d.d_skip.reset(skip.n, c, skip.h, skip.w);
    CMapR<T> wx(value(d.wx), f, c);
    CMapR<T> wg(value(d.wg), f, c);
    MapR<T> dwx(grad(d.wx), f, c);
    MapR<T> dwg(grad(d.wg), f, c);
    T* dgb = grad(d.gbias);
    T* dpsi = grad(d.psi);
    T* dpsib = grad(d.psi_b);
    const T* psi = value(d.psi);
    std::vector<T> da(hw);
    ensure_scratch(static_cast<std::size_t>(f) * hw);
    for (int i = 0; i < skip.n; ++i) {
      const T* x = skip.image(i);
      const T* alpha = d.alpha.image(i);
      const T* dg = d.d_gated.image(i);
      T* dx = d.d_skip.image(i);
      std::fill(da.begin(), da.end(), T{});
      for (int ch = 0; ch < c; ++ch) {
        const std::size_t off = static_cast<std::size_t>(ch) * hw;
        for (std::size_t p = 0; p < hw; ++p) {
          da[p] += dg[off + p] * x[off + p];
          dx[off + p] = dg[off + p] * alpha[p];
        }
      }
      double dpb = 0.0;
      for (std::size_t p = 0; p < hw; ++p) {
        da[p] *= alpha[p] * (T(1) - alpha[p]);
        dpb += da[p];
      }
      dpsib[0] += static_cast<T>(dpb);
      const T* q = d.q.image(i);
      T* dq = col.data();
      for (int k = 0; k < f; ++k) {
        const T* qr = q + static_cast<std::size_t>(k) * hw;
        T* dqr = dq + static_cast<std::size_t>(k) * hw;
        double acc = 0.0;
        double bacc = 0.0;
        for (std::size_t p = 0; p < hw; ++p) {
          acc += da[p] * qr[p];
          dqr[p] = qr[p] > T(0) ? psi[k] * da[p] : T(0);
          bacc += dqr[p];
        }
        dpsi[k] += static_cast<T>(acc);
        dgb[k] += static_cast<T>(bacc);
      }
      CMapR<T> dqm(dq, f, n);
      CMapR<T> xm(x, c, n);
      CMapR<T> gm(d.up.image(i), c, n);
      dwx.noalias() += dqm * xm.transpose();
      dwg.noalias() += dqm * gm.transpose();
      MapR<T> dxm(dx, c, n);
      dxm.noalias() += wx.transpose() * dqm;
      MapR<T> dupm(d.d_up.image(i), c, n);
      dupm.noalias() += wg.transpose() * dqm;
    }
  }

  static void concat(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>& out) {
    out.ensure(a.n, a.c + b.c, a.h, a.w);
    for (int i = 0; i < a.n; ++i) {
      std::copy(a.image(i), a.image(i) + a.image_stride(), out.image(i));
      std::copy(b.image(i), b.image(i) + b.image_stride(), out.image(i) + a.image_stride());
    }
  }

  static void split(const Tensor<T>& in, Tensor<T>& a, Tensor<T>& b, int ca) {
    a.reset(in.n, ca, in.h, in.w);
    b.reset(in.n, in.c - ca, in.h, in.w);
    for (int i = 0; i < in.n; ++i) {
      std::copy(in.image(i), in.image(i) + a.image_stride(), a.image(i));
      std::copy(in.image(i) + a.image_stride(), in.image(i) + in.image_stride(), b.image(i));
    }
  }

  // -- whole network --------------------------------------------------------

  const Tensor<T>& forward(const Tensor<T>& input) {
    if (input.c != cfg.in_channels) fail(ErrorCode::kShapeMismatch, "input channel count mismatch");
    if (input.n < 1) fail(ErrorCode::kShapeMismatch, "empty batch");
    cfg.check_input(input.h, input.w);
    const Tensor<T>* cur = &input;
    for (int l = 0; l < cfg.depth; ++l) {
      auto& e = enc[static_cast<std::size_t>(l)];
      unit_forward(e.a, *cur);
      unit_forward(e.b, e.a.out);
      if (l + 1 < cfg.depth) {
        pool_forward(e.b.out, e.pooled, e.pool_index);
        cur = &e.pooled;
      } else {
        cur = &e.b.out;
      }
    }
    for (int l = cfg.depth - 2; l >= 0; --l) {
      auto& d = dec[static_cast<std::size_t>(l)];
      const Tensor<T>& skip = enc[static_cast<std::size_t>(l)].b.out;
      up_forward(d, *cur);
      gate_forward(d, skip);
      concat(d.gated, d.up, d.concat);
      unit_forward(d.a, d.concat);
      unit_forward(d.b, d.a.out);
      cur = &d.b.out;
    }
    head_input = cur;
    const int oc = cfg.out_channels;
    logits.ensure(cur->n, oc, cur->h, cur->w);
    CMapR<T> hw(value(head_w), oc, cur->c);
    const T* hb = value(head_b);
    for (int i = 0; i < cur->n; ++i) {
      CMapR<T> xm(cur->image(i), cur->c, static_cast<Eigen::Index>(cur->plane()));
      MapR<T> ym(logits.image(i), oc, static_cast<Eigen::Index>(cur->plane()));
      ym.noalias() = hw * xm;
      for (int o = 0; o < oc; ++o) {
        T* p = logits.channel(i, o);
        for (std::size_t k = 0; k < cur->plane(); ++k) p[k] += hb[o];
      }
    }
    check_finite(logits, "network logits");
    has_forward = true;
    return logits;
  }

  void backward(const Tensor<T>& grad_logits) {
    if (!has_forward) fail(ErrorCode::kInvalidArgument, "backward() before forward()");
    if (!grad_logits.same_shape(logits)) fail(ErrorCode::kShapeMismatch, "gradient shape differs from logits");
    const Tensor<T>& x = *head_input;
    const int oc = cfg.out_channels;
    const auto hw = static_cast<Eigen::Index>(x.plane());
    CMapR<T> hwm(value(head_w), oc, x.c);
    MapR<T> dhw(grad(head_w), oc, x.c);
    T* dhb = grad(head_b);
    d_head_in.reset(x.n, x.c, x.h, x.w);
    for (int i = 0; i < x.n; ++i) {
      CMapR<T> gm(grad_logits.image(i), oc, hw);
      CMapR<T> xm(x.image(i), x.c, hw);
      dhw.noalias() += gm * xm.transpose();
      // Plain loop: Eigen reductions peel by address, which breaks run-to-run reproducibility.
      for (int o = 0; o < oc; ++o) {
        const T* g = grad_logits.channel(i, o);
        double s = 0.0;
        for (Eigen::Index k = 0; k < hw; ++k) s += g[k];
        dhb[o] += static_cast<T>(s);
      }
      MapR<T> dxm(d_head_in.image(i), x.c, hw);
      dxm.noalias() = hwm.transpose() * gm;
    }

    Tensor<T>* dcur = &d_head_in;
    for (int l = 0; l + 1 < cfg.depth; ++l) {
      auto& d = dec[static_cast<std::size_t>(l)];
      const Tensor<T>& skip = enc[static_cast<std::size_t>(l)].b.out;
      if (dcur != &d.d_out) d.d_out = std::move(*dcur);
      unit_backward(d.b, d.d_out, &d.d_mid);
      unit_backward(d.a, d.d_mid, &d.d_concat);
      split(d.d_concat, d.d_gated, d.d_up, d.c);
      gate_backward(d, skip);
      Tensor<T>& target = (l + 2 < cfg.depth) ? dec[static_cast<std::size_t>(l + 1)].d_out : d_bottom;
      up_backward(d, d.d_up, target);
      dcur = &target;
    }

    for (int l = cfg.depth - 1; l >= 0; --l) {
      auto& e = enc[static_cast<std::size_t>(l)];
      if (l == cfg.depth - 1) {
        e.d_out = std::move(d_bottom);
      } else {
        e.d_out = dec[static_cast<std::size_t>(l)].d_skip;
        pool_backward_add(enc[static_cast<std::size_t>(l + 1)].d_in, e.pool_index, e.d_out);
      }
      unit_backward(e.b, e.d_out, &e.d_mid);
      unit_backward(e.a, e.d_mid, l == 0 ? nullptr : &e.d_in);
    }
  }
};

template <typename T>
Network<T>::Network(ModelParams<T>& params) : params_(&params), impl_(std::make_unique<Impl>(&params)) {
  impl_->bind();
}

template <typename T>
Network<T>::~Network() = default;

template <typename T>
const Tensor<T>& Network<T>::forward(const Tensor<T>& input, Mode mode) {
  impl_->mode = mode;
  g_forward_passes.fetch_add(1, std::memory_order_relaxed);
  return impl_->forward(input);
}

template <typename T>
void Network<T>::backward(const Tensor<T>& grad_logits) {
  impl_->backward(grad_logits);
}

template <typename T>
const Tensor<T>& Network<T>::attention(int level) const {
  if (level < 0 || level + 1 >= impl_->cfg.depth) fail(ErrorCode::kInvalidArgument, "no decoder level " + std::to_string(level));
  return impl_->dec[static_cast<std::size_t>(level)].alpha;
}

template <typename T>
Tensor<T> forward(const ModelParams<T>& params, const Tensor<T>& input, Mode mode) {
  if (mode == Mode::kTrain) {
    // Batch-statistics mode updates running statistics; work on a copy.
    ModelParams<T> copy = params;
    Network<T> net(copy);
    return net.forward(input, mode);
  }
  // Inference reads parameters only.
  Network<T> net(const_cast<ModelParams<T>&>(params));
  return net.forward(input, mode);
}

std::uint64_t forward_pass_count() noexcept { return g_forward_passes.load(std::memory_order_relaxed); }

template class ModelParams<float>;
template class ModelParams<double>;
template ModelParams<float> build_model<float>(const NetworkConfig&);
template ModelParams<double> build_model<double>(const NetworkConfig&);
template GateOutput<float> attention_gate<float>(const Tensor<float>&, const Tensor<float>&, const GateWeights<float>&);
template GateOutput<double> attention_gate<double>(const Tensor<double>&, const Tensor<double>&,
                                                   const GateWeights<double>&);
template class Network<float>;
template class Network<double>;
template Tensor<float> forward<float>(const ModelParams<float>&, const Tensor<float>&, Mode);
template Tensor<double> forward<double>(const ModelParams<double>&, const Tensor<double>&, Mode);

}  // namespace bpseg

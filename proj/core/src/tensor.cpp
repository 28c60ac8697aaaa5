#include "stlstm/tensor.hpp"

#include <cmath>
#include <sstream>

namespace stlstm {

namespace {

std::size_t shape_product(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus_scalar(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

thread_local Tape* g_active_tape = nullptr;

void require_defined(const Tensor& t, const char* who) {
  if (!t.defined()) throw ContractError(std::string(who) + ": empty tensor");
}

void require_same_shape(const char* who, const Tensor& a, const Tensor& b) {
  require_defined(a, who);
  require_defined(b, who);
  if (a.shape() != b.shape())
    throw DimensionError(std::string(who) + ": shape mismatch " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

}  // namespace

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

// ---- Tensor -----------------------------------------------------------------

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_product(shape) != data.size())
    throw DimensionError("from_data: " + std::to_string(data.size()) +
                         " values do not fill shape " + shape_str(shape));
  auto n = std::make_shared<detail::TensorNode>();
  n->shape = std::move(shape);
  n->value = std::move(data);
  n->requires_grad = requires_grad;
  if (requires_grad) n->grad.assign(n->value.size(), 0.0);
  return Tensor(std::move(n));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const auto sz = shape_product(shape);
  return from_data(std::move(shape), std::vector<double>(sz, 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
  const auto sz = shape_product(shape);
  return from_data(std::move(shape), std::vector<double>(sz, v), requires_grad);
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return from_data(Shape{}, {v}, requires_grad);
}

const Shape& Tensor::shape() const {
  require_defined(*this, "shape");
  return d_->shape;
}

std::size_t Tensor::size() const {
  require_defined(*this, "size");
  return d_->value.size();
}

std::size_t Tensor::dim(std::size_t i) const {
  const auto& s = shape();
  if (i >= s.size())
    throw DimensionError("dim " + std::to_string(i) + " out of range for " + shape_str(s));
  return s[i];
}

double Tensor::item() const {
  if (size() != 1)
    throw ContractError("item: tensor of shape " + shape_str(shape()) + " is not a scalar");
  return d_->value[0];
}

double Tensor::at(std::size_t i) const {
  if (rank() != 1) throw DimensionError("at(i): tensor is " + shape_str(shape()));
  return d_->value[i];
}

double Tensor::at(std::size_t i, std::size_t j) const {
  if (rank() != 2) throw DimensionError("at(i,j): tensor is " + shape_str(shape()));
  return d_->value[i * d_->shape[1] + j];
}

double Tensor::at(std::size_t i, std::size_t j, std::size_t k) const {
  if (rank() != 3) throw DimensionError("at(i,j,k): tensor is " + shape_str(shape()));
  return d_->value[(i * d_->shape[1] + j) * d_->shape[2] + k];
}

std::span<const double> Tensor::data() const {
  require_defined(*this, "data");
  return {d_->value.data(), d_->value.size()};
}

std::span<double> Tensor::mutable_data() {
  require_defined(*this, "mutable_data");
  return {d_->value.data(), d_->value.size()};
}

bool Tensor::requires_grad() const { return d_ && d_->requires_grad; }

std::span<const double> Tensor::grad() const {
  require_defined(*this, "grad");
  if (!d_->requires_grad) throw ContractError("grad: tensor does not require gradients");
  return {d_->grad.data(), d_->grad.size()};
}

void Tensor::zero_grad() {
  require_defined(*this, "zero_grad");
  if (!d_->requires_grad) throw ContractError("zero_grad: tensor does not require gradients");
  std::fill(d_->grad.begin(), d_->grad.end(), 0.0);
}

bool Tensor::all_finite() const {
  require_defined(*this, "all_finite");
  for (double v : d_->value)
    if (!std::isfinite(v)) return false;
  return true;
}

void Tensor::check_finite(const std::string& what) const {
  require_defined(*this, "check_finite");
  for (std::size_t i = 0; i < d_->value.size(); ++i)
    if (!std::isfinite(d_->value[i]))
      throw NumericalError(what + ": non-finite value at flat index " + std::to_string(i));
}

Tensor Tensor::detach() const {
  require_defined(*this, "detach");
  return from_data(d_->shape, d_->value);
}

// ---- Tape -------------------------------------------------------------------

Tape::Tape() : prev_(g_active_tape) { g_active_tape = this; }

Tape::~Tape() { g_active_tape = prev_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::record(const std::shared_ptr<detail::TensorNode>& n) {
  n->tape = this;
  n->index = nodes_.size();
  nodes_.push_back(n);
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw ContractError("backward: loss must be a scalar, got " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("<empty>")));
  detail::TensorNode* node = loss.node();
  if (node->tape != this)
    throw ContractError("backward: loss is not connected to this tape");
  node->grad[0] += 1.0;
  for (std::size_t i = node->index + 1; i-- > 0;) {
    if (nodes_[i]->backprop) nodes_[i]->backprop();
  }
}

// Shared tail of every primitive: if a tape is active and any input carries
// gradients, promote the output to a differentiable node and record it.
void record_op(Tensor& out, const std::vector<Tensor>& inputs, std::function<void()> back) {
  Tape* tape = Tape::active();
  if (!tape) return;
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return;
  auto& on = out.d_;
  on->requires_grad = true;
  on->grad.assign(on->value.size(), 0.0);
  on->parents.reserve(inputs.size());
  for (const auto& in : inputs) on->parents.push_back(in.node_ptr());
  on->backprop = std::move(back);
  tape->record(on);
}

// ---- elementwise ------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<double> v(a.size());
  const auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = av[i] + bv[i];
  Tensor out = Tensor::from_data(a.shape(), std::move(v));
  auto *an = a.node(), *bn = b.node(), *on = out.node();
  record_op(out, {a, b}, [an, bn, on] {
    const auto& g = on->grad;
    if (an->requires_grad)
      for (std::size_t i = 0; i < g.size(); ++i) an->grad[i] += g[i];
    if (bn->requires_grad)
      for (std::size_t i = 0; i < g.size(); ++i) bn->grad[i] += g[i];
  });
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  std::vector<double> v(a.size());
  const auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = av[i] - bv[i];
  Tensor out = Tensor::from_data(a.shape(), std::move(v));
  auto *an = a.node(), *bn = b.node(), *on = out.node();
  record_op(out, {a, b}, [an, bn, on] {
    const auto& g = on->grad;
    if (an->requires_grad)
      for (std::size_t i = 0; i < g.size(); ++i) an->grad[i] += g[i];
    if (bn->requires_grad)
      for (std::size_t i = 0; i < g.size(); ++i) bn->grad[i] -= g[i];
  });
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<double> v(a.size());
  const auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = av[i] * bv[i];
  Tensor out = Tensor::from_data(a.shape(), std::move(v));
  auto *an = a.node(), *bn = b.node(), *on = out.node();
  record_op(out, {a, b}, [an, bn, on] {
    const auto& g = on->grad;
    if (an->requires_grad)
      for (std::size_t i = 0; i < g.size(); ++i) an->grad[i] += g[i] * bn->value[i];
    if (bn->requires_grad)
      for (std::size_t i = 0; i < g.size(); ++i) bn->grad[i] += g[i] * an->value[i];
  });
  return out;
}

Tensor scale(const Tensor& a, double c) {
  require_defined(a, "scale");
  std::vector<double> v(a.size());
  const auto av = a.data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = av[i] * c;
  Tensor out = Tensor::from_data(a.shape(), std::move(v));
  auto *an = a.node(), *on = out.node();
  record_op(out, {a}, [an, on, c] {
    for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += c * on->grad[i];
  });
  return out;
}

// ---- activations ------------------------------------------------------------

Tensor relu(const Tensor& x) {
  require_defined(x, "relu");
  std::vector<double> v(x.size());
  const auto xv = x.data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  Tensor out = Tensor::from_data(x.shape(), std::move(v));
  auto *xn = x.node(), *on = out.node();
  record_op(out, {x}, [xn, on] {
    for (std::size_t i = 0; i < on->grad.size(); ++i)
      if (xn->value[i] > 0.0) xn->grad[i] += on->grad[i];
  });
  return out;
}

Tensor sigmoid(const Tensor& x) {
  require_defined(x, "sigmoid");
  std::vector<double> v(x.size());
  const auto xv = x.data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = sigmoid_scalar(xv[i]);
  Tensor out = Tensor::from_data(x.shape(), std::move(v));
  auto *xn = x.node(), *on = out.node();
  record_op(out, {x}, [xn, on] {
    for (std::size_t i = 0; i < on->grad.size(); ++i) {
      const double s = on->value[i];
      xn->grad[i] += on->grad[i] * s * (1.0 - s);
    }
  });
  return out;
}

Tensor tanh(const Tensor& x) {
  require_defined(x, "tanh");
  std::vector<double> v(x.size());
  const auto xv = x.data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::tanh(xv[i]);
  Tensor out = Tensor::from_data(x.shape(), std::move(v));
  auto *xn = x.node(), *on = out.node();
  record_op(out, {x}, [xn, on] {
    for (std::size_t i = 0; i < on->grad.size(); ++i) {
      const double t = on->value[i];
      xn->grad[i] += on->grad[i] * (1.0 - t * t);
    }
  });
  return out;
}

Tensor prelu(const Tensor& x, const Tensor& slope) {
  require_defined(x, "prelu");
  require_defined(slope, "prelu");
  if (slope.size() != 1)
    throw DimensionError("prelu: slope must be a scalar, got " + shape_str(slope.shape()));
  const double a = slope.data()[0];
  std::vector<double> v(x.size());
  const auto xv = x.data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = xv[i] > 0.0 ? xv[i] : a * xv[i];
  Tensor out = Tensor::from_data(x.shape(), std::move(v));
  auto *xn = x.node(), *sn = slope.node(), *on = out.node();
  record_op(out, {x, slope}, [xn, sn, on, a] {
    for (std::size_t i = 0; i < on->grad.size(); ++i) {
      const double g = on->grad[i];
      const double xi = xn->value[i];
      if (xn->requires_grad) xn->grad[i] += g * (xi > 0.0 ? 1.0 : a);
      if (sn->requires_grad && xi <= 0.0) sn->grad[0] += g * xi;
    }
  });
  return out;
}

Tensor activate(const Tensor& x, Activation kind, const Tensor* slope) {
  switch (kind) {
    case Activation::kRelu:
      return relu(x);
    case Activation::kSigmoid:
      return sigmoid(x);
    case Activation::kTanh:
      return tanh(x);
    case Activation::kPrelu:
      if (!slope) throw ContractError("activate: prelu requires a slope tensor");
      return prelu(x, *slope);
    case Activation::kLinear:
      return x;
  }
  throw ContractError("activate: unknown activation kind");
}

// ---- linear algebra -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) +
                         " x " + shape_str(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> v(m * n, 0.0);
  const auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      for (std::size_t j = 0; j < n; ++j) v[i * n + j] += aip * bv[p * n + j];
    }
  Tensor out = Tensor::from_data({m, n}, std::move(v));
  auto *an = a.node(), *bn = b.node(), *on = out.node();
  record_op(out, {a, b}, [an, bn, on, m, k, n] {
    const auto& g = on->grad;
    if (an->requires_grad) {
      // dA = dC . B^T
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * bn->value[p * n + j];
          an->grad[i * k + p] += acc;
        }
    }
    if (bn->requires_grad) {
      // dB = A^T . dC
      for (std::size_t p = 0; p < k; ++p)
        for (std::size_t j = 0; j < n; ++j) {
          double acc = 0.0;
          for (std::size_t i = 0; i < m; ++i) acc += an->value[i * k + p] * g[i * n + j];
          bn->grad[p * n + j] += acc;
        }
    }
  });
  return out;
}

Tensor transpose(const Tensor& a) {
  require_defined(a, "transpose");
  if (a.rank() != 2) throw DimensionError("transpose: need rank 2, got " + shape_str(a.shape()));
  const std::size_t r = a.dim(0), c = a.dim(1);
  std::vector<double> v(r * c);
  const auto av = a.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) v[j * r + i] = av[i * c + j];
  Tensor out = Tensor::from_data({c, r}, std::move(v));
  auto *an = a.node(), *on = out.node();
  record_op(out, {a}, [an, on, r, c] {
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) an->grad[i * c + j] += on->grad[j * r + i];
  });
  return out;
}

Tensor add_rows(const Tensor& m, const Tensor& v) {
  require_defined(m, "add_rows");
  require_defined(v, "add_rows");
  if (m.rank() != 2 || v.rank() != 1 || m.dim(1) != v.dim(0))
    throw DimensionError("add_rows: incompatible shapes " + shape_str(m.shape()) +
                         " + " + shape_str(v.shape()));
  const std::size_t r = m.dim(0), c = m.dim(1);
  std::vector<double> out_v(r * c);
  const auto mv = m.data(), vv = v.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out_v[i * c + j] = mv[i * c + j] + vv[j];
  Tensor out = Tensor::from_data({r, c}, std::move(out_v));
  auto *mn = m.node(), *vn = v.node(), *on = out.node();
  record_op(out, {m, v}, [mn, vn, on, r, c] {
    if (mn->requires_grad)
      for (std::size_t i = 0; i < r * c; ++i) mn->grad[i] += on->grad[i];
    if (vn->requires_grad)
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) vn->grad[j] += on->grad[i * c + j];
  });
  return out;
}

// ---- causal convolution -------------------------------------------------------

Tensor conv1d_causal(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
  require_defined(x, "conv1d_causal");
  require_defined(kernel, "conv1d_causal");
  require_defined(bias, "conv1d_causal");
  if (x.rank() != 2 || kernel.rank() != 3)
    throw DimensionError("conv1d_causal: need x [C_in x T] and kernel [C_out x C_in x K], got " +
                         shape_str(x.shape()) + " and " + shape_str(kernel.shape()));
  const std::size_t c_in = x.dim(0), t_len = x.dim(1);
  const std::size_t c_out = kernel.dim(0), k_len = kernel.dim(2);
  if (kernel.dim(1) != c_in)
    throw DimensionError("conv1d_causal: channel mismatch, x " + shape_str(x.shape()) +
                         " vs kernel " + shape_str(kernel.shape()));
  if (bias.rank() != 1 || bias.dim(0) != c_out)
    throw DimensionError("conv1d_causal: bias " + shape_str(bias.shape()) +
                         " vs kernel " + shape_str(kernel.shape()));
  if (k_len < 1) throw ContractError("conv1d_causal: kernel size must be >= 1");

  std::vector<double> v(c_out * t_len);
  const auto xv = x.data(), kv = kernel.data(), bv = bias.data();
  for (std::size_t co = 0; co < c_out; ++co)
    for (std::size_t t = 0; t < t_len; ++t) {
      double acc = bv[co];
      for (std::size_t ci = 0; ci < c_in; ++ci)
        for (std::size_t k = 0; k < k_len; ++k) {
          const std::ptrdiff_t tau =
              static_cast<std::ptrdiff_t>(t + k) - static_cast<std::ptrdiff_t>(k_len - 1);
          if (tau < 0) continue;
          acc += kv[(co * c_in + ci) * k_len + k] * xv[ci * t_len + tau];
        }
      v[co * t_len + t] = acc;
    }
  Tensor out = Tensor::from_data({c_out, t_len}, std::move(v));
  auto *xn = x.node(), *kn = kernel.node(), *bn = bias.node(), *on = out.node();
  record_op(out, {x, kernel, bias}, [xn, kn, bn, on, c_in, c_out, t_len, k_len] {
    for (std::size_t co = 0; co < c_out; ++co)
      for (std::size_t t = 0; t < t_len; ++t) {
        const double g = on->grad[co * t_len + t];
        if (g == 0.0) continue;
        if (bn->requires_grad) bn->grad[co] += g;
        for (std::size_t ci = 0; ci < c_in; ++ci)
          for (std::size_t k = 0; k < k_len; ++k) {
            const std::ptrdiff_t tau =
                static_cast<std::ptrdiff_t>(t + k) - static_cast<std::ptrdiff_t>(k_len - 1);
            if (tau < 0) continue;
            const std::size_t ki = (co * c_in + ci) * k_len + k;
            const std::size_t xi = ci * t_len + tau;
            if (kn->requires_grad) kn->grad[ki] += g * xn->value[xi];
            if (xn->requires_grad) xn->grad[xi] += g * kn->value[ki];
          }
      }
  });
  return out;
}

// ---- layer normalization --------------------------------------------------------

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  std::size_t axis, double eps) {
  require_defined(x, "layer_norm");
  require_defined(gain, "layer_norm");
  require_defined(bias, "layer_norm");
  if (x.rank() < 1 || x.rank() > 2 || axis >= x.rank())
    throw DimensionError("layer_norm: unsupported input " + shape_str(x.shape()) +
                         " with axis " + std::to_string(axis));
  const std::size_t c = x.dim(axis);
  if (gain.rank() != 1 || gain.dim(0) != c || bias.rank() != 1 || bias.dim(0) != c)
    throw DimensionError("layer_norm: gain " + shape_str(gain.shape()) + " / bias " +
                         shape_str(bias.shape()) + " do not match axis length " +
                         std::to_string(c));

  const std::size_t groups = x.size() / c;
  // Flat index of element i of group g along the normalized axis. Rank 1 and
  // rank-2/axis-1 groups are contiguous rows; rank-2/axis-0 groups are columns.
  const bool cols = (x.rank() == 2 && axis == 0);
  const std::size_t ncols = x.rank() == 2 ? x.dim(1) : 1;
  auto flat = [cols, ncols, c](std::size_t g, std::size_t i) -> std::size_t {
    return cols ? i * ncols + g : g * c + i;
  };

  std::vector<double> v(x.size());
  std::vector<double> xhat(x.size());
  std::vector<double> inv_std(groups);
  std::vector<char> live(groups);  // variance above eps -> denominator varies
  const auto xv = x.data();
  const auto gv = gain.data(), bv = bias.data();
  for (std::size_t g = 0; g < groups; ++g) {
    double mu = 0.0;
    for (std::size_t i = 0; i < c; ++i) mu += xv[flat(g, i)];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t i = 0; i < c; ++i) {
      const double d = xv[flat(g, i)] - mu;
      var += d * d;
    }
    var /= static_cast<double>(c);
    const bool is_live = var > eps;
    const double inv = 1.0 / std::sqrt(is_live ? var : eps);
    inv_std[g] = inv;
    live[g] = is_live ? 1 : 0;
    for (std::size_t i = 0; i < c; ++i) {
      const std::size_t fi = flat(g, i);
      const double xh = (xv[fi] - mu) * inv;
      xhat[fi] = xh;
      v[fi] = gv[i] * xh + bv[i];
    }
  }
  Tensor out = Tensor::from_data(x.shape(), std::move(v));
  auto *xn = x.node(), *gn = gain.node(), *bn = bias.node(), *on = out.node();
  record_op(out, {x, gain, bias},
            [xn, gn, bn, on, groups, c, flat, xhat = std::move(xhat),
             inv_std = std::move(inv_std), live = std::move(live)] {
    for (std::size_t g = 0; g < groups; ++g) {
      double sum_dxh = 0.0, sum_dxh_xh = 0.0;
      for (std::size_t i = 0; i < c; ++i) {
        const std::size_t fi = flat(g, i);
        const double dxh = on->grad[fi] * gn->value[i];
        sum_dxh += dxh;
        sum_dxh_xh += dxh * xhat[fi];
      }
      const double inv = inv_std[g];
      const double n = static_cast<double>(c);
      for (std::size_t i = 0; i < c; ++i) {
        const std::size_t fi = flat(g, i);
        const double dy = on->grad[fi];
        const double dxh = dy * gn->value[i];
        if (xn->requires_grad) {
          double dx = dxh - sum_dxh / n;
          if (live[g]) dx -= xhat[fi] * sum_dxh_xh / n;
          xn->grad[fi] += inv * dx;
        }
        if (gn->requires_grad) gn->grad[i] += dy * xhat[fi];
        if (bn->requires_grad) bn->grad[i] += dy;
      }
    }
  });
  return out;
}

// ---- structure --------------------------------------------------------------

Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis) {
  require_defined(a, "concat");
  require_defined(b, "concat");
  if (a.rank() != b.rank())
    throw DimensionError("concat: rank mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  if (a.rank() == 1) {
    if (axis != 0) throw DimensionError("concat: axis out of range for rank 1");
    std::vector<double> v;
    v.reserve(a.size() + b.size());
    v.insert(v.end(), a.data().begin(), a.data().end());
    v.insert(v.end(), b.data().begin(), b.data().end());
    Tensor out = Tensor::from_data({a.size() + b.size()}, std::move(v));
    auto *an = a.node(), *bn = b.node(), *on = out.node();
    const std::size_t na = a.size(), nb = b.size();
    record_op(out, {a, b}, [an, bn, on, na, nb] {
      if (an->requires_grad)
        for (std::size_t i = 0; i < na; ++i) an->grad[i] += on->grad[i];
      if (bn->requires_grad)
        for (std::size_t i = 0; i < nb; ++i) bn->grad[i] += on->grad[na + i];
    });
    return out;
  }
  if (a.rank() != 2 || axis > 1)
    throw DimensionError("concat: unsupported ranks " + shape_str(a.shape()) + ", " +
                         shape_str(b.shape()));
  const std::size_t ra = a.dim(0), ca = a.dim(1), rb = b.dim(0), cb = b.dim(1);
  if (axis == 0) {
    if (ca != cb)
      throw DimensionError("concat axis 0: column mismatch " + shape_str(a.shape()) +
                           " vs " + shape_str(b.shape()));
    std::vector<double> v;
    v.reserve(a.size() + b.size());
    v.insert(v.end(), a.data().begin(), a.data().end());
    v.insert(v.end(), b.data().begin(), b.data().end());
    Tensor out = Tensor::from_data({ra + rb, ca}, std::move(v));
    auto *an = a.node(), *bn = b.node(), *on = out.node();
    const std::size_t na = a.size(), nb = b.size();
    record_op(out, {a, b}, [an, bn, on, na, nb] {
      if (an->requires_grad)
        for (std::size_t i = 0; i < na; ++i) an->grad[i] += on->grad[i];
      if (bn->requires_grad)
        for (std::size_t i = 0; i < nb; ++i) bn->grad[i] += on->grad[na + i];
    });
    return out;
  }
  if (ra != rb)
    throw DimensionError("concat axis 1: row mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  std::vector<double> v(ra * (ca + cb));
  const auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < ra; ++i) {
    for (std::size_t j = 0; j < ca; ++j) v[i * (ca + cb) + j] = av[i * ca + j];
    for (std::size_t j = 0; j < cb; ++j) v[i * (ca + cb) + ca + j] = bv[i * cb + j];
  }
  Tensor out = Tensor::from_data({ra, ca + cb}, std::move(v));
  auto *an = a.node(), *bn = b.node(), *on = out.node();
  record_op(out, {a, b}, [an, bn, on, ra, ca, cb] {
    for (std::size_t i = 0; i < ra; ++i) {
      if (an->requires_grad)
        for (std::size_t j = 0; j < ca; ++j)
          an->grad[i * ca + j] += on->grad[i * (ca + cb) + j];
      if (bn->requires_grad)
        for (std::size_t j = 0; j < cb; ++j)
          bn->grad[i * cb + j] += on->grad[i * (ca + cb) + ca + j];
    }
  });
  return out;
}

Tensor slice(const Tensor& x, std::size_t start, std::size_t len) {
  require_defined(x, "slice");
  if (x.rank() != 1) throw DimensionError("slice: need rank 1, got " + shape_str(x.shape()));
  if (start + len > x.size())
    throw ContractError("slice: [" + std::to_string(start) + ", " +
                        std::to_string(start + len) + ") exceeds length " +
                        std::to_string(x.size()));
  std::vector<double> v(x.data().begin() + start, x.data().begin() + start + len);
  Tensor out = Tensor::from_data({len}, std::move(v));
  auto *xn = x.node(), *on = out.node();
  record_op(out, {x}, [xn, on, start, len] {
    for (std::size_t i = 0; i < len; ++i) xn->grad[start + i] += on->grad[i];
  });
  return out;
}

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t len) {
  require_defined(x, "slice_cols");
  if (x.rank() != 2)
    throw DimensionError("slice_cols: need rank 2, got " + shape_str(x.shape()));
  const std::size_t r = x.dim(0), c = x.dim(1);
  if (start + len > c)
    throw ContractError("slice_cols: [" + std::to_string(start) + ", " +
                        std::to_string(start + len) + ") exceeds " + std::to_string(c) +
                        " columns");
  std::vector<double> v(r * len);
  const auto xv = x.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < len; ++j) v[i * len + j] = xv[i * c + start + j];
  Tensor out = Tensor::from_data({r, len}, std::move(v));
  auto *xn = x.node(), *on = out.node();
  record_op(out, {x}, [xn, on, r, c, start, len] {
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < len; ++j)
        xn->grad[i * c + start + j] += on->grad[i * len + j];
  });
  return out;
}

Tensor row(const Tensor& x, std::size_t i) {
  require_defined(x, "row");
  if (x.rank() != 2) throw DimensionError("row: need rank 2, got " + shape_str(x.shape()));
  const std::size_t r = x.dim(0), c = x.dim(1);
  if (i >= r) throw ContractError("row: index " + std::to_string(i) + " out of range");
  std::vector<double> v(x.data().begin() + i * c, x.data().begin() + (i + 1) * c);
  Tensor out = Tensor::from_data({c}, std::move(v));
  auto *xn = x.node(), *on = out.node();
  record_op(out, {x}, [xn, on, i, c] {
    for (std::size_t j = 0; j < c; ++j) xn->grad[i * c + j] += on->grad[j];
  });
  return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
  require_defined(x, "reshape");
  if (shape_product(shape) != x.size())
    throw DimensionError("reshape: " + shape_str(x.shape()) + " cannot become " +
                         shape_str(shape));
  std::vector<double> v(x.data().begin(), x.data().end());
  Tensor out = Tensor::from_data(std::move(shape), std::move(v));
  auto *xn = x.node(), *on = out.node();
  record_op(out, {x}, [xn, on] {
    for (std::size_t i = 0; i < on->grad.size(); ++i) xn->grad[i] += on->grad[i];
  });
  return out;
}

// ---- reductions ---------------------------------------------------------------

Tensor sum(const Tensor& x) {
  require_defined(x, "sum");
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  Tensor out = Tensor::scalar(acc);
  auto *xn = x.node(), *on = out.node();
  record_op(out, {x}, [xn, on] {
    const double g = on->grad[0];
    for (std::size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += g;
  });
  return out;
}

Tensor mean(const Tensor& x) {
  require_defined(x, "mean");
  if (x.size() == 0) throw ContractError("mean: empty tensor");
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  const double n = static_cast<double>(x.size());
  Tensor out = Tensor::scalar(acc / n);
  auto *xn = x.node(), *on = out.node();
  record_op(out, {x}, [xn, on, n] {
    const double g = on->grad[0] / n;
    for (std::size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += g;
  });
  return out;
}

Tensor dot(const Tensor& a, const Tensor& b) {
  require_defined(a, "dot");
  require_defined(b, "dot");
  if (a.rank() != 1 || b.rank() != 1 || a.size() != b.size())
    throw DimensionError("dot: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  double acc = 0.0;
  const auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < a.size(); ++i) acc += av[i] * bv[i];
  Tensor out = Tensor::scalar(acc);
  auto *an = a.node(), *bn = b.node(), *on = out.node();
  record_op(out, {a, b}, [an, bn, on] {
    const double g = on->grad[0];
    if (an->requires_grad)
      for (std::size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += g * bn->value[i];
    if (bn->requires_grad)
      for (std::size_t i = 0; i < bn->grad.size(); ++i) bn->grad[i] += g * an->value[i];
  });
  return out;
}

Tensor bce_logits_sum(const Tensor& logits, const Tensor& targets) {
  require_same_shape("bce_logits_sum", logits, targets);
  double acc = 0.0;
  const auto sv = logits.data(), tv = targets.data();
  for (std::size_t i = 0; i < logits.size(); ++i)
    acc += softplus_scalar(sv[i]) - tv[i] * sv[i];
  Tensor out = Tensor::scalar(acc);
  auto *sn = logits.node(), *tn = targets.node(), *on = out.node();
  record_op(out, {logits, targets}, [sn, tn, on] {
    const double g = on->grad[0];
    if (sn->requires_grad)
      for (std::size_t i = 0; i < sn->grad.size(); ++i)
        sn->grad[i] += g * (sigmoid_scalar(sn->value[i]) - tn->value[i]);
    if (tn->requires_grad)
      for (std::size_t i = 0; i < tn->grad.size(); ++i) tn->grad[i] += g * (-sn->value[i]);
  });
  return out;
}

Tensor stack_steps(const std::vector<Tensor>& steps) {
  if (steps.empty()) throw ContractError("stack_steps: no steps");
  const std::size_t n = steps[0].dim(0), c = steps[0].dim(1), t_len = steps.size();
  for (const auto& s : steps)
    if (s.rank() != 2 || s.dim(0) != n || s.dim(1) != c)
      throw DimensionError("stack_steps: inconsistent step shape " + shape_str(s.shape()));
  std::vector<double> v(n * t_len * c);
  for (std::size_t t = 0; t < t_len; ++t) {
    const auto sv = steps[t].data();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < c; ++j) v[(i * t_len + t) * c + j] = sv[i * c + j];
  }
  Tensor out = Tensor::from_data({n, t_len, c}, std::move(v));
  std::vector<detail::TensorNode*> parts(t_len);
  for (std::size_t t = 0; t < t_len; ++t) parts[t] = steps[t].node();
  auto* on = out.node();
  record_op(out, steps, [parts = std::move(parts), on, n, c, t_len] {
    for (std::size_t t = 0; t < t_len; ++t) {
      auto* p = parts[t];
      if (!p->requires_grad) continue;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j)
          p->grad[i * c + j] += on->grad[(i * t_len + t) * c + j];
    }
  });
  return out;
}

Tensor gather_timestep(const std::vector<Tensor>& per_node, std::size_t t) {
  if (per_node.empty()) throw ContractError("gather_timestep: no nodes");
  const std::size_t c = per_node[0].dim(0), t_len = per_node[0].dim(1);
  if (t >= t_len) throw ContractError("gather_timestep: step out of range");
  const std::size_t n = per_node.size();
  for (const auto& m : per_node)
    if (m.rank() != 2 || m.dim(0) != c || m.dim(1) != t_len)
      throw DimensionError("gather_timestep: inconsistent node shape " + shape_str(m.shape()));
  std::vector<double> v(n * c);
  for (std::size_t i = 0; i < n; ++i) {
    const auto mv = per_node[i].data();
    for (std::size_t ch = 0; ch < c; ++ch) v[i * c + ch] = mv[ch * t_len + t];
  }
  Tensor out = Tensor::from_data({n, c}, std::move(v));
  std::vector<detail::TensorNode*> parts(n);
  for (std::size_t i = 0; i < n; ++i) parts[i] = per_node[i].node();
  auto* on = out.node();
  record_op(out, per_node, [parts = std::move(parts), on, c, t_len, t, n] {
    for (std::size_t i = 0; i < n; ++i) {
      auto* p = parts[i];
      if (!p->requires_grad) continue;
      for (std::size_t ch = 0; ch < c; ++ch)
        p->grad[ch * t_len + t] += on->grad[i * c + ch];
    }
  });
  return out;
}

Tensor node_series(const std::vector<Tensor>& per_step, std::size_t node) {
  if (per_step.empty()) throw ContractError("node_series: no steps");
  const std::size_t n = per_step[0].dim(0), c = per_step[0].dim(1);
  if (node >= n) throw ContractError("node_series: node out of range");
  const std::size_t t_len = per_step.size();
  for (const auto& m : per_step)
    if (m.rank() != 2 || m.dim(0) != n || m.dim(1) != c)
      throw DimensionError("node_series: inconsistent step shape " + shape_str(m.shape()));
  std::vector<double> v(c * t_len);
  for (std::size_t t = 0; t < t_len; ++t) {
    const auto mv = per_step[t].data();
    for (std::size_t ch = 0; ch < c; ++ch) v[ch * t_len + t] = mv[node * c + ch];
  }
  Tensor out = Tensor::from_data({c, t_len}, std::move(v));
  std::vector<detail::TensorNode*> parts(t_len);
  for (std::size_t t = 0; t < t_len; ++t) parts[t] = per_step[t].node();
  auto* on = out.node();
  record_op(out, per_step, [parts = std::move(parts), on, c, t_len, node] {
    for (std::size_t t = 0; t < t_len; ++t) {
      auto* p = parts[t];
      if (!p->requires_grad) continue;
      for (std::size_t ch = 0; ch < c; ++ch)
        p->grad[node * c + ch] += on->grad[ch * t_len + t];
    }
  });
  return out;
}

// ---- gradient checking ----------------------------------------------------------

GradCheckResult grad_check(const std::function<Tensor()>& f,
                           const std::vector<std::pair<std::string, Tensor>>& params,
                           double h) {
  // Analytic pass.
  for (const auto& [name, p] : params) {
    (void)name;
    Tensor(p).zero_grad();
  }
  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    Tensor loss = f();
    tape.backward(loss);
  }
  analytic.reserve(params.size());
  for (const auto& [name, p] : params) {
    (void)name;
    analytic.emplace_back(p.grad().begin(), p.grad().end());
  }

  // Numeric sweep; no tape is active so evaluations are value-only.
  GradCheckResult result;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor p = params[pi].second;
    auto vals = p.mutable_data();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double orig = vals[i];
      vals[i] = orig + h;
      const double f_plus = f().item();
      vals[i] = orig - h;
      const double f_minus = f().item();
      vals[i] = orig;
      const double numeric = (f_plus - f_minus) / (2.0 * h);
      const double a = analytic[pi][i];
      const double rel =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_param = params[pi].first + "[" + std::to_string(i) + "]";
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace stlstm

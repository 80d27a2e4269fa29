#include "ets/ad/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>
#include <utility>

namespace ets::ad {

namespace {

std::atomic<std::int64_t> g_next_id{0};

std::shared_ptr<TensorData> make_data(int rows, int cols,
                                      std::vector<double> v,
                                      bool requires_grad, bool leaf) {
  if (rows < 1 || cols < 1) {
    std::ostringstream os;
    os << "tensor: shape " << rows << "x" << cols << " must be positive";
    throw shape_error(os.str());
  }
  if (v.size() != static_cast<std::size_t>(rows) * cols) {
    std::ostringstream os;
    os << "tensor: " << v.size() << " values for shape " << rows << "x"
       << cols;
    throw shape_error(os.str());
  }
  auto d = std::make_shared<TensorData>();
  d->rows = rows;
  d->cols = cols;
  d->v = std::move(v);
  d->requires_grad = requires_grad;
  d->leaf = leaf;
  d->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  return d;
}

std::vector<double>& grad_buf(TensorData* t) {
  if (t->g.empty()) t->g.assign(t->v.size(), 0.0);
  t->grad_set = true;
  return t->g;
}

[[noreturn]] void fail2(const char* op, const Tensor& a, const Tensor& b) {
  std::ostringstream os;
  os << op << ": incompatible shapes " << a.shape_str() << " and "
     << b.shape_str();
  throw shape_error(os.str());
}

[[noreturn]] void fail1(const char* op, const Tensor& a, const char* why) {
  std::ostringstream os;
  os << op << ": " << why << " (shape " << a.shape_str() << ")";
  throw shape_error(os.str());
}

}  // namespace

Tensor Tensor::constant(int rows, int cols, std::vector<double> v) {
  return Tensor(make_data(rows, cols, std::move(v), false, true));
}

Tensor Tensor::zeros(int rows, int cols, bool requires_grad) {
  return Tensor(make_data(rows, cols,
                          std::vector<double>(static_cast<std::size_t>(rows) *
                                              cols),
                          requires_grad, true));
}

Tensor Tensor::scalar(double x) { return constant(1, 1, {x}); }

Tensor Tensor::param(int rows, int cols, std::vector<double> v) {
  return Tensor(make_data(rows, cols, std::move(v), true, true));
}

Tensor Tensor::identity(int n) {
  std::vector<double> v(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i) * n + i] = 1.0;
  return constant(n, n, std::move(v));
}

double Tensor::value() const {
  if (!is_scalar()) fail1("value", *this, "scalar expected");
  return d_->v[0];
}

double Tensor::grad(int r, int c) const {
  if (d_->g.empty()) return 0.0;
  return d_->g[index(r, c)];
}

double Tensor::grad() const {
  if (!is_scalar()) fail1("grad", *this, "scalar expected");
  return grad(0, 0);
}

std::vector<double> Tensor::grad_vector() const {
  if (d_->g.empty()) return std::vector<double>(d_->v.size(), 0.0);
  return d_->g;
}

void Tensor::set_values(const std::vector<double>& v) {
  if (!d_->leaf) fail1("set_values", *this, "only leaf tensors may be reset");
  if (v.size() != d_->v.size())
    fail1("set_values", *this, "value count mismatch");
  d_->v = v;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  if (!d_) return "<undefined>";
  os << d_->rows << "x" << d_->cols;
  return os.str();
}

void accumulate_grad(TensorData* t, const std::vector<double>& delta) {
  auto& g = grad_buf(t);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

// ---- tape -----------------------------------------------------------------

void Tape::backward(const Tensor& root) {
  if (backward_run_)
    throw shape_error("backward: tape already consumed; call reset_grads()");
  if (!root.is_scalar())
    throw shape_error("backward: root must be scalar, got " +
                      root.shape_str());
  if (!root.requires_grad())
    throw shape_error("backward: root does not require gradients");
  backward_run_ = true;
  track(root);
  grad_buf(root.data())[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->out->grad_set) it->back();
  }
}

void Tape::reset_grads() {
  for (auto& t : tracked_) {
    t->g.clear();
    t->grad_set = false;
  }
  backward_run_ = false;
}

Tensor Tape::make_output(int rows, int cols, std::vector<double> v,
                         bool requires_grad) {
  auto d = make_data(rows, cols, std::move(v), requires_grad, false);
  return Tensor(std::move(d));
}

void Tape::push_node(std::function<void()> back, Tensor out) {
  nodes_.push_back({std::move(back), out.shared()});
  track(out);
}

void Tape::track(const Tensor& t) { tracked_.push_back(t.shared()); }

// ---- op helpers -------------------------------------------------------

namespace {

// Finalize an op result: constants stay off the tape.
template <typename BackFn>
Tensor finish(Tape& tape, int rows, int cols, std::vector<double> v,
              std::initializer_list<Tensor> inputs, BackFn&& make_back) {
  bool needs = false;
  for (const auto& t : inputs) needs |= t.requires_grad();
  Tensor out = tape.make_output(rows, cols, std::move(v), needs);
  if (needs) {
    for (const auto& t : inputs) tape.track(t);
    tape.push_node(make_back(out), out);
  }
  return out;
}

enum class BCast { kNone, kRow, kScalar };

BCast broadcast_kind(const char* op, const Tensor& a, const Tensor& b) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return BCast::kNone;
  if (b.rows() == 1 && b.cols() == 1) return BCast::kScalar;
  if (b.rows() == 1 && b.cols() == a.cols()) return BCast::kRow;
  fail2(op, a, b);
}

}  // namespace

// ---- ops -------------------------------------------------------------

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) fail2("matmul", a, b);
  const int m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> v(static_cast<std::size_t>(m) * n, 0.0);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (int i = 0; i < m; ++i) {
    const double* arow = av.data() + static_cast<std::size_t>(i) * k;
    double* orow = v.data() + static_cast<std::size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double x = arow[p];
      if (x == 0.0) continue;
      const double* brow = bv.data() + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) orow[j] += x * brow[j];
    }
  }
  return finish(tape, m, n, std::move(v), {a, b}, [&](Tensor out) {
    auto ad_ = a.shared();
    auto bd_ = b.shared();
    auto od_ = out.shared();
    return [ad_, bd_, od_, m, k, n]() {
      const auto& g = od_->g;
      if (ad_->requires_grad) {
        auto& ga = grad_buf(ad_.get());
        // dA += G B^T
        for (int i = 0; i < m; ++i)
          for (int p = 0; p < k; ++p) {
            double acc = 0.0;
            const double* grow = g.data() + static_cast<std::size_t>(i) * n;
            const double* brow =
                bd_->v.data() + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
            ga[static_cast<std::size_t>(i) * k + p] += acc;
          }
      }
      if (bd_->requires_grad) {
        auto& gb = grad_buf(bd_.get());
        // dB += A^T G
        for (int i = 0; i < m; ++i) {
          const double* arow = ad_->v.data() + static_cast<std::size_t>(i) * k;
          const double* grow = g.data() + static_cast<std::size_t>(i) * n;
          for (int p = 0; p < k; ++p) {
            const double x = arow[p];
            if (x == 0.0) continue;
            double* brow = gb.data() + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) brow[j] += x * grow[j];
          }
        }
      }
    };
  });
}

namespace {

Tensor addsub(Tape& tape, const Tensor& a, const Tensor& b, double sign,
              const char* name) {
  const BCast bc = broadcast_kind(name, a, b);
  const int m = a.rows(), n = a.cols();
  std::vector<double> v(a.values());
  const auto& bv = b.values();
  switch (bc) {
    case BCast::kNone:
      for (std::size_t i = 0; i < v.size(); ++i) v[i] += sign * bv[i];
      break;
    case BCast::kScalar:
      for (auto& x : v) x += sign * bv[0];
      break;
    case BCast::kRow:
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
          v[static_cast<std::size_t>(i) * n + j] += sign * bv[j];
      break;
  }
  return finish(tape, m, n, std::move(v), {a, b}, [&](Tensor out) {
    auto ad_ = a.shared();
    auto bd_ = b.shared();
    auto od_ = out.shared();
    return [ad_, bd_, od_, bc, sign, m, n]() {
      const auto& g = od_->g;
      if (ad_->requires_grad) {
        auto& ga = grad_buf(ad_.get());
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
      }
      if (bd_->requires_grad) {
        auto& gb = grad_buf(bd_.get());
        switch (bc) {
          case BCast::kNone:
            for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += sign * g[i];
            break;
          case BCast::kScalar: {
            double acc = 0.0;
            for (double x : g) acc += x;
            gb[0] += sign * acc;
            break;
          }
          case BCast::kRow:
            for (int i = 0; i < m; ++i)
              for (int j = 0; j < n; ++j)
                gb[j] += sign * g[static_cast<std::size_t>(i) * n + j];
            break;
        }
      }
    };
  });
}

}  // namespace

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  return addsub(tape, a, b, 1.0, "add");
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  return addsub(tape, a, b, -1.0, "sub");
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.is_scalar() && !b.is_scalar()) return mul(tape, b, a);
  const BCast bc = broadcast_kind("mul", a, b);
  if (bc == BCast::kRow) fail2("mul", a, b);  // scalar or equal shapes only
  std::vector<double> v(a.values());
  const auto& bv = b.values();
  if (bc == BCast::kNone)
    for (std::size_t i = 0; i < v.size(); ++i) v[i] *= bv[i];
  else
    for (auto& x : v) x *= bv[0];
  return finish(tape, a.rows(), a.cols(), std::move(v), {a, b},
                [&](Tensor out) {
                  auto ad_ = a.shared();
                  auto bd_ = b.shared();
                  auto od_ = out.shared();
                  return [ad_, bd_, od_, bc]() {
                    const auto& g = od_->g;
                    if (ad_->requires_grad) {
                      auto& ga = grad_buf(ad_.get());
                      if (bc == BCast::kNone)
                        for (std::size_t i = 0; i < ga.size(); ++i)
                          ga[i] += g[i] * bd_->v[i];
                      else
                        for (std::size_t i = 0; i < ga.size(); ++i)
                          ga[i] += g[i] * bd_->v[0];
                    }
                    if (bd_->requires_grad) {
                      auto& gb = grad_buf(bd_.get());
                      if (bc == BCast::kNone)
                        for (std::size_t i = 0; i < gb.size(); ++i)
                          gb[i] += g[i] * ad_->v[i];
                      else {
                        double acc = 0.0;
                        for (std::size_t i = 0; i < g.size(); ++i)
                          acc += g[i] * ad_->v[i];
                        gb[0] += acc;
                      }
                    }
                  };
                });
}

Tensor smul(Tape& tape, const Tensor& a, double c) {
  std::vector<double> v(a.values());
  for (auto& x : v) x *= c;
  return finish(tape, a.rows(), a.cols(), std::move(v), {a}, [&](Tensor out) {
    auto ad_ = a.shared();
    auto od_ = out.shared();
    return [ad_, od_, c]() {
      auto& ga = grad_buf(ad_.get());
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += c * od_->g[i];
    };
  });
}

namespace {

// Unary elementwise op whose derivative is a function of input and output.
template <typename Fwd, typename Bwd>
Tensor unary(Tape& tape, const Tensor& a, Fwd fwd, Bwd bwd) {
  std::vector<double> v(a.values());
  for (auto& x : v) x = fwd(x);
  return finish(tape, a.rows(), a.cols(), std::move(v), {a}, [&](Tensor out) {
    auto ad_ = a.shared();
    auto od_ = out.shared();
    return [ad_, od_, bwd]() {
      auto& ga = grad_buf(ad_.get());
      for (std::size_t i = 0; i < ga.size(); ++i)
        ga[i] += od_->g[i] * bwd(ad_->v[i], od_->v[i]);
    };
  });
}

void require_positive(const char* op, const Tensor& a, bool strict) {
  for (double x : a.values()) {
    if (strict ? !(x > 0.0) : !(x >= 0.0)) {
      std::ostringstream os;
      os << op << ": input " << x << " outside domain";
      throw shape_error(os.str());
    }
  }
}

}  // namespace

Tensor tanh(Tape& tape, const Tensor& a) {
  return unary(
      tape, a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(Tape& tape, const Tensor& a) {
  return unary(
      tape, a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(Tape& tape, const Tensor& a) {
  return unary(
      tape, a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor square(Tape& tape, const Tensor& a) {
  return unary(
      tape, a, [](double x) { return x * x; },
      [](double x, double) { return 2.0 * x; });
}

Tensor sqrt(Tape& tape, const Tensor& a) {
  require_positive("sqrt", a, true);
  return unary(
      tape, a, [](double x) { return std::sqrt(x); },
      [](double, double y) { return 0.5 / y; });
}

Tensor abs(Tape& tape, const Tensor& a) {
  // subgradient 0 at the kink
  return unary(
      tape, a, [](double x) { return std::fabs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor log(Tape& tape, const Tensor& a) {
  require_positive("log", a, true);
  return unary(
      tape, a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Tensor reciprocal(Tape& tape, const Tensor& a) {
  for (double x : a.values())
    if (x == 0.0) throw shape_error("reciprocal: zero input");
  return unary(
      tape, a, [](double x) { return 1.0 / x; },
      [](double, double y) { return -y * y; });
}

namespace {

enum class Red { kSum, kMean, kRowSum, kColSum, kColMean };

Tensor reduce(Tape& tape, const Tensor& a, Red red) {
  const int m = a.rows(), n = a.cols();
  const auto& av = a.values();
  int orows = 1, ocols = 1;
  if (red == Red::kRowSum) orows = m;
  if (red == Red::kColSum || red == Red::kColMean) ocols = n;
  std::vector<double> v(static_cast<std::size_t>(orows) * ocols, 0.0);
  switch (red) {
    case Red::kSum:
    case Red::kMean:
      for (double x : av) v[0] += x;
      if (red == Red::kMean) v[0] /= static_cast<double>(av.size());
      break;
    case Red::kRowSum:
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
          v[i] += av[static_cast<std::size_t>(i) * n + j];
      break;
    case Red::kColSum:
    case Red::kColMean:
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
          v[j] += av[static_cast<std::size_t>(i) * n + j];
      if (red == Red::kColMean)
        for (auto& x : v) x /= static_cast<double>(m);
      break;
  }
  return finish(tape, orows, ocols, std::move(v), {a}, [&](Tensor out) {
    auto ad_ = a.shared();
    auto od_ = out.shared();
    return [ad_, od_, red, m, n]() {
      auto& ga = grad_buf(ad_.get());
      const auto& g = od_->g;
      const double inv = 1.0 / static_cast<double>(ga.size());
      switch (red) {
        case Red::kSum:
          for (auto& x : ga) x += g[0];
          break;
        case Red::kMean:
          for (auto& x : ga) x += g[0] * inv;
          break;
        case Red::kRowSum:
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
              ga[static_cast<std::size_t>(i) * n + j] += g[i];
          break;
        case Red::kColSum:
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
              ga[static_cast<std::size_t>(i) * n + j] += g[j];
          break;
        case Red::kColMean: {
          const double invm = 1.0 / static_cast<double>(m);
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
              ga[static_cast<std::size_t>(i) * n + j] += g[j] * invm;
          break;
        }
      }
    };
  });
}

}  // namespace

Tensor sum(Tape& tape, const Tensor& a) { return reduce(tape, a, Red::kSum); }
Tensor mean(Tape& tape, const Tensor& a) { return reduce(tape, a, Red::kMean); }
Tensor rowsum(Tape& tape, const Tensor& a) {
  return reduce(tape, a, Red::kRowSum);
}
Tensor colsum(Tape& tape, const Tensor& a) {
  return reduce(tape, a, Red::kColSum);
}
Tensor colmean(Tape& tape, const Tensor& a) {
  return reduce(tape, a, Red::kColMean);
}

Tensor trace(Tape& tape, const Tensor& a) {
  if (a.rows() != a.cols()) fail1("trace", a, "square matrix expected");
  const int n = a.rows();
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += a.value(i, i);
  return finish(tape, 1, 1, {acc}, {a}, [&](Tensor out) {
    auto ad_ = a.shared();
    auto od_ = out.shared();
    return [ad_, od_, n]() {
      auto& ga = grad_buf(ad_.get());
      for (int i = 0; i < n; ++i)
        ga[static_cast<std::size_t>(i) * n + i] += od_->g[0];
    };
  });
}

Tensor transpose(Tape& tape, const Tensor& a) {
  const int m = a.rows(), n = a.cols();
  std::vector<double> v(a.size());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      v[static_cast<std::size_t>(j) * m + i] =
          a.values()[static_cast<std::size_t>(i) * n + j];
  return finish(tape, n, m, std::move(v), {a}, [&](Tensor out) {
    auto ad_ = a.shared();
    auto od_ = out.shared();
    return [ad_, od_, m, n]() {
      auto& ga = grad_buf(ad_.get());
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
          ga[static_cast<std::size_t>(i) * n + j] +=
              od_->g[static_cast<std::size_t>(j) * m + i];
    };
  });
}

Tensor concat_cols(Tape& tape, const std::vector<Tensor>& parts) {
  if (parts.empty()) throw shape_error("concat_cols: no inputs");
  const int m = parts[0].rows();
  int total = 0;
  bool needs = false;
  for (const auto& p : parts) {
    if (p.rows() != m) fail2("concat_cols", parts[0], p);
    total += p.cols();
    needs |= p.requires_grad();
  }
  std::vector<double> v(static_cast<std::size_t>(m) * total);
  int off = 0;
  for (const auto& p : parts) {
    const int n = p.cols();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        v[static_cast<std::size_t>(i) * total + off + j] = p.value(i, j);
    off += n;
  }
  Tensor out = tape.make_output(m, total, std::move(v), needs);
  if (needs) {
    std::vector<std::shared_ptr<TensorData>> ins;
    for (const auto& p : parts) {
      tape.track(p);
      ins.push_back(p.shared());
    }
    auto od_ = out.shared();
    tape.push_node(
        [ins, od_, m, total]() {
          int off2 = 0;
          for (const auto& p : ins) {
            const int n = p->cols;
            if (p->requires_grad) {
              auto& gp = grad_buf(p.get());
              for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j)
                  gp[static_cast<std::size_t>(i) * n + j] +=
                      od_->g[static_cast<std::size_t>(i) * total + off2 + j];
            }
            off2 += n;
          }
        },
        out);
  }
  return out;
}

Tensor gather_rows(Tape& tape, const Tensor& a,
                   const std::vector<int>& indices) {
  if (indices.empty()) throw shape_error("gather_rows: empty index list");
  const int m = a.rows(), n = a.cols();
  for (int idx : indices)
    if (idx < 0 || idx >= m) {
      std::ostringstream os;
      os << "gather_rows: index " << idx << " out of range for "
         << a.shape_str();
      throw shape_error(os.str());
    }
  const int k = static_cast<int>(indices.size());
  std::vector<double> v(static_cast<std::size_t>(k) * n);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < n; ++j)
      v[static_cast<std::size_t>(i) * n + j] = a.value(indices[i], j);
  return finish(tape, k, n, std::move(v), {a}, [&](Tensor out) {
    auto ad_ = a.shared();
    auto od_ = out.shared();
    auto idx = indices;
    return [ad_, od_, idx, n]() {
      auto& ga = grad_buf(ad_.get());
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (int j = 0; j < n; ++j)
          ga[static_cast<std::size_t>(idx[i]) * n + j] +=
              od_->g[i * static_cast<std::size_t>(n) + j];
    };
  });
}

Tensor bmatvec(Tape& tape, const Tensor& v, const Tensor& z) {
  const int m = z.rows(), d = z.cols();
  if (v.rows() != m || v.cols() != d * d) fail2("bmatvec", v, z);
  std::vector<double> out(static_cast<std::size_t>(m) * d, 0.0);
  const auto& vv = v.values();
  const auto& zv = z.values();
  for (int i = 0; i < m; ++i) {
    const double* vi = vv.data() + static_cast<std::size_t>(i) * d * d;
    const double* zi = zv.data() + static_cast<std::size_t>(i) * d;
    double* oi = out.data() + static_cast<std::size_t>(i) * d;
    for (int a = 0; a < d; ++a) {
      double acc = 0.0;
      for (int b = 0; b < d; ++b) acc += vi[a * d + b] * zi[b];
      oi[a] = acc;
    }
  }
  return finish(tape, m, d, std::move(out), {v, z}, [&](Tensor o) {
    auto vd_ = v.shared();
    auto zd_ = z.shared();
    auto od_ = o.shared();
    return [vd_, zd_, od_, m, d]() {
      const auto& g = od_->g;
      if (vd_->requires_grad) {
        auto& gv = grad_buf(vd_.get());
        for (int i = 0; i < m; ++i)
          for (int a = 0; a < d; ++a) {
            const double gi = g[static_cast<std::size_t>(i) * d + a];
            if (gi == 0.0) continue;
            for (int b = 0; b < d; ++b)
              gv[static_cast<std::size_t>(i) * d * d + a * d + b] +=
                  gi * zd_->v[static_cast<std::size_t>(i) * d + b];
          }
      }
      if (zd_->requires_grad) {
        auto& gz = grad_buf(zd_.get());
        for (int i = 0; i < m; ++i)
          for (int b = 0; b < d; ++b) {
            double acc = 0.0;
            for (int a = 0; a < d; ++a)
              acc += g[static_cast<std::size_t>(i) * d + a] *
                     vd_->v[static_cast<std::size_t>(i) * d * d + a * d + b];
            gz[static_cast<std::size_t>(i) * d + b] += acc;
          }
      }
    };
  });
}

}  // namespace ets::ad

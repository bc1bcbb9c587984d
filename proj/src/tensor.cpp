#include "molgsl/tensor.hpp"

#include <atomic>
#include <cmath>
#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace molgsl {

namespace {

std::atomic<std::uint64_t> g_max_alloc{0};
std::atomic<std::uint64_t> g_total_allocs{0};

thread_local Tape* g_active_tape = nullptr;

std::string shape_str(const Tensor& t) {
  return "[" + std::to_string(t.rows()) + "x" + std::to_string(t.cols()) + "]";
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw UsageError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " +
                     shape_str(b));
  }
}

bool tape_on(const Tensor& out) { return Tape::active() != nullptr && out.requires_grad(); }

// C (m x n) += A (m x k) * B (k x n). Contributions to each output element
// arrive in ascending-k order, matching a plain dot-product loop; oracle tests
// rely on that for exact equality.
void mm_nn_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (m * n * k > (std::size_t)1 << 16)
#endif
  for (std::ptrdiff_t i = 0; i < (std::ptrdiff_t)m; ++i) {
    double* ci = c + (std::size_t)i * n;
    const double* ai = a + (std::size_t)i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// C (m x n) += A (m x k) * B^T with B (n x k).
void mm_nt_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (m * n * k > (std::size_t)1 << 16)
#endif
  for (std::ptrdiff_t i = 0; i < (std::ptrdiff_t)m; ++i) {
    double* ci = c + (std::size_t)i * n;
    const double* ai = a + (std::size_t)i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] += acc;
    }
  }
}

// C (m x n) += A^T * B with A (k x m), B (k x n).
void mm_tn_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (m * n * k > (std::size_t)1 << 16)
#endif
  for (std::ptrdiff_t i = 0; i < (std::ptrdiff_t)m; ++i) {
    double* ci = c + (std::size_t)i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[p * m + (std::size_t)i];
      if (av == 0.0) continue;
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

}  // namespace

namespace detail {

Storage::Storage(std::size_t r, std::size_t c, bool rg)
    : v(r * c, 0.0), rows(r), cols(c), requires_grad(rg) {
  const std::uint64_t elems = (std::uint64_t)r * c;
  std::uint64_t prev = g_max_alloc.load(std::memory_order_relaxed);
  while (elems > prev &&
         !g_max_alloc.compare_exchange_weak(prev, elems, std::memory_order_relaxed)) {
  }
  g_total_allocs.fetch_add(1, std::memory_order_relaxed);
}

void Storage::ensure_grad() {
  if (g.empty()) g.assign(v.size(), 0.0);
}

}  // namespace detail

namespace alloc_stats {
void reset() {
  g_max_alloc.store(0);
  g_total_allocs.store(0);
}
std::uint64_t max_single_alloc_elems() { return g_max_alloc.load(); }
std::uint64_t total_allocs() { return g_total_allocs.load(); }
}  // namespace alloc_stats

Tensor Tensor::zeros(std::size_t rows, std::size_t cols, bool requires_grad) {
  return Tensor(std::make_shared<detail::Storage>(rows, cols, requires_grad));
}

Tensor Tensor::full(std::size_t rows, std::size_t cols, double value, bool requires_grad) {
  Tensor t = zeros(rows, cols, requires_grad);
  for (double& x : t.data()) x = value;
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return full(1, 1, value, requires_grad);
}

Tensor Tensor::from(std::size_t rows, std::size_t cols, std::vector<double> values,
                    bool requires_grad) {
  if (values.size() != rows * cols) {
    throw UsageError("Tensor::from: " + std::to_string(values.size()) +
                     " values for shape [" + std::to_string(rows) + "x" +
                     std::to_string(cols) + "]");
  }
  Tensor t = zeros(rows, cols, requires_grad);
  t.data() = std::move(values);
  return t;
}

double Tensor::item() const {
  if (size() != 1) throw UsageError("item(): tensor is " + shape_str(*this) + ", not 1x1");
  return s_->v[0];
}

const std::vector<double>& Tensor::grad() const {
  if (s_->g.empty()) throw UsageError("grad(): no gradient present");
  return s_->g;
}

std::vector<double>& Tensor::grad_buffer() {
  s_->ensure_grad();
  return s_->g;
}

void Tensor::zero_grad() {
  if (!s_->g.empty()) std::fill(s_->g.begin(), s_->g.end(), 0.0);
}

Tensor Tensor::detach() const {
  Tensor t = zeros(rows(), cols(), false);
  t.data() = data();
  return t;
}

Tensor make_like(const Tensor& src, std::size_t rows, std::size_t cols, bool requires_grad) {
  (void)src;
  return Tensor::zeros(rows, cols, requires_grad);
}

Tape* Tape::active() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : prev_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = prev_; }

void Tape::backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw UsageError("backward(): loss must be scalar, got " + shape_str(loss));
  }
  if (!loss.requires_grad()) {
    records_.clear();
    return;
  }
  loss.storage()->ensure_grad();
  loss.storage()->g[0] += 1.0;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) (*it)();
  records_.clear();
}

void backward(const Tensor& loss) {
  Tape* t = Tape::active();
  if (t == nullptr) throw UsageError("backward(): no active tape");
  t->backward(loss);
}

Tensor SparseSym::to_dense() const {
  Tensor d = Tensor::zeros(n, n, false);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k) {
      d.data()[i * n + col[k]] = val[k];
    }
  }
  return d;
}

// ---- ops -------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw UsageError("matmul: inner dims differ " + shape_str(a) + " vs " + shape_str(b));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out = Tensor::zeros(m, n, a.requires_grad() || b.requires_grad());
  mm_nn_acc(a.data().data(), b.data().data(), out.data().data(), m, k, n);
  if (tape_on(out)) {
    auto sa = a.storage(), sb = b.storage(), so = out.storage();
    bool ga = a.requires_grad(), gb = b.requires_grad();
    auto ka = a, kb = b, ko = out;  // keep storages alive
    Tape::active()->record([=]() {
      (void)ka; (void)kb; (void)ko;
      if (so->g.empty()) return;
      if (ga) {
        sa->ensure_grad();
        mm_nt_acc(so->g.data(), sb->v.data(), sa->g.data(), m, n, k);
      }
      if (gb) {
        sb->ensure_grad();
        mm_tn_acc(sa->v.data(), so->g.data(), sb->g.data(), k, m, n);
      }
    });
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  Tensor out = Tensor::zeros(n, m, a.requires_grad());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.data()[j * m + i] = a.data()[i * n + j];
  if (tape_on(out)) {
    auto sa = a.storage(), so = out.storage();
    auto ka = a, ko = out;
    Tape::active()->record([=]() {
      (void)ka; (void)ko;
      if (so->g.empty()) return;
      sa->ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) sa->g[i * n + j] += so->g[j * m + i];
    });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b, double alpha, double beta) {
  const bool bias = (b.rows() == 1 && a.rows() != 1 && b.cols() == a.cols());
  if (!bias) require_same_shape(a, b, "add");
  const std::size_t m = a.rows(), n = a.cols();
  Tensor out = Tensor::zeros(m, n, a.requires_grad() || b.requires_grad());
  const auto& av = a.data();
  const auto& bv = b.data();
  auto& ov = out.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      ov[i * n + j] = alpha * av[i * n + j] + beta * bv[bias ? j : i * n + j];
  if (tape_on(out)) {
    auto sa = a.storage(), sb = b.storage(), so = out.storage();
    bool ga = a.requires_grad(), gb = b.requires_grad();
    auto ka = a, kb = b, ko = out;
    Tape::active()->record([=]() {
      (void)ka; (void)kb; (void)ko;
      if (so->g.empty()) return;
      if (ga) {
        sa->ensure_grad();
        for (std::size_t i = 0; i < m * n; ++i) sa->g[i] += alpha * so->g[i];
      }
      if (gb) {
        sb->ensure_grad();
        if (bias) {
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) sb->g[j] += beta * so->g[i * n + j];
        } else {
          for (std::size_t i = 0; i < m * n; ++i) sb->g[i] += beta * so->g[i];
        }
      }
    });
  }
  return out;
}

Tensor scalar_mul(const Tensor& a, double c) {
  Tensor out = Tensor::zeros(a.rows(), a.cols(), a.requires_grad());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = c * a.data()[i];
  if (tape_on(out)) {
    auto sa = a.storage(), so = out.storage();
    auto ka = a, ko = out;
    Tape::active()->record([=]() {
      (void)ka; (void)ko;
      if (so->g.empty()) return;
      sa->ensure_grad();
      for (std::size_t i = 0; i < sa->g.size(); ++i) sa->g[i] += c * so->g[i];
    });
  }
  return out;
}

Tensor scale(const Tensor& a, const Tensor& s) {
  if (s.size() != 1) throw UsageError("scale: scale factor must be 1x1, got " + shape_str(s));
  const double c = s.data()[0];
  Tensor out = Tensor::zeros(a.rows(), a.cols(), a.requires_grad() || s.requires_grad());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = c * a.data()[i];
  if (tape_on(out)) {
    auto sa = a.storage(), ss = s.storage(), so = out.storage();
    bool ga = a.requires_grad(), gs = s.requires_grad();
    auto ka = a, ks = s, ko = out;
    Tape::active()->record([=]() {
      (void)ka; (void)ks; (void)ko;
      if (so->g.empty()) return;
      if (ga) {
        sa->ensure_grad();
        for (std::size_t i = 0; i < sa->g.size(); ++i) sa->g[i] += c * so->g[i];
      }
      if (gs) {
        ss->ensure_grad();
        double acc = 0.0;
        for (std::size_t i = 0; i < sa->v.size(); ++i) acc += so->g[i] * sa->v[i];
        ss->g[0] += acc;
      }
    });
  }
  return out;
}

Tensor elementwise_mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "elementwise_mul");
  Tensor out = Tensor::zeros(a.rows(), a.cols(), a.requires_grad() || b.requires_grad());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
  if (tape_on(out)) {
    auto sa = a.storage(), sb = b.storage(), so = out.storage();
    bool ga = a.requires_grad(), gb = b.requires_grad();
    auto ka = a, kb = b, ko = out;
    Tape::active()->record([=]() {
      (void)ka; (void)kb; (void)ko;
      if (so->g.empty()) return;
      if (ga) {
        sa->ensure_grad();
        for (std::size_t i = 0; i < sa->g.size(); ++i) sa->g[i] += so->g[i] * sb->v[i];
      }
      if (gb) {
        sb->ensure_grad();
        for (std::size_t i = 0; i < sb->g.size(); ++i) sb->g[i] += so->g[i] * sa->v[i];
      }
    });
  }
  return out;
}

Tensor relu(const Tensor& a) {
  Tensor out = Tensor::zeros(a.rows(), a.cols(), a.requires_grad());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] > 0.0 ? a.data()[i] : 0.0;
  if (tape_on(out)) {
    auto sa = a.storage(), so = out.storage();
    auto ka = a, ko = out;
    Tape::active()->record([=]() {
      (void)ka; (void)ko;
      if (so->g.empty()) return;
      sa->ensure_grad();
      for (std::size_t i = 0; i < sa->g.size(); ++i)
        if (sa->v[i] > 0.0) sa->g[i] += so->g[i];
    });
  }
  return out;
}

Tensor sigmoid(const Tensor& a) {
  Tensor out = Tensor::zeros(a.rows(), a.cols(), a.requires_grad());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a.data()[i];
    out.data()[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                             : std::exp(x) / (1.0 + std::exp(x));
  }
  if (tape_on(out)) {
    auto sa = a.storage(), so = out.storage();
    auto ka = a, ko = out;
    Tape::active()->record([=]() {
      (void)ka; (void)ko;
      if (so->g.empty()) return;
      sa->ensure_grad();
      for (std::size_t i = 0; i < sa->g.size(); ++i) {
        const double y = so->v[i];
        sa->g[i] += so->g[i] * y * (1.0 - y);
      }
    });
  }
  return out;
}

Tensor row_softmax(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  Tensor out = Tensor::zeros(m, n, a.requires_grad());
  for (std::size_t i = 0; i < m; ++i) {
    const double* x = a.data().data() + i * n;
    double* y = out.data().data() + i * n;
    double mx = x[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      y[j] = std::exp(x[j] - mx);
      z += y[j];
    }
    for (std::size_t j = 0; j < n; ++j) y[j] /= z;
  }
  if (tape_on(out)) {
    auto sa = a.storage(), so = out.storage();
    auto ka = a, ko = out;
    Tape::active()->record([=]() {
      (void)ka; (void)ko;
      if (so->g.empty()) return;
      sa->ensure_grad();
      for (std::size_t i = 0; i < m; ++i) {
        const double* y = so->v.data() + i * n;
        const double* gy = so->g.data() + i * n;
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += gy[j] * y[j];
        for (std::size_t j = 0; j < n; ++j) sa->g[i * n + j] += y[j] * (gy[j] - dot);
      }
    });
  }
  return out;
}

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double x : a.data()) acc += x;
  Tensor out = Tensor::scalar(acc, a.requires_grad());
  if (tape_on(out)) {
    auto sa = a.storage(), so = out.storage();
    auto ka = a, ko = out;
    Tape::active()->record([=]() {
      (void)ka; (void)ko;
      if (so->g.empty()) return;
      sa->ensure_grad();
      for (double& g : sa->g) g += so->g[0];
    });
  }
  return out;
}

Tensor mean(const Tensor& a) {
  const double inv = 1.0 / (double)a.size();
  double acc = 0.0;
  for (double x : a.data()) acc += x;
  Tensor out = Tensor::scalar(acc * inv, a.requires_grad());
  if (tape_on(out)) {
    auto sa = a.storage(), so = out.storage();
    auto ka = a, ko = out;
    Tape::active()->record([=]() {
      (void)ka; (void)ko;
      if (so->g.empty()) return;
      sa->ensure_grad();
      for (double& g : sa->g) g += so->g[0] * inv;
    });
  }
  return out;
}

Tensor mean_rows(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  const double inv = 1.0 / (double)m;
  Tensor out = Tensor::zeros(1, n, a.requires_grad());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.data()[j] += a.data()[i * n + j];
  for (std::size_t j = 0; j < n; ++j) out.data()[j] *= inv;
  if (tape_on(out)) {
    auto sa = a.storage(), so = out.storage();
    auto ka = a, ko = out;
    Tape::active()->record([=]() {
      (void)ka; (void)ko;
      if (so->g.empty()) return;
      sa->ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) sa->g[i * n + j] += so->g[j] * inv;
    });
  }
  return out;
}

Tensor sum_rows(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  Tensor out = Tensor::zeros(1, n, a.requires_grad());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.data()[j] += a.data()[i * n + j];
  if (tape_on(out)) {
    auto sa = a.storage(), so = out.storage();
    auto ka = a, ko = out;
    Tape::active()->record([=]() {
      (void)ka; (void)ko;
      if (so->g.empty()) return;
      sa->ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) sa->g[i * n + j] += so->g[j];
    });
  }
  return out;
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw UsageError("concat: no parts");
  if (axis != 0 && axis != 1) throw UsageError("concat: axis must be 0 or 1");
  bool rg = false;
  for (const auto& p : parts) rg = rg || p.requires_grad();
  std::size_t rows = 0, cols = 0;
  if (axis == 0) {
    cols = parts[0].cols();
    for (const auto& p : parts) {
      if (p.cols() != cols)
        throw UsageError("concat axis 0: column mismatch " + shape_str(parts[0]) + " vs " +
                         shape_str(p));
      rows += p.rows();
    }
  } else {
    rows = parts[0].rows();
    for (const auto& p : parts) {
      if (p.rows() != rows)
        throw UsageError("concat axis 1: row mismatch " + shape_str(parts[0]) + " vs " +
                         shape_str(p));
      cols += p.cols();
    }
  }
  Tensor out = Tensor::zeros(rows, cols, rg);
  if (axis == 0) {
    std::size_t r0 = 0;
    for (const auto& p : parts) {
      std::memcpy(out.data().data() + r0 * cols, p.data().data(),
                  p.size() * sizeof(double));
      r0 += p.rows();
    }
  } else {
    std::size_t c0 = 0;
    for (const auto& p : parts) {
      for (std::size_t i = 0; i < rows; ++i)
        std::memcpy(out.data().data() + i * cols + c0, p.data().data() + i * p.cols(),
                    p.cols() * sizeof(double));
      c0 += p.cols();
    }
  }
  if (Tape::active() != nullptr && rg) {
    auto so = out.storage();
    auto kparts = parts;
    auto ko = out;
    Tape::active()->record([=]() {
      (void)ko;
      if (so->g.empty()) return;
      if (axis == 0) {
        std::size_t r0 = 0;
        for (const auto& p : kparts) {
          if (p.requires_grad()) {
            p.storage()->ensure_grad();
            auto& g = p.storage()->g;
            for (std::size_t i = 0; i < p.size(); ++i) g[i] += so->g[r0 * cols + i];
          }
          r0 += p.rows();
        }
      } else {
        std::size_t c0 = 0;
        for (const auto& p : kparts) {
          if (p.requires_grad()) {
            p.storage()->ensure_grad();
            auto& g = p.storage()->g;
            for (std::size_t i = 0; i < rows; ++i)
              for (std::size_t j = 0; j < p.cols(); ++j)
                g[i * p.cols() + j] += so->g[i * cols + c0 + j];
          }
          c0 += p.cols();
        }
      }
    });
  }
  return out;
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
  if (begin > end || end > a.rows()) {
    throw UsageError("slice_rows: [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") out of range for " + shape_str(a));
  }
  const std::size_t n = a.cols(), m = end - begin;
  Tensor out = Tensor::zeros(m, n, a.requires_grad());
  std::memcpy(out.data().data(), a.data().data() + begin * n, m * n * sizeof(double));
  if (tape_on(out)) {
    auto sa = a.storage(), so = out.storage();
    auto ka = a, ko = out;
    Tape::active()->record([=]() {
      (void)ka; (void)ko;
      if (so->g.empty()) return;
      sa->ensure_grad();
      for (std::size_t i = 0; i < m * n; ++i) sa->g[begin * n + i] += so->g[i];
    });
  }
  return out;
}

Tensor gather_rows(const Tensor& a, const std::vector<std::size_t>& idx) {
  const std::size_t n = a.cols();
  Tensor out = Tensor::zeros(idx.size(), n, a.requires_grad());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= a.rows())
      throw UsageError("gather_rows: index " + std::to_string(idx[i]) + " out of range for " +
                       shape_str(a));
    std::memcpy(out.data().data() + i * n, a.data().data() + idx[i] * n, n * sizeof(double));
  }
  if (tape_on(out)) {
    auto sa = a.storage(), so = out.storage();
    auto ka = a, ko = out;
    auto kidx = idx;
    Tape::active()->record([=]() {
      (void)ka; (void)ko;
      if (so->g.empty()) return;
      sa->ensure_grad();
      for (std::size_t i = 0; i < kidx.size(); ++i)
        for (std::size_t j = 0; j < n; ++j) sa->g[kidx[i] * n + j] += so->g[i * n + j];
    });
  }
  return out;
}

Tensor dropout(const Tensor& a, double p, std::mt19937_64& rng, bool training) {
  if (p < 0.0 || p >= 1.0) throw UsageError("dropout: p must be in [0,1)");
  if (!training || p == 0.0) return a;
  const double keep = 1.0 - p;
  auto mask = std::make_shared<std::vector<double>>(a.size());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& m : *mask) m = (u(rng) < keep) ? 1.0 / keep : 0.0;
  Tensor out = Tensor::zeros(a.rows(), a.cols(), a.requires_grad());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * (*mask)[i];
  if (tape_on(out)) {
    auto sa = a.storage(), so = out.storage();
    auto ka = a, ko = out;
    Tape::active()->record([=]() {
      (void)ka; (void)ko;
      if (so->g.empty()) return;
      sa->ensure_grad();
      for (std::size_t i = 0; i < sa->g.size(); ++i) sa->g[i] += so->g[i] * (*mask)[i];
    });
  }
  return out;
}

Tensor l2_norm_rows(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  constexpr double kTiny = 1e-12;
  auto norms = std::make_shared<std::vector<double>>(m, 0.0);
  Tensor out = Tensor::zeros(m, n, a.requires_grad());
  for (std::size_t i = 0; i < m; ++i) {
    const double* x = a.data().data() + i * n;
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += x[j] * x[j];
    const double nn = std::sqrt(s);
    (*norms)[i] = nn;
    if (nn > kTiny) {
      double* y = out.data().data() + i * n;
      for (std::size_t j = 0; j < n; ++j) y[j] = x[j] / nn;
    }
  }
  if (tape_on(out)) {
    auto sa = a.storage(), so = out.storage();
    auto ka = a, ko = out;
    Tape::active()->record([=]() {
      (void)ka; (void)ko;
      if (so->g.empty()) return;
      sa->ensure_grad();
      for (std::size_t i = 0; i < m; ++i) {
        const double nn = (*norms)[i];
        if (nn <= kTiny) continue;
        const double* y = so->v.data() + i * n;
        const double* gy = so->g.data() + i * n;
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += gy[j] * y[j];
        for (std::size_t j = 0; j < n; ++j) sa->g[i * n + j] += (gy[j] - y[j] * dot) / nn;
      }
    });
  }
  return out;
}

Tensor row_sums(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  Tensor out = Tensor::zeros(m, 1, a.requires_grad());
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    const double* x = a.data().data() + i * n;
    for (std::size_t j = 0; j < n; ++j) s += x[j];
    out.data()[i] = s;
  }
  if (tape_on(out)) {
    auto sa = a.storage(), so = out.storage();
    auto ka = a, ko = out;
    Tape::active()->record([=]() {
      (void)ka; (void)ko;
      if (so->g.empty()) return;
      sa->ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) sa->g[i * n + j] += so->g[i];
    });
  }
  return out;
}

Tensor scale_rows(const Tensor& a, const Tensor& c) {
  if (c.rows() != a.rows() || c.cols() != 1) {
    throw UsageError("scale_rows: factors must be [" + std::to_string(a.rows()) +
                     "x1], got " + shape_str(c));
  }
  const std::size_t m = a.rows(), n = a.cols();
  Tensor out = Tensor::zeros(m, n, a.requires_grad() || c.requires_grad());
  for (std::size_t i = 0; i < m; ++i) {
    const double f = c.data()[i];
    for (std::size_t j = 0; j < n; ++j) out.data()[i * n + j] = a.data()[i * n + j] * f;
  }
  if (tape_on(out)) {
    auto sa = a.storage(), sc = c.storage(), so = out.storage();
    bool ga = a.requires_grad(), gc = c.requires_grad();
    auto ka = a, kc = c, ko = out;
    Tape::active()->record([=]() {
      (void)ka; (void)kc; (void)ko;
      if (so->g.empty()) return;
      if (ga) {
        sa->ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) sa->g[i * n + j] += so->g[i * n + j] * sc->v[i];
      }
      if (gc) {
        sc->ensure_grad();
        for (std::size_t i = 0; i < m; ++i) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += so->g[i * n + j] * sa->v[i * n + j];
          sc->g[i] += acc;
        }
      }
    });
  }
  return out;
}

Tensor scale_cols(const Tensor& a, const Tensor& w) {
  if (w.rows() != 1 || w.cols() != a.cols()) {
    throw UsageError("scale_cols: factors must be [1x" + std::to_string(a.cols()) +
                     "], got " + shape_str(w));
  }
  const std::size_t m = a.rows(), n = a.cols();
  Tensor out = Tensor::zeros(m, n, a.requires_grad() || w.requires_grad());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.data()[i * n + j] = a.data()[i * n + j] * w.data()[j];
  if (tape_on(out)) {
    auto sa = a.storage(), sw = w.storage(), so = out.storage();
    bool ga = a.requires_grad(), gw = w.requires_grad();
    auto ka = a, kw = w, ko = out;
    Tape::active()->record([=]() {
      (void)ka; (void)kw; (void)ko;
      if (so->g.empty()) return;
      if (ga) {
        sa->ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) sa->g[i * n + j] += so->g[i * n + j] * sw->v[j];
      }
      if (gw) {
        sw->ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) sw->g[j] += so->g[i * n + j] * sa->v[i * n + j];
      }
    });
  }
  return out;
}

Tensor safe_recip(const Tensor& a, double eps) {
  Tensor out = Tensor::zeros(a.rows(), a.cols(), a.requires_grad());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a.data()[i];
    out.data()[i] = x > eps ? 1.0 / x : 1.0;
  }
  if (tape_on(out)) {
    auto sa = a.storage(), so = out.storage();
    auto ka = a, ko = out;
    Tape::active()->record([=]() {
      (void)ka; (void)ko;
      if (so->g.empty()) return;
      sa->ensure_grad();
      for (std::size_t i = 0; i < sa->g.size(); ++i) {
        const double x = sa->v[i];
        if (x > eps) sa->g[i] -= so->g[i] / (x * x);
      }
    });
  }
  return out;
}

Tensor safe_rsqrt(const Tensor& a, double eps) {
  Tensor out = Tensor::zeros(a.rows(), a.cols(), a.requires_grad());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a.data()[i];
    out.data()[i] = x > eps ? 1.0 / std::sqrt(x) : 1.0;
  }
  if (tape_on(out)) {
    auto sa = a.storage(), so = out.storage();
    auto ka = a, ko = out;
    Tape::active()->record([=]() {
      (void)ka; (void)ko;
      if (so->g.empty()) return;
      sa->ensure_grad();
      for (std::size_t i = 0; i < sa->g.size(); ++i) {
        const double x = sa->v[i];
        if (x > eps) sa->g[i] -= 0.5 * so->g[i] / (x * std::sqrt(x));
      }
    });
  }
  return out;
}

Tensor threshold_at(const Tensor& a, double eps) {
  Tensor out = Tensor::zeros(a.rows(), a.cols(), a.requires_grad());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a.data()[i];
    out.data()[i] = x >= eps ? x : 0.0;
  }
  if (tape_on(out)) {
    auto sa = a.storage(), so = out.storage();
    auto ka = a, ko = out;
    Tape::active()->record([=]() {
      (void)ka; (void)ko;
      if (so->g.empty()) return;
      sa->ensure_grad();
      for (std::size_t i = 0; i < sa->g.size(); ++i)
        if (sa->v[i] >= eps) sa->g[i] += so->g[i];
    });
  }
  return out;
}

Tensor spmm(const SparseSym& s, const Tensor& x) {
  if (s.n != x.rows()) {
    throw UsageError("spmm: sparse [" + std::to_string(s.n) + "x" + std::to_string(s.n) +
                     "] vs dense " + shape_str(x));
  }
  const std::size_t n = x.cols();
  Tensor out = Tensor::zeros(s.n, n, x.requires_grad());
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (s.val.size() * n > (std::size_t)1 << 16)
#endif
  for (std::ptrdiff_t i = 0; i < (std::ptrdiff_t)s.n; ++i) {
    double* oi = out.data().data() + (std::size_t)i * n;
    for (std::size_t k = s.row_ptr[i]; k < s.row_ptr[i + 1]; ++k) {
      const double v = s.val[k];
      const double* xr = x.data().data() + s.col[k] * n;
      for (std::size_t j = 0; j < n; ++j) oi[j] += v * xr[j];
    }
  }
  if (tape_on(out)) {
    auto sx = x.storage(), so = out.storage();
    auto kx = x, ko = out;
    const SparseSym* sp = &s;  // caller keeps the sparse matrix alive for the epoch
    Tape::active()->record([=]() {
      (void)kx; (void)ko;
      if (so->g.empty()) return;
      sx->ensure_grad();
      // symmetric: d/dx = S^T g = S g
      for (std::size_t i = 0; i < sp->n; ++i) {
        double* gi = sx->g.data() + i * n;
        for (std::size_t k = sp->row_ptr[i]; k < sp->row_ptr[i + 1]; ++k) {
          const double v = sp->val[k];
          const double* gr = so->g.data() + sp->col[k] * n;
          for (std::size_t j = 0; j < n; ++j) gi[j] += v * gr[j];
        }
      }
    });
  }
  return out;
}

Tensor bce_with_logits(const Tensor& logits, const Tensor& targets, const Tensor& mask) {
  require_same_shape(logits, targets, "bce_with_logits");
  require_same_shape(logits, mask, "bce_with_logits(mask)");
  double cnt = 0.0;
  for (double m : mask.data()) cnt += (m != 0.0) ? 1.0 : 0.0;
  if (cnt == 0.0) throw UsageError("bce_with_logits: empty mask");
  double acc = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (mask.data()[i] == 0.0) continue;
    const double z = logits.data()[i];
    const double y = targets.data()[i];
    // max(z,0) - z*y + log(1+exp(-|z|))
    acc += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::fabs(z)));
  }
  Tensor out = Tensor::scalar(acc / cnt, logits.requires_grad());
  if (tape_on(out)) {
    auto sl = logits.storage(), st = targets.storage(), sm = mask.storage(),
         so = out.storage();
    auto kl = logits, kt = targets, km = mask, ko = out;
    Tape::active()->record([=]() {
      (void)kl; (void)kt; (void)km; (void)ko;
      if (so->g.empty()) return;
      sl->ensure_grad();
      const double gout = so->g[0] / cnt;
      for (std::size_t i = 0; i < sl->v.size(); ++i) {
        if (sm->v[i] == 0.0) continue;
        const double z = sl->v[i];
        const double p = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z))
                                  : std::exp(z) / (1.0 + std::exp(z));
        sl->g[i] += gout * (p - st->v[i]);
      }
    });
  }
  return out;
}

namespace init {

Tensor glorot(std::size_t rows, std::size_t cols, std::mt19937_64& rng, bool requires_grad) {
  const double a = std::sqrt(6.0 / (double)(rows + cols));
  return uniform(rows, cols, -a, a, rng, requires_grad);
}

Tensor uniform(std::size_t rows, std::size_t cols, double lo, double hi,
               std::mt19937_64& rng, bool requires_grad) {
  Tensor t = Tensor::zeros(rows, cols, requires_grad);
  const double span = hi - lo;
  for (double& x : t.data()) {
    // 53-bit mantissa draw; portable across standard library implementations
    const double u = (double)(rng() >> 11) * 0x1.0p-53;
    x = lo + span * u;
  }
  return t;
}

}  // namespace init

}  // namespace molgsl

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "molgsl/errors.hpp"

namespace molgsl {

namespace detail {

struct Storage {
  std::vector<double> v;  // row-major values, size rows*cols
  std::vector<double> g;  // gradient buffer; empty until materialized
  std::size_t rows = 0;
  std::size_t cols = 0;
  bool requires_grad = false;

  Storage(std::size_t r, std::size_t c, bool rg);
  void ensure_grad();
};

}  // namespace detail

// Allocation statistics, used by scaling tests to assert that no
// quadratic-in-N buffer is ever materialized on the anchor path.
namespace alloc_stats {
void reset();
std::uint64_t max_single_alloc_elems();
std::uint64_t total_allocs();
}  // namespace alloc_stats

// Dense 2-D array of 64-bit floats participating in reverse-mode autodiff.
// Value-semantic handle; copies share storage. Scalars are 1x1, row vectors
// 1xd, column vectors nx1.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::size_t rows, std::size_t cols, bool requires_grad = false);
  static Tensor full(std::size_t rows, std::size_t cols, double value,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor from(std::size_t rows, std::size_t cols, std::vector<double> values,
                     bool requires_grad = false);

  bool defined() const { return s_ != nullptr; }
  std::size_t rows() const { return s_->rows; }
  std::size_t cols() const { return s_->cols; }
  std::size_t size() const { return s_->v.size(); }

  double item() const;
  double at(std::size_t i, std::size_t j) const { return s_->v[i * s_->cols + j]; }

  std::vector<double>& data() { return s_->v; }
  const std::vector<double>& data() const { return s_->v; }

  bool requires_grad() const { return s_->requires_grad; }
  void set_requires_grad(bool rg) { s_->requires_grad = rg; }
  bool has_grad() const { return !s_->g.empty(); }
  const std::vector<double>& grad() const;
  std::vector<double>& grad_buffer();  // materializes zeros if absent
  void zero_grad();

  // Same values, cut from the tape (requires_grad = false, fresh storage).
  Tensor detach() const;

  detail::Storage* storage() const { return s_.get(); }

 private:
  explicit Tensor(std::shared_ptr<detail::Storage> s) : s_(std::move(s)) {}
  std::shared_ptr<detail::Storage> s_;

  friend Tensor make_like(const Tensor&, std::size_t, std::size_t, bool);
  friend class Tape;
};

Tensor make_like(const Tensor& src, std::size_t rows, std::size_t cols, bool requires_grad);

// Ordered record of executed ops. Ops append their adjoint closures while a
// TapeScope is active; backward() replays the record reversed exactly once
// and consumes it.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::function<void()> adjoint) { records_.push_back(std::move(adjoint)); }
  std::size_t size() const { return records_.size(); }
  void clear() { records_.clear(); }

  // Seeds d(loss)/d(loss) = 1 and accumulates grads through the record.
  void backward(const Tensor& loss);

  static Tape* active();

 private:
  std::vector<std::function<void()>> records_;
};

class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* prev_;
};

// Constant sparse symmetric matrix (no gradient of its own); backs the
// fingerprint-similarity adjacency on the dense and transductive paths.
struct SparseSym {
  std::size_t n = 0;
  std::vector<std::size_t> row_ptr;  // size n+1
  std::vector<std::size_t> col;
  std::vector<double> val;

  Tensor to_dense() const;
};

// ---- core ops ------------------------------------------------------------
// Every op validates shapes (UsageError naming both shapes on mismatch),
// computes the forward value and, when a tape is active and an input requires
// grad, records its adjoint.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
// alpha*a + beta*b; b may be a 1xD row vector broadcast over a's rows.
Tensor add(const Tensor& a, const Tensor& b, double alpha = 1.0, double beta = 1.0);
Tensor scalar_mul(const Tensor& a, double c);
// a * s with s a learnable 1x1 tensor (grad flows to both).
Tensor scale(const Tensor& a, const Tensor& s);
Tensor elementwise_mul(const Tensor& a, const Tensor& b);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor row_softmax(const Tensor& a);
Tensor sum(const Tensor& a);   // 1x1
Tensor mean(const Tensor& a);  // 1x1
Tensor mean_rows(const Tensor& a);  // column means, 1xD
Tensor sum_rows(const Tensor& a);   // column sums, 1xD
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);
Tensor gather_rows(const Tensor& a, const std::vector<std::size_t>& idx);
// Inverted dropout; identity when training is false or p == 0.
Tensor dropout(const Tensor& a, double p, std::mt19937_64& rng, bool training);
// Rows scaled to unit L2 norm; all-zero rows stay zero (cosine-0 convention).
Tensor l2_norm_rows(const Tensor& a);
Tensor row_sums(const Tensor& a);  // Nx1
// Row i multiplied by c[i] (c is Nx1).
Tensor scale_rows(const Tensor& a, const Tensor& c);
// Column j multiplied by w[j] (w is 1xD).
Tensor scale_cols(const Tensor& a, const Tensor& w);
// 1/x where x > eps, else 1 (zero-degree rows propagate unscaled).
Tensor safe_recip(const Tensor& a, double eps = 1e-12);
Tensor safe_rsqrt(const Tensor& a, double eps = 1e-12);
// Keeps entries >= eps, zeroes the rest (epsilon-neighborhood sparsification).
Tensor threshold_at(const Tensor& a, double eps);
Tensor spmm(const SparseSym& s, const Tensor& x);
// Mean binary cross-entropy with logits over entries where mask != 0.
Tensor bce_with_logits(const Tensor& logits, const Tensor& targets, const Tensor& mask);

void backward(const Tensor& loss);  // via the active tape

// ---- init helpers ----------------------------------------------------------

namespace init {
Tensor glorot(std::size_t rows, std::size_t cols, std::mt19937_64& rng,
              bool requires_grad = true);
Tensor uniform(std::size_t rows, std::size_t cols, double lo, double hi,
               std::mt19937_64& rng, bool requires_grad = true);
}  // namespace init

}  // namespace molgsl

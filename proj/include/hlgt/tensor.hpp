#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace hlgt {

// Shape/contract violations (mismatched dimensions, empty inputs, ...).
class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

// NaN/Inf detected in a value buffer. Never silent: the offending op and
// tensor name (when set) are part of the message.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Misuse of a tape: double backward, non-scalar loss, detached loss.
class TapeError : public std::runtime_error {
 public:
  explicit TapeError(const std::string& what) : std::runtime_error(what) {}
};

template <class S>
class TapeT;

template <class S>
struct TensorStorage {
  int64_t rows = 0;
  int64_t cols = 0;
  std::vector<S> data;
  std::vector<S> grad;  // empty until a gradient is first accumulated
  bool requires_grad = false;
  std::string name;
  const void* producer = nullptr;  // tape that recorded the producing op
};

// Dense row-major matrix with reverse-mode gradients. Copies are shallow
// (shared storage); values are written once at creation and treated as
// immutable afterwards, except for the grad buffer and explicit parameter
// updates between steps.
template <class S>
class TensorT {
 public:
  TensorT() = default;

  TensorT(int64_t rows, int64_t cols, S fill = S(0), bool requires_grad = false)
      : st_(std::make_shared<TensorStorage<S>>()) {
    if (rows <= 0 || cols <= 0)
      throw ShapeError("tensor dimensions must be positive, got " +
                       std::to_string(rows) + "x" + std::to_string(cols));
    st_->rows = rows;
    st_->cols = cols;
    st_->data.assign(static_cast<size_t>(rows * cols), fill);
    st_->requires_grad = requires_grad;
  }

  static TensorT from(int64_t rows, int64_t cols, std::vector<S> values,
                      bool requires_grad = false) {
    TensorT t(rows, cols, S(0), requires_grad);
    if (values.size() != t.st_->data.size())
      throw ShapeError("tensor data length " + std::to_string(values.size()) +
                       " does not match shape " + std::to_string(rows) + "x" +
                       std::to_string(cols));
    t.st_->data = std::move(values);
    return t;
  }

  static TensorT scalar(S v, bool requires_grad = false) {
    return from(1, 1, {v}, requires_grad);
  }

  static TensorT identity(int64_t n) {
    TensorT t(n, n);
    for (int64_t i = 0; i < n; ++i) t.at(i, i) = S(1);
    return t;
  }

  bool defined() const { return st_ != nullptr; }
  int64_t rows() const { return st_->rows; }
  int64_t cols() const { return st_->cols; }
  int64_t size() const { return st_->rows * st_->cols; }

  S& at(int64_t r, int64_t c) { return st_->data[static_cast<size_t>(r * st_->cols + c)]; }
  S at(int64_t r, int64_t c) const { return st_->data[static_cast<size_t>(r * st_->cols + c)]; }

  std::vector<S>& values() { return st_->data; }
  const std::vector<S>& values() const { return st_->data; }

  // Scalar extraction; only valid for 1x1 tensors.
  S item() const {
    if (size() != 1) throw ShapeError("item() requires a 1x1 tensor");
    return st_->data[0];
  }

  bool requires_grad() const { return st_->requires_grad; }
  void set_requires_grad(bool v) { st_->requires_grad = v; }

  const std::string& name() const { return st_->name; }
  TensorT& set_name(std::string n) {
    st_->name = std::move(n);
    return *this;
  }

  bool has_grad() const { return !st_->grad.empty(); }

  // Grad buffer, allocated zeroed on first touch. Same shape as data.
  std::vector<S>& grad() {
    if (st_->grad.empty()) st_->grad.assign(st_->data.size(), S(0));
    return st_->grad;
  }
  const std::vector<S>& grad() const {
    if (st_->grad.empty())
      throw TapeError("no gradient available for tensor '" + st_->name + "'");
    return st_->grad;
  }

  void zero_grad() {
    if (!st_->grad.empty()) std::fill(st_->grad.begin(), st_->grad.end(), S(0));
  }

  // Identity of the underlying storage; used for parameter registries.
  const void* id() const { return st_.get(); }

  TensorStorage<S>* storage() { return st_.get(); }
  const TensorStorage<S>* storage() const { return st_.get(); }

 private:
  std::shared_ptr<TensorStorage<S>> st_;
};

// Ordered record of the primitive ops of one forward pass. Each node's
// closure holds references to its input/output storages and any saved
// activations; nodes are appended in execution order, so a single reverse
// sweep is a valid reverse-topological traversal.
//
// A tape is single-owner. Ops discover the active tape through a
// thread-local pointer set by activate(); with no active tape, ops run
// pure forward (inference / finite differencing).
template <class S>
class TapeT {
 public:
  TapeT() = default;
  TapeT(const TapeT&) = delete;
  TapeT& operator=(const TapeT&) = delete;

  class Scope {
   public:
    explicit Scope(TapeT* t) : prev_(current_) { current_ = t; }
    ~Scope() { current_ = prev_; }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    TapeT* prev_;
  };

  [[nodiscard]] Scope activate() { return Scope(this); }
  static TapeT* current() { return current_; }

  void record(const char* op, std::function<void()> backward) {
    nodes_.push_back(Node{op, std::move(backward)});
  }

  void mark_output(TensorT<S>& t) const { t.storage()->producer = this; }
  bool produced(const TensorT<S>& t) const { return t.storage()->producer == this; }

  size_t node_count() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  // Append another tape's nodes after this one's. Used to merge branch
  // tapes recorded concurrently: the caller fixes the merge order, which
  // keeps backward bitwise deterministic regardless of completion order.
  void absorb(TapeT&& branch) {
    for (auto& n : branch.nodes_) nodes_.push_back(std::move(n));
    branch.nodes_.clear();
  }

  // Reverse sweep seeding d(loss)/d(loss) = 1. Every node runs exactly
  // once; gradients accumulate additively into input grad buffers.
  void backward(TensorT<S>& loss) {
    if (consumed_)
      throw TapeError("backward already ran on this tape; reset before reuse");
    if (!loss.defined() || loss.size() != 1)
      throw TapeError("backward requires a scalar (1x1) loss");
    if (!produced(loss))
      throw TapeError("loss tensor is detached from this tape");
    loss.grad()[0] += S(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->backward();
    consumed_ = true;
  }

  void reset() {
    nodes_.clear();
    consumed_ = false;
  }

 private:
  struct Node {
    const char* op;
    std::function<void()> backward;
  };
  std::vector<Node> nodes_;
  bool consumed_ = false;
  static thread_local TapeT* current_;
};

template <class S>
thread_local TapeT<S>* TapeT<S>::current_ = nullptr;

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;
using Tape = TapeT<float>;
using TapeD = TapeT<double>;

// Throws NumericError on the first NaN/Inf in t's values.
template <class S>
void check_finite(const TensorT<S>& t, const char* op);

// Copy values across scalar types (float model <-> double oracle).
template <class Dst, class Src>
TensorT<Dst> cast_tensor(const TensorT<Src>& t) {
  std::vector<Dst> v(t.values().begin(), t.values().end());
  return TensorT<Dst>::from(t.rows(), t.cols(), std::move(v), t.requires_grad());
}

}  // namespace hlgt

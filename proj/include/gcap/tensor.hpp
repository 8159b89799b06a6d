#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "gcap/error.hpp"

namespace gcap {

#ifdef GCAP_FLOAT32
using real = float;  // fast mode; gradient checking refuses to run
#else
using real = double;
#endif

// Deterministic seeded generator. Distributions are derived from raw
// mt19937_64 output by hand so the stream is identical on every platform.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t raw() { return gen_(); }

    // [0, 1), 53-bit resolution
    double uniform() { return static_cast<double>(raw() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // standard normal via Box-Muller
    double normal();

    // [0, n); n must be positive
    std::size_t index(std::size_t n);

  private:
    std::mt19937_64 gen_;
};

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

// Dense row-major array of reals. Copies are shallow: they share the value
// buffer, which is also how a tensor keeps its identity on a Tape across
// forward and backward.
class Tensor {
  public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<real> values, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, real value, bool requires_grad = false);
    static Tensor scalar(real value);
    // rank-1 convenience
    static Tensor vector(std::vector<real> values, bool requires_grad = false);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t numel() const;
    // rank-1 tensors count as a single row
    std::size_t rows() const { return rank() == 2 ? shape_[0] : 1; }
    std::size_t cols() const { return rank() == 2 ? shape_[1] : numel(); }

    bool defined() const { return data_ != nullptr; }
    std::span<const real> data() const { return {data_->data(), data_->size()}; }
    std::span<real> mutable_data() { return {data_->data(), data_->size()}; }
    const std::shared_ptr<std::vector<real>>& buffer() const { return data_; }

    real value() const;               // numel()==1 only
    real at(std::size_t i) const { return (*data_)[i]; }
    real at(std::size_t r, std::size_t c) const { return (*data_)[r * shape_[1] + c]; }

    bool requires_grad() const { return requires_grad_; }
    void set_requires_grad(bool v) { requires_grad_ = v; }

    // Identifier into the recording that last saw this tensor; bookkeeping
    // only, node lookup goes through the buffer.
    int node_id() const { return node_id_; }

  private:
    friend class Tape;
    Shape shape_;
    std::shared_ptr<std::vector<real>> data_;
    bool requires_grad_ = false;
    mutable int node_id_ = -1;
};

// One recorded forward pass. Ops append records in execution order, which is
// a topological order by construction; backward walks them once in reverse.
// A Tape is single-threaded and single-use: record, backward, read gradients.
class Tape {
  public:
    using BackwardFn = std::function<void(Tape&, std::span<const real> out_grad)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;
    ~Tape();

    // RAII activation; ops record onto the innermost active tape.
    class Scope {
      public:
        explicit Scope(Tape& tape);
        ~Scope();
        Scope(const Scope&) = delete;
        Scope& operator=(const Scope&) = delete;

      private:
        Tape* previous_;
    };

    static Tape* current();

    // Registers the tensor as a leaf if unseen and returns its node id.
    int node_of(const Tensor& t);

    // Registers an op's output tensor and its backward rule. Public so tests
    // can record custom (including deliberately wrong) rules.
    void emit(const char* kind, std::vector<int> inputs, const Tensor& output, BackwardFn backward);

    bool has_node(const Tensor& t) const;
    std::size_t op_count() const { return ops_.size(); }

    // Reverse traversal from a scalar loss; callable once per tape.
    void backward(const Tensor& loss);

    // Gradient of the loss w.r.t. t; zeros when t never influenced the loss.
    std::vector<real> grad(const Tensor& t) const;

    // Accumulation buffer for a node, zero-initialized on first access.
    // Intended for backward rules.
    std::vector<real>& grad_buf(int node);

  private:
    struct NodeInfo {
        std::shared_ptr<const std::vector<real>> buffer;
        std::size_t numel;
    };
    struct OpRecord {
        const char* kind;
        std::vector<int> inputs;
        int output;
        BackwardFn backward;
    };

    std::vector<NodeInfo> nodes_;
    std::vector<OpRecord> ops_;
    std::unordered_map<const std::vector<real>*, int> by_buffer_;
    std::vector<std::vector<real>> grads_;
    bool backward_done_ = false;
};

// ---- linear algebra ----
Tensor matmul(const Tensor& a, const Tensor& b);      // {m,k}x{k,n}; rank-1 promotes to a row/column
Tensor matmul_nt(const Tensor& x, const Tensor& w);   // x . w^T, w stored {out,in}
Tensor matvec(const Tensor& w, const Tensor& x);      // w{out,in} . x{in} -> {out}
Tensor add(const Tensor& a, const Tensor& b);          // same shape
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);          // elementwise
Tensor add_rows(const Tensor& x, const Tensor& b);     // {n,d} + {d} broadcast over rows
Tensor sub_rows(const Tensor& x, const Tensor& b);
Tensor mul_rows(const Tensor& x, const Tensor& s);
Tensor div_rows(const Tensor& x, const Tensor& s);
Tensor concat(const Tensor& a, const Tensor& b);       // rank-1 | rank-2 along the feature axis
Tensor concat_list(std::span<const Tensor> parts);     // rank-1 concatenation
Tensor stack_rows(std::span<const Tensor> rows);       // k tensors {d} -> {k,d}
Tensor row(const Tensor& x, std::size_t i);            // {n,d} -> {d}
Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& idx);  // -> {k,d}
Tensor at_index(const Tensor& v, std::size_t i);       // rank-1 -> scalar
Tensor slice(const Tensor& v, std::size_t begin, std::size_t count);       // rank-1
Tensor dot(const Tensor& a, const Tensor& b);          // rank-1, rank-1 -> scalar
Tensor weighted_sum_rows(const Tensor& x, const Tensor& w);  // sum_i w_i * x_i -> {d}
Tensor mean_rows(const Tensor& x);                     // {n,d} -> {d}
Tensor sum(const Tensor& x);                           // -> scalar
Tensor cmul(const Tensor& x, real c);                  // constant scale
Tensor neg(const Tensor& x);

// ---- elementwise activations (total on finite input; log needs x > 0) ----
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor leaky_relu(const Tensor& x, real negative_slope = real(0.2));
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sqrt_eps(const Tensor& x, real eps);            // sqrt(x + eps)

// Row-wise softmax with max subtraction; rank-1 is a single row.
Tensor softmax_rows(const Tensor& x);

// Row lookup with vocabulary bounds checking; table rows index the vocabulary.
Tensor embedding_lookup(const Tensor& table, std::size_t index);

// Inverted dropout: training mode zeroes each element with probability rate
// and scales survivors by 1/(1-rate); eval mode is the identity (the input
// tensor itself).
Tensor dropout(const Tensor& x, real rate, bool training, Rng& rng);

struct BatchNormState {
    Tensor scale;         // learnable, init 1
    Tensor shift;         // learnable, init 0
    Tensor running_mean;  // not learnable, init 0
    Tensor running_var;   // not learnable, init 1
    real eps = real(1e-5);
    real momentum = real(0.1);

    static BatchNormState fresh(std::size_t features);
};

// Training mode standardizes with batch statistics (batch >= 2) and updates
// the running estimates; eval mode uses the running estimates and is
// deterministic. Composed from primitives so backward needs no bespoke rule.
Tensor batch_norm(const Tensor& x, BatchNormState& state, bool training);

}  // namespace gcap

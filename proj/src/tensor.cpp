#include "gcap/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace gcap {

double Rng::normal() {
    double u1 = 0.0;
    do {
        u1 = uniform();
    } while (u1 == 0.0);
    const double u2 = uniform();
    constexpr double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

std::size_t Rng::index(std::size_t n) {
    if (n == 0) throw ConfigError("Rng::index: n must be positive");
    return static_cast<std::size_t>(raw() % n);
}

std::string shape_str(const Shape& s) {
    std::ostringstream out;
    out << "{";
    for (std::size_t i = 0; i < s.size(); ++i) out << (i ? "," : "") << s[i];
    out << "}";
    return out.str();
}

namespace {

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t e : s) n *= e;
    return n;
}

[[noreturn]] void shape_fail(const char* op, const Tensor& a, const Tensor& b) {
    throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()) + " do not conform");
}

[[noreturn]] void shape_fail(const char* op, const Tensor& a, const std::string& detail) {
    throw ShapeError(std::string(op) + ": shape " + shape_str(a.shape()) + " " + detail);
}

void require_rank1(const char* op, const Tensor& t) {
    if (t.rank() != 1) shape_fail(op, t, "must be rank-1");
}

void require_rank2(const char* op, const Tensor& t) {
    if (t.rank() != 2) shape_fail(op, t, "must be rank-2");
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(Shape shape, std::vector<real> values, bool requires_grad)
    : shape_(std::move(shape)),
      data_(std::make_shared<std::vector<real>>(std::move(values))),
      requires_grad_(requires_grad) {
    if (shape_numel(shape_) != data_->size())
        throw ShapeError("Tensor: shape " + shape_str(shape_) + " does not match " +
                         std::to_string(data_->size()) + " values");
    for (std::size_t e : shape_)
        if (e == 0) throw ShapeError("Tensor: zero extent in shape " + shape_str(shape_));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    std::vector<real> v(shape_numel(shape), real(0));
    return Tensor(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::full(Shape shape, real value, bool requires_grad) {
    std::vector<real> v(shape_numel(shape), value);
    return Tensor(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::scalar(real value) { return Tensor({1}, {value}); }

Tensor Tensor::vector(std::vector<real> values, bool requires_grad) {
    Shape s{values.size()};
    return Tensor(std::move(s), std::move(values), requires_grad);
}

std::size_t Tensor::numel() const { return data_ ? data_->size() : 0; }

real Tensor::value() const {
    if (numel() != 1) throw ShapeError("Tensor::value: tensor " + shape_str(shape_) + " is not scalar");
    return (*data_)[0];
}

// ---------------------------------------------------------------------------
// Tape

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape::~Tape() = default;

Tape::Scope::Scope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
Tape::Scope::~Scope() { g_active_tape = previous_; }

Tape* Tape::current() { return g_active_tape; }

int Tape::node_of(const Tensor& t) {
    if (!t.defined()) throw Error("Tape::node_of: undefined tensor");
    auto it = by_buffer_.find(t.buffer().get());
    if (it != by_buffer_.end()) {
        t.node_id_ = it->second;
        return it->second;
    }
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(NodeInfo{t.buffer(), t.numel()});
    by_buffer_.emplace(t.buffer().get(), id);
    t.node_id_ = id;
    return id;
}

void Tape::emit(const char* kind, std::vector<int> inputs, const Tensor& output, BackwardFn backward) {
    if (backward_done_) throw Error("Tape: cannot record after backward");
    const int out_id = node_of(output);
    ops_.push_back(OpRecord{kind, std::move(inputs), out_id, std::move(backward)});
}

bool Tape::has_node(const Tensor& t) const {
    return t.defined() && by_buffer_.count(t.buffer().get()) > 0;
}

std::vector<real>& Tape::grad_buf(int node) {
    auto& g = grads_[static_cast<std::size_t>(node)];
    if (g.empty()) g.assign(nodes_[static_cast<std::size_t>(node)].numel, real(0));
    return g;
}

void Tape::backward(const Tensor& loss) {
    if (backward_done_) throw Error("Tape::backward: already run on this recording");
    if (loss.numel() != 1)
        throw ShapeError("backward: loss must be scalar, got " + shape_str(loss.shape()));
    auto it = by_buffer_.find(loss.buffer().get());
    if (it == by_buffer_.end()) throw Error("backward: loss is not part of this recording");
    backward_done_ = true;

    grads_.assign(nodes_.size(), {});
    grad_buf(it->second)[0] = real(1);

    for (auto op = ops_.rbegin(); op != ops_.rend(); ++op) {
        const auto& g = grads_[static_cast<std::size_t>(op->output)];
        if (g.empty()) continue;  // output never influenced the loss
        op->backward(*this, {g.data(), g.size()});
    }
}

std::vector<real> Tape::grad(const Tensor& t) const {
    auto it = by_buffer_.find(t.buffer().get());
    if (it != by_buffer_.end()) {
        const auto& g = grads_[static_cast<std::size_t>(it->second)];
        if (!g.empty()) return g;
    }
    return std::vector<real>(t.numel(), real(0));
}

// ---------------------------------------------------------------------------
// op helpers

namespace {

using Buffer = std::shared_ptr<const std::vector<real>>;

// Record a single-input op if a tape is active.
template <class F>
void record1(const char* kind, const Tensor& a, const Tensor& out, F&& fn) {
    if (Tape* t = Tape::current()) {
        const int ia = t->node_of(a);
        t->emit(kind, {ia}, out,
                [ia, fn = std::forward<F>(fn)](Tape& tape, std::span<const real> dy) {
                    fn(tape.grad_buf(ia), dy);
                });
    }
}

template <class F>
void record2(const char* kind, const Tensor& a, const Tensor& b, const Tensor& out, F&& fn) {
    if (Tape* t = Tape::current()) {
        const int ia = t->node_of(a);
        const int ib = t->node_of(b);
        t->emit(kind, {ia, ib}, out,
                [ia, ib, fn = std::forward<F>(fn)](Tape& tape, std::span<const real> dy) {
                    fn(tape.grad_buf(ia), tape.grad_buf(ib), dy);
                });
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() > 2 || b.rank() > 2 || a.rank() == 0 || b.rank() == 0)
        shape_fail("matmul", a, b);
    const std::size_t m = a.rank() == 2 ? a.shape()[0] : 1;
    const std::size_t k = a.rank() == 2 ? a.shape()[1] : a.shape()[0];
    const std::size_t kb = b.rank() == 2 ? b.shape()[0] : b.shape()[0];
    const std::size_t n = b.rank() == 2 ? b.shape()[1] : 1;
    if (k != kb) shape_fail("matmul", a, b);

    std::vector<real> y(m * n, real(0));
    const auto av = a.data();
    const auto bv = b.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            const real aip = av[i * k + p];
            if (aip == real(0)) continue;
            const real* brow = bv.data() + p * n;
            real* yrow = y.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) yrow[j] += aip * brow[j];
        }

    Shape out_shape;
    if (a.rank() == 1 && b.rank() == 1)
        out_shape = {1};
    else if (a.rank() == 1)
        out_shape = {n};
    else if (b.rank() == 1)
        out_shape = {m};
    else
        out_shape = {m, n};
    Tensor out(std::move(out_shape), std::move(y));

    record2("matmul", a, b, out,
            [m, k, n, ad = Buffer(a.buffer()), bd = Buffer(b.buffer())](
                std::vector<real>& da, std::vector<real>& db, std::span<const real> dy) {
                // da = dy . b^T ; db = a^T . dy
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                        real acc = real(0);
                        const real* dyrow = dy.data() + i * n;
                        const real* brow = bd->data() + p * n;
                        for (std::size_t j = 0; j < n; ++j) acc += dyrow[j] * brow[j];
                        da[i * k + p] += acc;
                    }
                for (std::size_t p = 0; p < k; ++p)
                    for (std::size_t j = 0; j < n; ++j) {
                        real acc = real(0);
                        for (std::size_t i = 0; i < m; ++i)
                            acc += (*ad)[i * k + p] * dy[i * n + j];
                        db[p * n + j] += acc;
                    }
            });
    return out;
}

Tensor matmul_nt(const Tensor& x, const Tensor& w) {
    require_rank2("matmul_nt", w);
    const std::size_t n = x.rows();
    const std::size_t k = x.cols();
    const std::size_t m = w.shape()[0];
    if (w.shape()[1] != k) shape_fail("matmul_nt", x, w);

    std::vector<real> y(n * m, real(0));
    const auto xv = x.data();
    const auto wv = w.data();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            real acc = real(0);
            const real* xrow = xv.data() + i * k;
            const real* wrow = wv.data() + j * k;
            for (std::size_t p = 0; p < k; ++p) acc += xrow[p] * wrow[p];
            y[i * m + j] = acc;
        }

    Tensor out(x.rank() == 1 ? Shape{m} : Shape{n, m}, std::move(y));
    record2("matmul_nt", x, w, out,
            [n, k, m, xd = Buffer(x.buffer()), wd = Buffer(w.buffer())](
                std::vector<real>& dx, std::vector<real>& dw, std::span<const real> dy) {
                // dx = dy . w ; dw = dy^T . x
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < m; ++j) {
                        const real d = dy[i * m + j];
                        if (d == real(0)) continue;
                        const real* wrow = wd->data() + j * k;
                        real* dxrow = dx.data() + i * k;
                        for (std::size_t p = 0; p < k; ++p) dxrow[p] += d * wrow[p];
                        const real* xrow = xd->data() + i * k;
                        real* dwrow = dw.data() + j * k;
                        for (std::size_t p = 0; p < k; ++p) dwrow[p] += d * xrow[p];
                    }
            });
    return out;
}

Tensor matvec(const Tensor& w, const Tensor& x) {
    require_rank1("matvec", x);
    return matmul_nt(x, w);
}

namespace {

Tensor binary_same_shape(const char* kind, const Tensor& a, const Tensor& b,
                         real (*fwd)(real, real), void (*bwd)(real, real, real, real&, real&)) {
    if (a.shape() != b.shape()) shape_fail(kind, a, b);
    std::vector<real> y(a.numel());
    const auto av = a.data();
    const auto bv = b.data();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = fwd(av[i], bv[i]);
    Tensor out(a.shape(), std::move(y));
    record2(kind, a, b, out,
            [ad = Buffer(a.buffer()), bd = Buffer(b.buffer()), bwd](
                std::vector<real>& da, std::vector<real>& db, std::span<const real> dy) {
                for (std::size_t i = 0; i < dy.size(); ++i)
                    bwd((*ad)[i], (*bd)[i], dy[i], da[i], db[i]);
            });
    return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_same_shape(
        "add", a, b, [](real x, real y) { return x + y; },
        [](real, real, real d, real& da, real& db) {
            da += d;
            db += d;
        });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_same_shape(
        "sub", a, b, [](real x, real y) { return x - y; },
        [](real, real, real d, real& da, real& db) {
            da += d;
            db -= d;
        });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_same_shape(
        "mul", a, b, [](real x, real y) { return x * y; },
        [](real x, real y, real d, real& da, real& db) {
            da += d * y;
            db += d * x;
        });
}

namespace {

enum class RowBroadcast { add, sub, mul, div };

Tensor rows_broadcast(const char* kind, RowBroadcast mode, const Tensor& x, const Tensor& b) {
    require_rank1(kind, b);
    const std::size_t n = x.rows();
    const std::size_t d = x.cols();
    if (b.numel() != d) shape_fail(kind, x, b);

    std::vector<real> y(x.numel());
    const auto xv = x.data();
    const auto bv = b.data();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            const real xij = xv[i * d + j];
            const real bj = bv[j];
            real r = 0;
            switch (mode) {
                case RowBroadcast::add: r = xij + bj; break;
                case RowBroadcast::sub: r = xij - bj; break;
                case RowBroadcast::mul: r = xij * bj; break;
                case RowBroadcast::div: r = xij / bj; break;
            }
            y[i * d + j] = r;
        }
    Tensor out(x.shape(), std::move(y));
    record2(kind, x, b, out,
            [n, d, mode, xd = Buffer(x.buffer()), bd = Buffer(b.buffer())](
                std::vector<real>& dx, std::vector<real>& db, std::span<const real> dy) {
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < d; ++j) {
                        const real dyij = dy[i * d + j];
                        const real bj = (*bd)[j];
                        const real xij = (*xd)[i * d + j];
                        switch (mode) {
                            case RowBroadcast::add:
                                dx[i * d + j] += dyij;
                                db[j] += dyij;
                                break;
                            case RowBroadcast::sub:
                                dx[i * d + j] += dyij;
                                db[j] -= dyij;
                                break;
                            case RowBroadcast::mul:
                                dx[i * d + j] += dyij * bj;
                                db[j] += dyij * xij;
                                break;
                            case RowBroadcast::div:
                                dx[i * d + j] += dyij / bj;
                                db[j] -= dyij * xij / (bj * bj);
                                break;
                        }
                    }
            });
    return out;
}

}  // namespace

Tensor add_rows(const Tensor& x, const Tensor& b) { return rows_broadcast("add_rows", RowBroadcast::add, x, b); }
Tensor sub_rows(const Tensor& x, const Tensor& b) { return rows_broadcast("sub_rows", RowBroadcast::sub, x, b); }
Tensor mul_rows(const Tensor& x, const Tensor& s) { return rows_broadcast("mul_rows", RowBroadcast::mul, x, s); }
Tensor div_rows(const Tensor& x, const Tensor& s) { return rows_broadcast("div_rows", RowBroadcast::div, x, s); }

Tensor concat(const Tensor& a, const Tensor& b) {
    if (a.rank() == 1 && b.rank() == 1) {
        const Tensor parts[] = {a, b};
        return concat_list(parts);
    }
    if (a.rank() == 2 && b.rank() == 2 && a.shape()[0] == b.shape()[0]) {
        const std::size_t n = a.shape()[0];
        const std::size_t p = a.shape()[1];
        const std::size_t q = b.shape()[1];
        std::vector<real> y(n * (p + q));
        for (std::size_t i = 0; i < n; ++i) {
            std::copy_n(a.data().data() + i * p, p, y.data() + i * (p + q));
            std::copy_n(b.data().data() + i * q, q, y.data() + i * (p + q) + p);
        }
        Tensor out({n, p + q}, std::move(y));
        record2("concat", a, b, out,
                [n, p, q](std::vector<real>& da, std::vector<real>& db, std::span<const real> dy) {
                    for (std::size_t i = 0; i < n; ++i) {
                        for (std::size_t j = 0; j < p; ++j) da[i * p + j] += dy[i * (p + q) + j];
                        for (std::size_t j = 0; j < q; ++j) db[i * q + j] += dy[i * (p + q) + p + j];
                    }
                });
        return out;
    }
    shape_fail("concat", a, b);
}

Tensor concat_list(std::span<const Tensor> parts) {
    if (parts.empty()) throw ShapeError("concat_list: no inputs");
    std::size_t total = 0;
    for (const Tensor& p : parts) {
        require_rank1("concat_list", p);
        total += p.numel();
    }
    std::vector<real> y;
    y.reserve(total);
    for (const Tensor& p : parts) y.insert(y.end(), p.data().begin(), p.data().end());
    Tensor out({total}, std::move(y));

    if (Tape* t = Tape::current()) {
        std::vector<int> ids;
        std::vector<std::size_t> sizes;
        ids.reserve(parts.size());
        for (const Tensor& p : parts) {
            ids.push_back(t->node_of(p));
            sizes.push_back(p.numel());
        }
        t->emit("concat_list", ids, out,
                [ids, sizes](Tape& tape, std::span<const real> dy) {
                    std::size_t off = 0;
                    for (std::size_t k = 0; k < ids.size(); ++k) {
                        auto& g = tape.grad_buf(ids[k]);
                        for (std::size_t j = 0; j < sizes[k]; ++j) g[j] += dy[off + j];
                        off += sizes[k];
                    }
                });
    }
    return out;
}

Tensor stack_rows(std::span<const Tensor> rows) {
    if (rows.empty()) throw ShapeError("stack_rows: no inputs");
    const std::size_t d = rows.front().numel();
    for (const Tensor& r : rows) {
        require_rank1("stack_rows", r);
        if (r.numel() != d) shape_fail("stack_rows", rows.front(), r);
    }
    std::vector<real> y;
    y.reserve(rows.size() * d);
    for (const Tensor& r : rows) y.insert(y.end(), r.data().begin(), r.data().end());
    Tensor out({rows.size(), d}, std::move(y));

    if (Tape* t = Tape::current()) {
        std::vector<int> ids;
        ids.reserve(rows.size());
        for (const Tensor& r : rows) ids.push_back(t->node_of(r));
        t->emit("stack_rows", ids, out,
                [ids, d](Tape& tape, std::span<const real> dy) {
                    for (std::size_t k = 0; k < ids.size(); ++k) {
                        auto& g = tape.grad_buf(ids[k]);
                        for (std::size_t j = 0; j < d; ++j) g[j] += dy[k * d + j];
                    }
                });
    }
    return out;
}

Tensor row(const Tensor& x, std::size_t i) {
    require_rank2("row", x);
    const std::size_t n = x.shape()[0];
    const std::size_t d = x.shape()[1];
    if (i >= n)
        shape_fail("row", x, "has no row " + std::to_string(i));
    std::vector<real> y(x.data().begin() + static_cast<std::ptrdiff_t>(i * d),
                        x.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * d));
    Tensor out({d}, std::move(y));
    record1("row", x, out, [i, d](std::vector<real>& dx, std::span<const real> dy) {
        for (std::size_t j = 0; j < d; ++j) dx[i * d + j] += dy[j];
    });
    return out;
}

Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& idx) {
    require_rank2("gather_rows", x);
    const std::size_t n = x.shape()[0];
    const std::size_t d = x.shape()[1];
    if (idx.empty()) throw ShapeError("gather_rows: empty index list");
    std::vector<real> y;
    y.reserve(idx.size() * d);
    for (std::size_t i : idx) {
        if (i >= n) shape_fail("gather_rows", x, "has no row " + std::to_string(i));
        y.insert(y.end(), x.data().begin() + static_cast<std::ptrdiff_t>(i * d),
                 x.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * d));
    }
    Tensor out({idx.size(), d}, std::move(y));
    record1("gather_rows", x, out, [idx, d](std::vector<real>& dx, std::span<const real> dy) {
        for (std::size_t k = 0; k < idx.size(); ++k)
            for (std::size_t j = 0; j < d; ++j) dx[idx[k] * d + j] += dy[k * d + j];
    });
    return out;
}

Tensor at_index(const Tensor& v, std::size_t i) {
    require_rank1("at_index", v);
    if (i >= v.numel()) shape_fail("at_index", v, "has no element " + std::to_string(i));
    Tensor out = Tensor::scalar(v.at(i));
    record1("at_index", v, out,
            [i](std::vector<real>& dv, std::span<const real> dy) { dv[i] += dy[0]; });
    return out;
}

Tensor slice(const Tensor& v, std::size_t begin, std::size_t count) {
    require_rank1("slice", v);
    if (begin + count > v.numel())
        shape_fail("slice", v, "cannot slice [" + std::to_string(begin) + "," +
                                   std::to_string(begin + count) + ")");
    std::vector<real> y(v.data().begin() + static_cast<std::ptrdiff_t>(begin),
                        v.data().begin() + static_cast<std::ptrdiff_t>(begin + count));
    Tensor out({count}, std::move(y));
    record1("slice", v, out, [begin, count](std::vector<real>& dv, std::span<const real> dy) {
        for (std::size_t j = 0; j < count; ++j) dv[begin + j] += dy[j];
    });
    return out;
}

Tensor dot(const Tensor& a, const Tensor& b) {
    require_rank1("dot", a);
    require_rank1("dot", b);
    if (a.numel() != b.numel()) shape_fail("dot", a, b);
    real acc = real(0);
    for (std::size_t i = 0; i < a.numel(); ++i) acc += a.at(i) * b.at(i);
    Tensor out = Tensor::scalar(acc);
    record2("dot", a, b, out,
            [ad = Buffer(a.buffer()), bd = Buffer(b.buffer())](
                std::vector<real>& da, std::vector<real>& db, std::span<const real> dy) {
                for (std::size_t i = 0; i < da.size(); ++i) {
                    da[i] += dy[0] * (*bd)[i];
                    db[i] += dy[0] * (*ad)[i];
                }
            });
    return out;
}

Tensor weighted_sum_rows(const Tensor& x, const Tensor& w) {
    require_rank2("weighted_sum_rows", x);
    require_rank1("weighted_sum_rows", w);
    const std::size_t n = x.shape()[0];
    const std::size_t d = x.shape()[1];
    if (w.numel() != n) shape_fail("weighted_sum_rows", x, w);
    std::vector<real> y(d, real(0));
    for (std::size_t i = 0; i < n; ++i) {
        const real wi = w.at(i);
        for (std::size_t j = 0; j < d; ++j) y[j] += wi * x.at(i, j);
    }
    Tensor out({d}, std::move(y));
    record2("weighted_sum_rows", x, w, out,
            [n, d, xd = Buffer(x.buffer()), wd = Buffer(w.buffer())](
                std::vector<real>& dx, std::vector<real>& dw, std::span<const real> dy) {
                for (std::size_t i = 0; i < n; ++i) {
                    const real wi = (*wd)[i];
                    real acc = real(0);
                    for (std::size_t j = 0; j < d; ++j) {
                        dx[i * d + j] += wi * dy[j];
                        acc += (*xd)[i * d + j] * dy[j];
                    }
                    dw[i] += acc;
                }
            });
    return out;
}

Tensor mean_rows(const Tensor& x) {
    require_rank2("mean_rows", x);
    const std::size_t n = x.shape()[0];
    const std::size_t d = x.shape()[1];
    std::vector<real> y(d, real(0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) y[j] += x.at(i, j);
    for (std::size_t j = 0; j < d; ++j) y[j] /= static_cast<real>(n);
    Tensor out({d}, std::move(y));
    record1("mean_rows", x, out, [n, d](std::vector<real>& dx, std::span<const real> dy) {
        const real inv = real(1) / static_cast<real>(n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) dx[i * d + j] += dy[j] * inv;
    });
    return out;
}

Tensor sum(const Tensor& x) {
    real acc = real(0);
    for (real v : x.data()) acc += v;
    Tensor out = Tensor::scalar(acc);
    record1("sum", x, out, [](std::vector<real>& dx, std::span<const real> dy) {
        for (real& g : dx) g += dy[0];
    });
    return out;
}

Tensor cmul(const Tensor& x, real c) {
    std::vector<real> y(x.numel());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = x.at(i) * c;
    Tensor out(x.shape(), std::move(y));
    record1("cmul", x, out, [c](std::vector<real>& dx, std::span<const real> dy) {
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * c;
    });
    return out;
}

Tensor neg(const Tensor& x) { return cmul(x, real(-1)); }

// ---------------------------------------------------------------------------
// elementwise

namespace {

// dfn receives (x, y) so rules can use whichever is cheaper.
template <class Fn, class Dfn>
Tensor elementwise(const char* kind, const Tensor& x, Fn fn, Dfn dfn) {
    std::vector<real> y(x.numel());
    const auto xv = x.data();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = fn(xv[i]);
    Tensor out(x.shape(), std::move(y));
    record1(kind, x, out,
            [xd = Buffer(x.buffer()), yd = Buffer(out.buffer()), dfn](
                std::vector<real>& dx, std::span<const real> dy) {
                for (std::size_t i = 0; i < dx.size(); ++i)
                    dx[i] += dy[i] * dfn((*xd)[i], (*yd)[i]);
            });
    return out;
}

}  // namespace

Tensor tanh(const Tensor& x) {
    return elementwise(
        "tanh", x, [](real v) { return std::tanh(v); },
        [](real, real y) { return real(1) - y * y; });
}

Tensor sigmoid(const Tensor& x) {
    return elementwise(
        "sigmoid", x, [](real v) { return real(1) / (real(1) + std::exp(-v)); },
        [](real, real y) { return y * (real(1) - y); });
}

Tensor leaky_relu(const Tensor& x, real negative_slope) {
    return elementwise(
        "leaky_relu", x,
        [negative_slope](real v) { return v >= real(0) ? v : negative_slope * v; },
        [negative_slope](real v, real) { return v >= real(0) ? real(1) : negative_slope; });
}

Tensor exp(const Tensor& x) {
    return elementwise(
        "exp", x, [](real v) { return std::exp(v); }, [](real, real y) { return y; });
}

Tensor log(const Tensor& x) {
    return elementwise(
        "log", x, [](real v) { return std::log(v); }, [](real v, real) { return real(1) / v; });
}

Tensor sqrt_eps(const Tensor& x, real eps) {
    return elementwise(
        "sqrt_eps", x, [eps](real v) { return std::sqrt(v + eps); },
        [](real, real y) { return real(0.5) / y; });
}

Tensor softmax_rows(const Tensor& x) {
    const std::size_t n = x.rows();
    const std::size_t d = x.cols();
    std::vector<real> y(x.numel());
    for (std::size_t i = 0; i < n; ++i) {
        const real* xr = x.data().data() + i * d;
        real* yr = y.data() + i * d;
        real mx = xr[0];
        for (std::size_t j = 1; j < d; ++j) mx = std::max(mx, xr[j]);
        real z = real(0);
        for (std::size_t j = 0; j < d; ++j) {
            yr[j] = std::exp(xr[j] - mx);
            z += yr[j];
        }
        for (std::size_t j = 0; j < d; ++j) yr[j] /= z;
    }
    Tensor out(x.shape(), std::move(y));
    record1("softmax_rows", x, out,
            [n, d, yd = Buffer(out.buffer())](std::vector<real>& dx, std::span<const real> dy) {
                for (std::size_t i = 0; i < n; ++i) {
                    const real* yr = yd->data() + i * d;
                    const real* dyr = dy.data() + i * d;
                    real inner = real(0);
                    for (std::size_t j = 0; j < d; ++j) inner += dyr[j] * yr[j];
                    for (std::size_t j = 0; j < d; ++j)
                        dx[i * d + j] += yr[j] * (dyr[j] - inner);
                }
            });
    return out;
}

Tensor embedding_lookup(const Tensor& table, std::size_t index) {
    require_rank2("embedding_lookup", table);
    if (index >= table.shape()[0])
        throw VocabError("embedding_lookup: index " + std::to_string(index) +
                         " out of range for table with " + std::to_string(table.shape()[0]) +
                         " rows");
    return row(table, index);
}

Tensor dropout(const Tensor& x, real rate, bool training, Rng& rng) {
    if (!(rate >= real(0) && rate < real(1)))
        throw ConfigError("dropout: rate must be in [0,1), got " + std::to_string(rate));
    if (!training || rate == real(0)) return x;

    const real keep_scale = real(1) / (real(1) - rate);
    auto mask = std::make_shared<std::vector<real>>(x.numel());
    std::vector<real> y(x.numel());
    for (std::size_t i = 0; i < y.size(); ++i) {
        const real m = rng.uniform() < static_cast<double>(rate) ? real(0) : keep_scale;
        (*mask)[i] = m;
        y[i] = x.at(i) * m;
    }
    Tensor out(x.shape(), std::move(y));
    record1("dropout", x, out, [mask](std::vector<real>& dx, std::span<const real> dy) {
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * (*mask)[i];
    });
    return out;
}

BatchNormState BatchNormState::fresh(std::size_t features) {
    BatchNormState s;
    s.scale = Tensor::full({features}, real(1), true);
    s.shift = Tensor::zeros({features}, true);
    s.running_mean = Tensor::zeros({features});
    s.running_var = Tensor::full({features}, real(1));
    return s;
}

Tensor batch_norm(const Tensor& x, BatchNormState& state, bool training) {
    require_rank2("batch_norm", x);
    const std::size_t n = x.shape()[0];
    const std::size_t d = x.shape()[1];
    if (state.scale.numel() != d)
        shape_fail("batch_norm", x, "does not match state width " + shape_str(state.scale.shape()));

    Tensor normalized;
    if (training) {
        if (n < 2)
            throw ShapeError("batch_norm: training mode needs batch >= 2, got batch of " +
                             std::to_string(n));
        Tensor mu = mean_rows(x);
        Tensor centered = sub_rows(x, mu);
        Tensor var = mean_rows(mul(centered, centered));  // biased, 1/n
        normalized = div_rows(centered, sqrt_eps(var, state.eps));

        // Side effect outside the recording: running estimates, unbiased var.
        const real mom = state.momentum;
        auto rm = state.running_mean.mutable_data();
        auto rv = state.running_var.mutable_data();
        const real unbias = static_cast<real>(n) / static_cast<real>(n - 1);
        for (std::size_t j = 0; j < d; ++j) {
            rm[j] = (real(1) - mom) * rm[j] + mom * mu.at(j);
            rv[j] = (real(1) - mom) * rv[j] + mom * var.at(j) * unbias;
        }
    } else {
        normalized = div_rows(sub_rows(x, state.running_mean), sqrt_eps(state.running_var, state.eps));
    }
    return add_rows(mul_rows(normalized, state.scale), state.shift);
}

}  // namespace gcap

#include <doctest.h>

#include <cmath>

#include "gcap/tensor.hpp"
#include "helpers.hpp"

using namespace gcap;
using test::max_rel_error_fd;
using test::random_tensor;

namespace {

Tensor identity3() { return Tensor({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1}); }

// scalar objective with a fixed cotangent so every output coordinate matters
Tensor weighted(const Tensor& t, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<real> w(t.numel());
    for (real& x : w) x = static_cast<real>(rng.uniform(-1, 1));
    return sum(mul(t, Tensor(t.shape(), std::move(w))));
}

}  // namespace

TEST_CASE("matmul by the identity returns the operand") {
    Tensor a({3, 4}, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12});
    const Tensor out = matmul(identity3(), a);
    REQUIRE(out.shape() == Shape{3, 4});
    for (std::size_t i = 0; i < out.numel(); ++i) CHECK(out.at(i) == a.at(i));
}

TEST_CASE("matmul rejects non-conforming shapes and names both") {
    Tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor b({2, 2}, {1, 2, 3, 4});
    CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("{2,3}"), ShapeError);
}

TEST_CASE("mean_rows averages the rows") {
    const Tensor out = mean_rows(Tensor({2, 2}, {1, 3, 5, 7}));
    REQUIRE(out.shape() == Shape{2});
    CHECK(out.at(0) == 3);
    CHECK(out.at(1) == 5);
}

TEST_CASE("concat joins vectors and passes gradients through") {
    Tensor a = Tensor::vector({1, 2}, true);
    Tensor b = Tensor::vector({3}, true);

    Tape tape;
    Tape::Scope scope(tape);
    const Tensor joined = concat(a, b);
    REQUIRE(joined.shape() == Shape{3});
    CHECK(joined.at(0) == 1);
    CHECK(joined.at(1) == 2);
    CHECK(joined.at(2) == 3);

    tape.backward(sum(joined));
    for (real g : tape.grad(a)) CHECK(g == 1.0);
    for (real g : tape.grad(b)) CHECK(g == 1.0);
}

TEST_CASE("activation fixed points") {
    CHECK(sigmoid(Tensor::scalar(0)).value() == 0.5);
    CHECK(gcap::tanh(Tensor::scalar(0)).value() == 0.0);
    CHECK(leaky_relu(Tensor::scalar(-1)).value() == doctest::Approx(-0.2).epsilon(1e-15));
    CHECK(leaky_relu(Tensor::scalar(2)).value() == 2.0);
    CHECK(gcap::exp(Tensor::scalar(0)).value() == 1.0);
}

TEST_CASE("tanh gradient at zero is one") {
    Tensor x = Tensor::scalar(0);
    x.set_requires_grad(true);
    Tape tape;
    Tape::Scope scope(tape);
    tape.backward(gcap::tanh(x));
    CHECK(tape.grad(x)[0] == 1.0);
}

TEST_CASE("softmax of a constant row is uniform") {
    const Tensor out = softmax_rows(Tensor::vector({0, 0, 0}));
    for (std::size_t i = 0; i < 3; ++i)
        CHECK(out.at(i) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("softmax of [1,2] matches the exponential ratio") {
    const Tensor out = softmax_rows(Tensor::vector({1, 2}));
    CHECK(out.at(0) == doctest::Approx(0.26894).epsilon(1e-4));
    CHECK(out.at(1) == doctest::Approx(0.73106).epsilon(1e-4));
}

TEST_CASE("softmax rows sum to one and shift invariance holds") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(seed);
        const Tensor x = random_tensor(rng, {3, 5}, -10, 10);
        const Tensor y = softmax_rows(x);
        for (std::size_t i = 0; i < 3; ++i) {
            double row = 0;
            for (std::size_t j = 0; j < 5; ++j) {
                CHECK(y.at(i, j) >= 0.0);
                row += y.at(i, j);
            }
            CHECK(row == doctest::Approx(1.0).epsilon(1e-9));
        }
        const double shift = rng.uniform(-5, 5);
        std::vector<real> shifted(x.data().begin(), x.data().end());
        for (real& v : shifted) v += static_cast<real>(shift);
        const Tensor y2 = softmax_rows(Tensor({3, 5}, std::move(shifted)));
        for (std::size_t i = 0; i < y.numel(); ++i) CHECK(std::fabs(y.at(i) - y2.at(i)) < 1e-9);
    }
}

TEST_CASE("embedding lookup selects the row a one-hot matmul would") {
    Rng rng(11);
    const Tensor table = random_tensor(rng, {5, 4});
    Tensor one_hot({1, 5}, {0, 0, 1, 0, 0});
    const Tensor via_matmul = matmul(one_hot, table);
    const Tensor via_lookup = embedding_lookup(table, 2);
    for (std::size_t j = 0; j < 4; ++j) CHECK(via_lookup.at(j) == via_matmul.at(j));
}

TEST_CASE("embedding gradient is zero outside the selected row") {
    Rng rng(12);
    Tensor table = random_tensor(rng, {5, 4});
    Tape tape;
    Tape::Scope scope(tape);
    tape.backward(sum(embedding_lookup(table, 2)));
    const auto grad = tape.grad(table);
    for (std::size_t r = 0; r < 5; ++r)
        for (std::size_t j = 0; j < 4; ++j) CHECK(grad[r * 4 + j] == (r == 2 ? 1.0 : 0.0));
}

TEST_CASE("embedding lookup past the table is a vocabulary error") {
    Rng rng(13);
    const Tensor table = random_tensor(rng, {5, 4});
    CHECK_THROWS_AS((void)embedding_lookup(table, 5), VocabError);
}

TEST_CASE("dropout identities") {
    Rng rng(1);
    const Tensor x = random_tensor(rng, {4, 4});
    SUBCASE("rate zero in training") {
        Rng r2(2);
        const Tensor y = dropout(x, 0, true, r2);
        CHECK(y.buffer() == x.buffer());
    }
    SUBCASE("eval mode at any rate") {
        Rng r2(2);
        const Tensor y = dropout(x, real(0.9), false, r2);
        CHECK(y.buffer() == x.buffer());
    }
}

TEST_CASE("dropout rejects rates outside [0,1)") {
    Rng rng(2);
    const Tensor x = Tensor::scalar(1);
    CHECK_THROWS_AS((void)dropout(x, 1, true, rng), ConfigError);
    CHECK_THROWS_AS((void)dropout(x, real(-0.1), true, rng), ConfigError);
}

TEST_CASE("dropout zero fraction concentrates around the rate") {
    Rng rng(3);
    const Tensor x = Tensor::full({100000}, 1);
    const Tensor y = dropout(x, real(0.5), true, rng);
    std::size_t zeros = 0;
    for (real v : y.data()) {
        if (v == 0)
            ++zeros;
        else
            CHECK(v == 2.0);  // inverted scaling 1/(1-rate)
    }
    const double fraction = static_cast<double>(zeros) / 100000.0;
    CHECK(fraction == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("batch_norm standardizes in training mode") {
    Rng rng(4);
    // variance well above eps so the biased correction stays inside tolerance
    const Tensor x = random_tensor(rng, {64, 3}, -20, 20);
    BatchNormState state = BatchNormState::fresh(3);
    const Tensor y = batch_norm(x, state, true);
    for (std::size_t j = 0; j < 3; ++j) {
        double mean = 0;
        for (std::size_t i = 0; i < 64; ++i) mean += y.at(i, j);
        mean /= 64;
        double var = 0;
        for (std::size_t i = 0; i < 64; ++i) var += (y.at(i, j) - mean) * (y.at(i, j) - mean);
        var /= 64;
        CHECK(std::fabs(mean) < 1e-9);
        CHECK(std::fabs(var - 1.0) < 1e-6);
    }
}

TEST_CASE("batch_norm on standardized input is close to the identity") {
    // per-feature mean 0 and variance 1 by construction
    Tensor x({4, 2}, {1, -1, -1, 1, 1, -1, -1, 1});
    BatchNormState state = BatchNormState::fresh(2);
    const Tensor y = batch_norm(x, state, true);
    for (std::size_t i = 0; i < x.numel(); ++i)
        CHECK(y.at(i) == doctest::Approx(x.at(i)).epsilon(1e-5));
}

TEST_CASE("batch_norm eval mode is deterministic with frozen stats") {
    Rng rng(5);
    const Tensor x = random_tensor(rng, {3, 4});
    BatchNormState state = BatchNormState::fresh(4);
    batch_norm(random_tensor(rng, {8, 4}), state, true);  // move the running stats
    const Tensor a = batch_norm(x, state, false);
    const Tensor b = batch_norm(x, state, false);
    for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a.at(i) == b.at(i));
}

TEST_CASE("batch_norm refuses a training batch of one") {
    BatchNormState state = BatchNormState::fresh(4);
    Rng rng(6);
    const Tensor x = random_tensor(rng, {1, 4});
    CHECK_THROWS_AS((void)batch_norm(x, state, true), ShapeError);
}

TEST_CASE("batch_norm gradients pass a finite-difference audit") {
    Rng rng(7);
    Tensor x = random_tensor(rng, {5, 3});
    BatchNormState state = BatchNormState::fresh(3);
    const auto f = [&] {
        BatchNormState fresh = BatchNormState::fresh(3);
        fresh.scale = state.scale;
        fresh.shift = state.shift;
        return weighted(batch_norm(x, fresh, true), 70);
    };
    CHECK(max_rel_error_fd(f, {&x, &state.scale, &state.shift}) < 1e-6);
}

TEST_CASE("backward of x*x at 3 gives 6") {
    Tensor x = Tensor::scalar(3);
    x.set_requires_grad(true);
    Tape tape;
    Tape::Scope scope(tape);
    tape.backward(mul(x, x));
    CHECK(tape.grad(x)[0] == 6.0);
}

TEST_CASE("backward of sum(A.B) survives a finite-difference audit") {
    Rng rng(21);
    Tensor a = random_tensor(rng, {3, 4});
    Tensor b = random_tensor(rng, {4, 2});
    const double err = max_rel_error_fd([&] { return sum(matmul(a, b)); }, {&a, &b});
    CHECK(err < 1e-6);
}

TEST_CASE("unused parameters get exactly zero gradient") {
    Tensor x = Tensor::scalar(2);
    Tensor unused = Tensor::scalar(5);
    unused.set_requires_grad(true);
    x.set_requires_grad(true);
    Tape tape;
    Tape::Scope scope(tape);
    tape.backward(mul(x, x));
    CHECK(tape.grad(unused) == std::vector<real>{0.0});
}

TEST_CASE("backward rejects a non-scalar loss") {
    Tensor x = Tensor::vector({1, 2}, true);
    Tape tape;
    Tape::Scope scope(tape);
    const Tensor y = add(x, x);
    CHECK_THROWS_AS(tape.backward(y), ShapeError);
}

TEST_CASE("gradient accumulation at fan-out is exact") {
    Tensor x = Tensor::vector({1, 2, 3}, true);
    Tape tape;
    Tape::Scope scope(tape);
    tape.backward(sum(add(x, x)));
    for (real g : tape.grad(x)) CHECK(g == 2.0);
}

TEST_CASE("per-op gradients match finite differences over 100 seeds") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(seed);
        Tensor a = random_tensor(rng, {3, 4});
        Tensor b = random_tensor(rng, {4, 2});
        Tensor v = random_tensor(rng, {4});
        Tensor w = random_tensor(rng, {2, 4});
        Tensor s = random_tensor(rng, {4}, 0.5, 2.0);  // positive: divisor, sqrt, log domains
        Tensor weights = random_tensor(rng, {3});
        Tensor a_rows = random_tensor(rng, {3, 4});
        const std::uint64_t cot = seed + 1000;

        CHECK(max_rel_error_fd([&] { return weighted(matmul(a, b), cot); }, {&a, &b}) < 1e-6);
        CHECK(max_rel_error_fd([&] { return weighted(matmul_nt(a, w), cot); }, {&a, &w}) < 1e-6);
        CHECK(max_rel_error_fd([&] { return weighted(add(a, a_rows), cot); }, {&a, &a_rows}) < 1e-6);
        CHECK(max_rel_error_fd([&] { return weighted(sub(a, a_rows), cot); }, {&a, &a_rows}) < 1e-6);
        CHECK(max_rel_error_fd([&] { return weighted(add_rows(a, v), cot); }, {&a, &v}) < 1e-6);
        CHECK(max_rel_error_fd([&] { return weighted(sub_rows(a, v), cot); }, {&a, &v}) < 1e-6);
        CHECK(max_rel_error_fd([&] { return weighted(mul_rows(a, s), cot); }, {&a, &s}) < 1e-6);
        CHECK(max_rel_error_fd([&] { return weighted(div_rows(a, s), cot); }, {&a, &s}) < 1e-6);
        CHECK(max_rel_error_fd([&] { return weighted(mul(a, a_rows), cot); }, {&a, &a_rows}) < 1e-6);
        CHECK(max_rel_error_fd([&] { return weighted(gcap::tanh(a), cot); }, {&a}) < 1e-6);
        CHECK(max_rel_error_fd([&] { return weighted(sigmoid(a), cot); }, {&a}) < 1e-6);
        CHECK(max_rel_error_fd([&] { return weighted(leaky_relu(a), cot); }, {&a}) < 1e-6);
        CHECK(max_rel_error_fd([&] { return weighted(gcap::exp(a), cot); }, {&a}) < 1e-6);
        CHECK(max_rel_error_fd([&] { return weighted(sqrt_eps(s, real(0.1)), cot); }, {&s}) < 1e-6);
        CHECK(max_rel_error_fd([&] { return weighted(log(s), cot); }, {&s}) < 1e-6);
        CHECK(max_rel_error_fd([&] { return weighted(softmax_rows(a), cot); }, {&a}) < 1e-6);
        CHECK(max_rel_error_fd([&] { return weighted(mean_rows(a), cot); }, {&a}) < 1e-6);
        CHECK(max_rel_error_fd([&] { return weighted(weighted_sum_rows(a, weights), cot); },
                               {&a, &weights}) < 1e-6);
        CHECK(max_rel_error_fd([&] { return weighted(row(a, 1), cot); }, {&a}) < 1e-6);
        CHECK(max_rel_error_fd([&] { return weighted(gather_rows(a, {2, 0, 2}), cot); }, {&a}) <
              1e-6);
        CHECK(max_rel_error_fd([&] { return weighted(concat(v, s), cot); }, {&v, &s}) < 1e-6);
        CHECK(max_rel_error_fd([&] { return weighted(slice(v, 1, 2), cot); }, {&v}) < 1e-6);
        CHECK(max_rel_error_fd([&] { return at_index(v, 2); }, {&v}) < 1e-6);
        CHECK(max_rel_error_fd([&] { return dot(v, s); }, {&v, &s}) < 1e-6);
        CHECK(max_rel_error_fd([&] { return weighted(cmul(a, real(2.5)), cot); }, {&a}) < 1e-6);
        const Tensor rows[] = {v, s};
        CHECK(max_rel_error_fd([&] { return weighted(stack_rows(rows), cot); }, {&v, &s}) < 1e-6);
    }
}

TEST_CASE("frozen dropout passes the finite-difference audit") {
    Rng rng(77);
    Tensor x = random_tensor(rng, {6, 6});
    const auto f = [&] {
        Rng mask(123);
        return weighted(dropout(x, real(0.4), true, mask), 55);
    };
    CHECK(max_rel_error_fd(f, {&x}) < 1e-6);
}

TEST_CASE("deterministic replay: one seed, one op sequence, identical bits") {
    const auto run = [] {
        Rng rng(99);
        Tensor a = random_tensor(rng, {4, 4});
        Tensor b = random_tensor(rng, {4, 4});
        const Tensor y = softmax_rows(matmul(gcap::tanh(a), dropout(b, real(0.3), true, rng)));
        return std::vector<real>(y.data().begin(), y.data().end());
    };
    CHECK(run() == run());
}

TEST_CASE("a second backward on the same recording is refused") {
    Tensor x = Tensor::scalar(2);
    x.set_requires_grad(true);
    Tape tape;
    Tape::Scope scope(tape);
    const Tensor y = mul(x, x);
    tape.backward(y);
    CHECK_THROWS_AS(tape.backward(y), Error);
}

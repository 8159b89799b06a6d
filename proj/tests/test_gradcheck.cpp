#include <doctest.h>

#include "gcap/gradcheck.hpp"
#include "helpers.hpp"

using namespace gcap;
using test::random_tensor;

TEST_CASE("quadratic loss checks out to near roundoff") {
    Rng rng(3);
    Tensor theta = random_tensor(rng, {10});
    const NamedParams params = {{"theta", &theta}};
    const auto loss = [&] { return sum(mul(theta, theta)); };
    const GradientReport report = finite_difference_check(loss, params, 1e-5);
    CHECK(report.max_rel_error < 1e-8);
    REQUIRE(report.per_param.size() == 1);
    CHECK(report.per_param[0].coords_checked == 10);
}

TEST_CASE("eps of zero is refused") {
    Tensor theta = Tensor::scalar(1);
    theta.set_requires_grad(true);
    const NamedParams params = {{"theta", &theta}};
    CHECK_THROWS_AS((void)finite_difference_check([&] { return mul(theta, theta); }, params, 0.0),
                    ConfigError);
}

TEST_CASE("a corrupted backward rule is caught and named") {
    Tensor theta = Tensor::vector({1.5, -0.5, 2.0}, true);
    // y = theta * theta elementwise, recorded with a wrong local derivative
    const auto broken_square = [&]() {
        std::vector<real> y(theta.numel());
        for (std::size_t i = 0; i < y.size(); ++i) y[i] = theta.at(i) * theta.at(i);
        Tensor out({theta.numel()}, std::move(y));
        if (Tape* t = Tape::current()) {
            const int in = t->node_of(theta);
            t->emit("broken_square", {in}, out,
                    [in, buf = theta.buffer()](Tape& tape, std::span<const real> dy) {
                        auto& g = tape.grad_buf(in);
                        for (std::size_t i = 0; i < g.size(); ++i)
                            g[i] += dy[i] * (*buf)[i];  // missing the factor 2
                    });
        }
        return sum(out);
    };
    const NamedParams params = {{"theta", &theta}};
    const GradientReport report = finite_difference_check(broken_square, params, 1e-5);
    CHECK(report.max_rel_error > 0.4);
    CHECK(report.worst()->name == "theta");
}

TEST_CASE("coordinate subsampling caps the work per tensor") {
    Rng rng(4);
    Tensor big = random_tensor(rng, {30, 30});
    const NamedParams params = {{"big", &big}};
    const auto loss = [&] { return sum(mul(big, big)); };
    const GradientReport report = finite_difference_check(loss, params, 1e-5, 200, 17);
    REQUIRE(report.per_param.size() == 1);
    CHECK(report.per_param[0].coords_checked == 200);
    // the summed loss is ~300 here, so the quotient carries more roundoff
    // than the small quadratic fixture
    CHECK(report.max_rel_error < 1e-5);
}

TEST_CASE("non-finite losses are a numeric error") {
    Tensor theta = Tensor::scalar(-1);
    theta.set_requires_grad(true);
    const NamedParams params = {{"theta", &theta}};
    const auto loss = [&] { return log(theta); };  // log of a negative value
    CHECK_THROWS_AS((void)finite_difference_check(loss, params, 1e-5), NumericError);
}

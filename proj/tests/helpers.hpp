#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "gcap/scene_graph.hpp"
#include "gcap/tensor.hpp"

namespace gcap::test {

inline Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0,
                            bool requires_grad = true) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    std::vector<real> v(n);
    for (real& x : v) x = static_cast<real>(rng.uniform(lo, hi));
    return Tensor(std::move(shape), std::move(v), requires_grad);
}

inline double rel_error(double a, double b) {
    return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), 1e-8});
}

// Central-difference audit of a scalar-valued tensor program over every
// coordinate of every listed input.
inline double max_rel_error_fd(const std::function<Tensor()>& f, std::vector<Tensor*> inputs,
                               double eps = 1e-6) {
    Tape tape;
    std::vector<std::vector<real>> analytic;
    {
        Tape::Scope scope(tape);
        tape.backward(f());
    }
    for (Tensor* t : inputs) analytic.push_back(tape.grad(*t));

    double worst = 0.0;
    for (std::size_t p = 0; p < inputs.size(); ++p) {
        auto data = inputs[p]->mutable_data();
        for (std::size_t c = 0; c < data.size(); ++c) {
            const real saved = data[c];
            data[c] = saved + static_cast<real>(eps);
            const double plus = static_cast<double>(f().value());
            data[c] = saved - static_cast<real>(eps);
            const double minus = static_cast<double>(f().value());
            data[c] = saved;
            const double numeric = (plus - minus) / (2.0 * eps);
            worst = std::max(worst, rel_error(static_cast<double>(analytic[p][c]), numeric));
        }
    }
    return worst;
}

// Random valid scene graph: up to max_nodes objects with random labels,
// confidences and boxes, plus random edges between distinct nodes.
inline SceneGraph random_scene_graph(Rng& rng, const LabelSpace& labels,
                                     std::size_t max_nodes = 8, std::size_t max_edges = 10) {
    SceneGraph g;
    const std::size_t n = 1 + rng.index(max_nodes);
    for (std::size_t i = 0; i < n; ++i) {
        ObjectNode node;
        node.id = static_cast<int>(i);
        node.label = labels.objects()[rng.index(labels.object_count())];
        node.confidence = rng.uniform();
        node.bbox = BoundingBox{rng.uniform(0, 100), rng.uniform(0, 100),
                                1.0 + rng.uniform(0, 50), 1.0 + rng.uniform(0, 50)};
        g.nodes.push_back(std::move(node));
    }
    if (n >= 2) {
        const std::size_t m = rng.index(max_edges + 1);
        for (std::size_t k = 0; k < m; ++k) {
            RelationEdge e;
            e.src = static_cast<int>(rng.index(n));
            do {
                e.dst = static_cast<int>(rng.index(n));
            } while (e.dst == e.src);
            e.predicate = labels.predicates()[rng.index(labels.predicate_count())];
            e.confidence = rng.uniform();
            g.edges.push_back(std::move(e));
        }
    }
    return g;
}

inline LabelSpace tiny_labels() {
    return LabelSpace::from_lists({"cat", "dog", "bird", "tree", "rock", "car"},
                                  {"on", "under", "near"});
}

}  // namespace gcap::test

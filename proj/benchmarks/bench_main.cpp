// Micro-benchmarks for the hot paths: forward/backward of the conv stack,
// single-image attacks, and mask generation.

#include <benchmark/benchmark.h>

#include "landet/attacks.hpp"
#include "landet/detector.hpp"
#include "landet/models.hpp"
#include "landet/tensor.hpp"

using namespace landet;

namespace {

Tensor random_image(const std::vector<int>& dims, uint64_t seed) {
    Rng rng(seed);
    Tensor t(dims);
    for (float& v : t.data) v = rng.uniform(0.0f, 1.0f);
    return t;
}

const std::vector<int> kDims{3, 16, 16};

void bm_f1_forward(benchmark::State& state) {
    const Model m = build_model(ModelRole::image_classifier_f1, kDims, 10, 1);
    const Tensor x = random_image(kDims, 2);
    for (auto _ : state) {
        Graph g;
        const ForwardBinding fb = bind_forward(g, m, g.leaf(x));
        benchmark::DoNotOptimize(g.value(fb.output_node).data[0]);
    }
}
BENCHMARK(bm_f1_forward);

void bm_f1_forward_backward(benchmark::State& state) {
    const Model m = build_model(ModelRole::image_classifier_f1, kDims, 10, 1);
    const Tensor x = random_image(kDims, 2);
    for (auto _ : state) {
        Graph g;
        const int xn = g.leaf(x);
        const ForwardBinding fb = bind_forward(g, m, xn);
        g.backward(g.softmax_ce(fb.output_node, 0));
        benchmark::DoNotOptimize(g.grad(xn).data[0]);
    }
}
BENCHMARK(bm_f1_forward_backward);

void bm_affine_1k(benchmark::State& state) {
    Rng rng(3);
    Tensor x({1024}), w({256, 1024}), b({256});
    for (float& v : x.data) v = rng.uniform(-1, 1);
    for (float& v : w.data) v = rng.uniform(-1, 1);
    for (auto _ : state) {
        Graph g;
        const int out = g.affine(g.leaf(x), g.leaf(w), g.leaf(b));
        benchmark::DoNotOptimize(g.value(out).data[0]);
    }
}
BENCHMARK(bm_affine_1k);

void bm_fgsm(benchmark::State& state) {
    const Model m = build_model(ModelRole::image_classifier_f1, kDims, 10, 1);
    const Tensor x = random_image(kDims, 2);
    for (auto _ : state) {
        const AdversarialExample ae = fgsm(m, x, 0, 0.1f);
        benchmark::DoNotOptimize(ae.perturbed.data[0]);
    }
}
BENCHMARK(bm_fgsm);

void bm_mask_generation(benchmark::State& state) {
    const Model g = [] {
        Model m = build_model(ModelRole::attention_net_g, kDims, 10, 1);
        m.epochs_trained = 1;
        return m;
    }();
    const Tensor x = random_image(kDims, 2);
    for (auto _ : state) {
        const Tensor mask = generate_mask(g, x);
        benchmark::DoNotOptimize(mask.data[0]);
    }
}
BENCHMARK(bm_mask_generation);

}  // namespace

BENCHMARK_MAIN();

#include <cmath>

#include "doctest.h"
#include "support.hpp"

#include "sparsegrain/errors.hpp"
#include "sparsegrain/flops.hpp"
#include "sparsegrain/pruning.hpp"
#include "sparsegrain/simulate.hpp"

using namespace sparsegrain;
using namespace testsupport;

namespace {

ActivationMap single_channel_acts(int h, int w,
                                  const std::vector<ActivationMap::Cell>& cells) {
    ActivationMap acts;
    acts.channels = 1;
    acts.height = h;
    acts.width = w;
    acts.nonzeros = {cells};
    acts.validate();
    return acts;
}

} // namespace

TEST_CASE("bypass micro-case: 2 weights x 2 activations hit 3 addresses") {
    // one output channel, kernel 1x2 with taps at s=0 and s=1; two adjacent
    // activations in the same row; all four products in one group
    auto spec = conv_spec("w", 1, 1, 1, 2, 1, 1, 4, 4);
    WeightTensor t;
    t.spec = spec;
    t.values = {0.5f, -0.25f};
    const ActivationMap acts =
        single_channel_acts(4, 4, {{2, 1, 1.0f}, {2, 2, 3.0f}});

    SimConfig cfg;
    const LayerSimResult result = simulate_layer(t, all_keep_mask(spec), acts, cfg);
    CHECK(result.refs.products == 4);
    CHECK(result.refs.sparse_refs == 3); // oy collides for (s=0, y=1) and (s=1, y=2)
    CHECK(result.refs.dense_baseline_refs == 3);
    CHECK(result.refs.relative == 1.0);

    // scatter-add folded the colliding pair into one accumulator; both acts
    // sit at x=2, so with r=0 and pad=1 everything lands on output row 3
    const int ow = result.out_w;
    CHECK(result.output[3 * ow + 2] ==
          doctest::Approx(0.5 * 1.0 + (-0.25) * 3.0)); // the shared address
    CHECK(result.output[3 * ow + 1] == doctest::Approx(-0.25 * 1.0));
    CHECK(result.output[3 * ow + 3] == doctest::Approx(0.5 * 3.0));
}

TEST_CASE("empty activations produce no products, refs, or output") {
    const auto spec = conv_spec("w", 2, 1, 3, 3, 1, 1, 5, 5);
    const WeightTensor t = random_tensor(spec, 1);
    const ActivationMap acts = single_channel_acts(5, 5, {});
    const LayerSimResult result = simulate_layer(t, all_keep_mask(spec), acts, SimConfig{});
    CHECK(result.refs.products == 0);
    CHECK(result.refs.sparse_refs == 0);
    for (double v : result.output) CHECK(v == 0.0);
}

TEST_CASE("simulator output equals dense convolution of masked weights") {
    // scatter dataflow vs the gather oracle, randomized small instances
    const GrainShape shapes[] = {GrainShape::Fine0D, GrainShape::Vector1D,
                                 GrainShape::Kernel2D, GrainShape::Filter3D};
    int instances = 0;
    for (std::uint64_t trial = 0; trial < 30; ++trial) {
        Rng gen(mix_seed(5000, trial));
        const int c = 1 + int(gen.next_index(3));
        const int k = 1 + int(gen.next_index(3));
        const int r = 1 + int(gen.next_index(3));
        const int s = 1 + int(gen.next_index(3));
        const int h = 4 + int(gen.next_index(7)); // 4..10
        const int pad = int(gen.next_index(2));
        if (h + 2 * pad < std::max(r, s)) continue;
        const auto spec = conv_spec("sim", c, k, r, s, 1, pad, h, h);

        const WeightTensor t = random_tensor(spec, mix_seed(5001, trial));
        Rng act_rng(mix_seed(5002, trial));
        const ActivationMap acts =
            make_random_activations(k, h, h, 0.3 + 0.7 * gen.next_unit(), act_rng);
        const GrainShape shape = shapes[trial % 4];
        const GrainPartition part = partition(spec, shape);
        Rng mask_rng(mix_seed(5003, trial));
        const PruneMask mask =
            random_grain_mask(spec, shape, 1 + mask_rng.next_index(part.grain_count),
                              mask_rng);

        const LayerSimResult result = simulate_layer(t, mask, acts, SimConfig{});

        const WeightTensor masked = apply_mask(t, mask);
        const std::vector<double> want = conv_oracle(masked, acts.to_dense());
        REQUIRE(result.output.size() == want.size());
        for (std::size_t i = 0; i < want.size(); ++i)
            CHECK(result.output[i] ==
                  doctest::Approx(want[i]).epsilon(1e-5).scale(1.0));
        ++instances;
    }
    CHECK(instances >= 25);
}

TEST_CASE("sparse_refs equals the exhaustive per-block distinct count") {
    const GrainShape shapes[] = {GrainShape::Fine0D, GrainShape::Vector1D,
                                 GrainShape::Kernel2D, GrainShape::Filter3D};
    for (std::uint64_t trial = 0; trial < 20; ++trial) {
        Rng gen(mix_seed(6000, trial));
        const int c = 1 + int(gen.next_index(2));  // up to 2x3x3x3 on 8x8
        const int k = 1 + int(gen.next_index(3));
        const auto spec = conv_spec("br", c, k, 3, 3, 1, 1, 8, 8);
        const WeightTensor t = random_tensor(spec, mix_seed(6001, trial));
        Rng act_rng(mix_seed(6002, trial));
        const ActivationMap acts =
            make_random_activations(k, 8, 8, 0.2 + 0.6 * gen.next_unit(), act_rng);

        for (GrainShape shape : shapes) {
            const GrainPartition part = partition(spec, shape);
            Rng mask_rng(mix_seed(6003, trial) + int(shape));
            const PruneMask mask = random_grain_mask(
                spec, shape, 1 + mask_rng.next_index(part.grain_count), mask_rng);

            SimConfig cfg;
            cfg.weights_per_group = 1 + int(gen.next_index(5));
            cfg.acts_per_group = 1 + int(gen.next_index(5));
            const LayerSimResult result = simulate_layer(t, mask, acts, cfg);
            const std::uint64_t want = memref_oracle(t, mask, acts, cfg.weights_per_group,
                                                     cfg.acts_per_group);
            CHECK(result.refs.sparse_refs == want);
            // per-block distinct count can never exceed the products formed
            CHECK(result.refs.sparse_refs <= result.refs.products);
        }
    }
}

TEST_CASE("1x1 groups count every valid product as a reference") {
    const auto spec = conv_spec("w", 2, 2, 3, 3, 1, 1, 6, 6);
    const WeightTensor t = random_tensor(spec, 31);
    Rng act_rng(32);
    const ActivationMap acts = make_random_activations(2, 6, 6, 0.5, act_rng);
    SimConfig cfg;
    cfg.weights_per_group = 1;
    cfg.acts_per_group = 1;
    const LayerSimResult result = simulate_layer(t, all_keep_mask(spec), acts, cfg);
    CHECK(result.refs.sparse_refs == result.refs.products);
}

TEST_CASE("dense baseline dominates any mask on the same activations") {
    for (std::uint64_t trial = 0; trial < 12; ++trial) {
        Rng gen(mix_seed(7000, trial));
        const int c = 1 + int(gen.next_index(3));
        const int k = 1 + int(gen.next_index(3));
        const auto spec = conv_spec("dom", c, k, 3, 3, 1, 1, 7, 7);
        const WeightTensor t = random_tensor(spec, mix_seed(7001, trial));
        Rng act_rng(mix_seed(7002, trial));
        const ActivationMap acts =
            make_random_activations(k, 7, 7, 0.2 + 0.7 * gen.next_unit(), act_rng);
        Rng mask_rng(mix_seed(7003, trial));
        const GrainPartition part = partition(spec, GrainShape::Vector1D);
        const PruneMask mask = random_grain_mask(
            spec, GrainShape::Vector1D, mask_rng.next_index(part.grain_count + 1), mask_rng);
        const LayerSimResult result = simulate_layer(t, mask, acts, SimConfig{});
        CHECK(result.refs.dense_baseline_refs >= result.refs.sparse_refs);
    }
}

TEST_CASE("simulate_layer validates its inputs") {
    const auto spec = conv_spec("v", 2, 2, 3, 3, 1, 1, 6, 6);
    const WeightTensor t = random_tensor(spec, 41);
    Rng rng(42);
    const ActivationMap acts = make_random_activations(2, 6, 6, 0.5, rng);

    auto strided = t;
    strided.spec.stride = 2;
    strided.spec.input_h = strided.spec.input_w = 7;
    CHECK_THROWS_AS(simulate_layer(strided, all_keep_mask(strided.spec), acts, SimConfig{}),
                    InvalidArgument);

    WeightTensor fc = random_tensor(fc_spec("f", 4, 2), 43);
    CHECK_THROWS_AS(simulate_layer(fc, all_keep_mask(fc.spec), acts, SimConfig{}),
                    InvalidArgument);

    Rng rng2(44);
    const ActivationMap wrong = make_random_activations(3, 6, 6, 0.5, rng2);
    CHECK_THROWS_AS(simulate_layer(t, all_keep_mask(spec), wrong, SimConfig{}),
                    InvalidArgument);

    SimConfig bad;
    bad.weights_per_group = 0;
    CHECK_THROWS_AS(simulate_layer(t, all_keep_mask(spec), acts, bad), InvalidArgument);
}

TEST_CASE("random activations hit the target density in strict order") {
    Rng rng(51);
    const ActivationMap acts = make_random_activations(3, 10, 10, 0.35, rng);
    acts.validate();
    CHECK(acts.nonzero_count() == 3 * 35);
    CHECK(acts.density() == doctest::Approx(0.35));
    for (const auto& channel : acts.nonzeros) {
        for (std::size_t i = 1; i < channel.size(); ++i) {
            const bool ordered = channel[i - 1].x < channel[i].x ||
                                 (channel[i - 1].x == channel[i].x &&
                                  channel[i - 1].y < channel[i].y);
            CHECK(ordered);
        }
        for (const auto& cell : channel) CHECK(cell.value != 0.0f);
    }
    CHECK_THROWS_AS(make_random_activations(3, 10, 10, 0.0, rng), InvalidArgument);
    CHECK_THROWS_AS(make_random_activations(3, 10, 10, 1.2, rng), InvalidArgument);

    Rng a(5), b(5);
    const ActivationMap am = make_random_activations(2, 8, 8, 0.5, a);
    const ActivationMap bm = make_random_activations(2, 8, 8, 0.5, b);
    for (int kk = 0; kk < 2; ++kk) {
        REQUIRE(am.nonzeros[kk].size() == bm.nonzeros[kk].size());
        for (std::size_t i = 0; i < am.nonzeros[kk].size(); ++i) {
            CHECK(am.nonzeros[kk][i].x == bm.nonzeros[kk][i].x);
            CHECK(am.nonzeros[kk][i].y == bm.nonzeros[kk][i].y);
            CHECK(am.nonzeros[kk][i].value == bm.nonzeros[kk][i].value);
        }
    }
}

TEST_CASE("dense round-trip through the sparse map") {
    Rng rng(61);
    const ActivationMap acts = make_random_activations(2, 5, 7, 0.4, rng);
    const ActivationMap back = activations_from_dense(2, 5, 7, acts.to_dense());
    REQUIRE(back.nonzeros[0].size() == acts.nonzeros[0].size());
    for (int k = 0; k < 2; ++k)
        for (std::size_t i = 0; i < acts.nonzeros[k].size(); ++i) {
            CHECK(back.nonzeros[k][i].x == acts.nonzeros[k][i].x);
            CHECK(back.nonzeros[k][i].y == acts.nonzeros[k][i].y);
            CHECK(back.nonzeros[k][i].value == acts.nonzeros[k][i].value);
        }
}

TEST_CASE("simulate_model covers stride-1 conv layers only and is seeded") {
    std::vector<WeightTensor> model;
    model.push_back(random_tensor(conv_spec("c1", 2, 2, 3, 3, 1, 1, 8, 8), 71));
    model.push_back(random_tensor(conv_spec("c2", 2, 2, 3, 3, 2, 1, 9, 9), 72)); // strided
    model.push_back(random_tensor(fc_spec("f1", 4, 6), 73));
    std::vector<PruneMask> masks;
    for (const auto& t : model) masks.push_back(all_keep_mask(t.spec));

    const MemRefReport report = simulate_model(model, masks, {0.5}, 9, SimConfig{});
    REQUIRE(report.layers.size() == 1); // c2 (stride 2) and f1 are skipped
    CHECK(report.layers[0].layer == "c1");
    CHECK(report.layers[0].relative == 1.0); // dense mask
    CHECK(report.total_sparse_refs == report.total_dense_refs);

    const MemRefReport again = simulate_model(model, masks, {0.5}, 9, SimConfig{});
    CHECK(again.total_sparse_refs == report.total_sparse_refs);
    const MemRefReport other = simulate_model(model, masks, {0.5}, 10, SimConfig{});
    CHECK(other.total_sparse_refs != report.total_sparse_refs);

    CHECK_THROWS_AS(simulate_model(model, masks, {0.5, 0.5}, 9, SimConfig{}),
                    InvalidArgument);
    CHECK_THROWS_AS(simulate_model(model, masks, {1.5}, 9, SimConfig{}), InvalidArgument);
    CHECK_THROWS_AS(simulate_model(model, masks, {}, 9, SimConfig{}), InvalidArgument);
}

TEST_CASE("flops formula and ratios") {
    std::vector<WeightTensor> model;
    model.push_back(random_tensor(conv_spec("c1", 2, 3, 3, 3, 1, 1, 8, 8), 81));
    model.push_back(random_tensor(fc_spec("f1", 4, 10), 82));
    std::vector<PruneMask> dense;
    for (const auto& t : model) dense.push_back(all_keep_mask(t.spec));

    const FlopsReport full = count_flops(model, dense);
    CHECK(full.layers[0].flops == 2ull * 54 * 64); // 54 weights onto 8x8 output
    CHECK(full.layers[1].flops == 2ull * 40);
    CHECK(full.ratio() == 1.0);
    CHECK(full.layers[0].ratio == 1.0);

    // half the conv weights kept: conv flops halve, fc untouched
    std::vector<PruneMask> masks = {prefix_mask(model[0].spec, 27), dense[1]};
    const FlopsReport half = count_flops(model, masks);
    CHECK(half.layers[0].flops == 2ull * 27 * 64);
    CHECK(half.layers[0].ratio == doctest::Approx(0.5));
    CHECK(half.total_flops == 2ull * 27 * 64 + 2ull * 40);

    CHECK_THROWS_AS(count_flops(model, {dense[0]}), InvalidArgument);
}

TEST_CASE("dense flops of the reference 8-layer geometry") {
    // hand-computed: sum over layers of 2 * weights * output positions
    std::vector<WeightTensor> model;
    for (const LayerSpec& spec : alexnet_specs()) {
        WeightTensor t;
        t.spec = spec;
        t.values.assign(spec.weight_count(), 0.0f); // values are irrelevant here
        model.push_back(std::move(t));
    }
    std::vector<PruneMask> dense;
    std::uint64_t params = 0;
    for (const auto& t : model) {
        dense.push_back(all_keep_mask(t.spec));
        params += t.spec.weight_count();
    }
    CHECK(params == 60954656ull);

    const FlopsReport report = count_flops(model, dense);
    CHECK(report.layers[0].flops == 210830400ull);  // 2*34848*55*55
    CHECK(report.layers[1].flops == 447897600ull);  // 2*307200*27*27
    CHECK(report.layers[2].flops == 299040768ull);  // 2*884736*13*13
    CHECK(report.layers[3].flops == 224280576ull);
    CHECK(report.layers[4].flops == 149520384ull);
    CHECK(report.layers[5].flops == 75497472ull);   // 2*4096*9216
    CHECK(report.total_flops == 1448813632ull);
}

TEST_CASE("memref report emitters") {
    std::vector<WeightTensor> model;
    model.push_back(random_tensor(conv_spec("c1", 2, 2, 3, 3, 1, 1, 8, 8), 91));
    std::vector<PruneMask> masks = {all_keep_mask(model[0].spec)};
    const MemRefReport report = simulate_model(model, masks, {0.5}, 3, SimConfig{});
    const auto j = memref_report_json(report);
    CHECK(j["total"]["sparse_refs"].get<std::uint64_t>() == report.total_sparse_refs);
    CHECK(j["layers"][0]["layer"] == "c1");
    const std::string csv = memref_report_csv(report);
    CHECK(csv.find("c1,") != std::string::npos);
    CHECK(csv.find("(total)") != std::string::npos);

    const FlopsReport flops = count_flops(model, masks);
    const auto fj = flops_report_json(flops);
    CHECK(fj["total"]["ratio"].get<double>() == 1.0);
    CHECK(flops_report_csv(flops).find("(total)") != std::string::npos);
}

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <numeric>

#include "doctest.h"
#include "support.hpp"

#include "sparsegrain/errors.hpp"
#include "sparsegrain/pruning.hpp"

using namespace sparsegrain;
using namespace testsupport;

namespace {

const GrainShape kAllShapes[] = {GrainShape::Fine0D, GrainShape::Vector1D,
                                 GrainShape::Kernel2D, GrainShape::Filter3D};

double grain_l1(const WeightTensor& t, const GrainPartition& part, std::size_t g) {
    double sum = 0.0;
    for (std::size_t i = part.grain_begin(g); i < part.grain_end(g); ++i)
        sum += std::abs(double(t.values[i]));
    return sum;
}

} // namespace

TEST_CASE("saliency is the grain L1 norm") {
    const auto spec = conv_spec("a", 2, 3, 3, 3, 1, 1, 6, 6);
    const WeightTensor t = random_tensor(spec, 21);
    for (GrainShape shape : kAllShapes) {
        const GrainPartition part = partition(spec, shape);
        const SaliencyVector sal = saliency(t, part);
        REQUIRE(sal.scores.size() == part.grain_count);
        for (std::size_t g = 0; g < part.grain_count; ++g)
            CHECK(sal.scores[g] == doctest::Approx(grain_l1(t, part, g)).epsilon(1e-12));
    }
}

TEST_CASE("prune deletes round-half-up(target * grains) grains") {
    const auto spec = conv_spec("a", 5, 1, 1, 1, 1, 0, 4, 4); // 5 grains at every shape = filter
    const WeightTensor t = random_tensor(spec, 22);
    // 5 grains: target 0.5 -> 2.5 -> round half up = 3 deleted
    const PruneMask half = prune_to_sparsity(t, GrainShape::Filter3D, 0.5);
    CHECK(half.kept_count() == 2);
    CHECK(prune_to_sparsity(t, GrainShape::Filter3D, 0.0).kept_count() == 5);
    CHECK(prune_to_sparsity(t, GrainShape::Filter3D, 1.0).kept_count() == 0);
    // 0.29 * 5 = 1.45 -> 1 deleted; 0.3 * 5 = 1.5 -> 2 deleted
    CHECK(prune_to_sparsity(t, GrainShape::Filter3D, 0.29).kept_count() == 4);
    CHECK(prune_to_sparsity(t, GrainShape::Filter3D, 0.3).kept_count() == 3);
    CHECK_THROWS_AS(prune_to_sparsity(t, GrainShape::Filter3D, 1.2), InvalidArgument);
    CHECK_THROWS_AS(prune_to_sparsity(t, GrainShape::Filter3D, -0.1), InvalidArgument);
}

TEST_CASE("equal saliencies delete the lower grain index first") {
    const auto spec = conv_spec("a", 4, 1, 1, 1, 1, 0, 4, 4);
    WeightTensor t;
    t.spec = spec;
    t.values = {1.0f, -1.0f, 2.0f, 1.0f}; // three grains tie at |w| = 1
    const PruneMask mask = prune_to_sparsity(t, GrainShape::Fine0D, 0.5);
    CHECK(mask.keep[0] == 0);
    CHECK(mask.keep[1] == 0);
    CHECK(mask.keep[2] == 1);
    CHECK(mask.keep[3] == 1);
}

TEST_CASE("fine pruning agrees with an exhaustive sort oracle") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto spec = conv_spec("a", 4, 3, 3, 3, 1, 1, 6, 6);
        const WeightTensor t = random_tensor(spec, 300 + seed);
        Rng rng(seed);
        const double target = rng.next_unit();

        std::vector<std::size_t> order(t.values.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            const double fa = std::abs(double(t.values[a]));
            const double fb = std::abs(double(t.values[b]));
            return fa != fb ? fa < fb : a < b;
        });
        const auto n_delete = static_cast<std::size_t>(
            std::floor(target * double(t.values.size()) + 0.5));
        std::vector<std::uint8_t> expect(t.values.size(), 1);
        for (std::size_t i = 0; i < n_delete; ++i) expect[order[i]] = 0;

        const PruneMask got = prune_to_sparsity(t, GrainShape::Fine0D, target);
        CHECK(got.keep == expect);
    }
}

TEST_CASE("pruning properties over random tensors, shapes, and targets") {
    int checked = 0;
    for (std::uint64_t trial = 0; trial < 60; ++trial) {
        Rng gen(mix_seed(777, trial));
        const int c = 1 + int(gen.next_index(4));
        const int k = 1 + int(gen.next_index(4));
        const int r = 1 + int(gen.next_index(3));
        const int s = 1 + int(gen.next_index(3));
        const auto spec =
            conv_spec("t", c, k, r, s, 1, std::max(r, s) / 2, 8, 8);
        const WeightTensor t = random_tensor(spec, mix_seed(778, trial));
        const GrainShape shape = kAllShapes[gen.next_index(4)];
        const double target = gen.next_unit();

        const GrainPartition part = partition(spec, shape);
        const PruneMask mask = prune_to_sparsity(t, shape, target);

        // grain atomicity
        CHECK(is_grain_atomic(mask, part));

        // saliency order: every deleted grain scores <= every kept grain,
        // and on equal scores the deleted one has the lower index
        const SaliencyVector sal = saliency(t, part);
        double max_deleted = -1.0;
        std::size_t max_deleted_idx = 0;
        double min_kept = std::numeric_limits<double>::infinity();
        std::size_t min_kept_idx = 0;
        bool any_deleted = false, any_kept = false;
        for (std::size_t g = 0; g < part.grain_count; ++g) {
            if (mask.keep[part.grain_begin(g)]) {
                if (sal.scores[g] < min_kept) {
                    min_kept = sal.scores[g];
                    min_kept_idx = g;
                }
                any_kept = true;
            } else {
                if (sal.scores[g] > max_deleted) {
                    max_deleted = sal.scores[g];
                    max_deleted_idx = g;
                }
                any_deleted = true;
            }
        }
        if (any_deleted && any_kept) {
            CHECK(max_deleted <= min_kept);
            if (max_deleted == min_kept) CHECK(max_deleted_idx < min_kept_idx);
        }

        // nested monotonicity: pruning further keeps prior deletions deleted
        const double higher = target + (1.0 - target) * gen.next_unit();
        const PruneMask more = prune_to_sparsity_nested(t, shape, higher, mask);
        for (std::size_t i = 0; i < mask.keep.size(); ++i)
            if (!mask.keep[i]) CHECK(more.keep[i] == 0);
        CHECK(more.kept_count() <= mask.kept_count());

        // positive-scale equivariance: scaling by a power of two is exact
        // and must not change any decision
        WeightTensor scaled = t;
        const float factor = (trial % 2) ? 0.25f : 4.0f;
        for (float& v : scaled.values) v *= factor;
        const PruneMask scaled_mask = prune_to_sparsity(scaled, shape, target);
        CHECK(scaled_mask.keep == mask.keep);

        ++checked;
    }
    CHECK(checked == 60);
}

TEST_CASE("nested pruning rejects a non-atomic or misaligned prior") {
    const auto spec = conv_spec("a", 2, 2, 3, 3, 1, 1, 6, 6);
    const WeightTensor t = random_tensor(spec, 5);
    PruneMask fine_mask = prune_to_sparsity(t, GrainShape::Fine0D, 0.5);
    CHECK_THROWS_AS(prune_to_sparsity_nested(t, GrainShape::Kernel2D, 0.6, fine_mask),
                    InvalidArgument);
    PruneMask short_mask;
    short_mask.keep.assign(3, 1);
    CHECK_THROWS_AS(prune_to_sparsity_nested(t, GrainShape::Fine0D, 0.6, short_mask),
                    InvalidArgument);
}

TEST_CASE("schedule validation") {
    CHECK_NOTHROW(PruneSchedule::uniform({0.2, 0.5, 0.8}, 3).validate(3));
    CHECK_THROWS_AS(PruneSchedule::uniform({0.5, 0.2}, 3).validate(3), InvalidArgument);
    CHECK_THROWS_AS(PruneSchedule::uniform({0.5}, 2).validate(3), InvalidArgument);
    CHECK_THROWS_AS(PruneSchedule::uniform({1.5}, 2).validate(2), InvalidArgument);
}

TEST_CASE("distortion evaluator: perfect model scores zero, pruning hurts") {
    std::vector<WeightTensor> model;
    model.push_back(random_tensor(conv_spec("c1", 4, 2, 3, 3, 1, 1, 8, 8), 31));
    model.push_back(random_tensor(fc_spec("f1", 6, 12), 32));
    DistortionEvaluator eval(model, 99, 2);

    CHECK(eval.score(model) == 0.0);

    std::vector<WeightTensor> masked = model;
    masked[0] = apply_mask(model[0], prune_to_sparsity(model[0], GrainShape::Fine0D, 0.5));
    const double pruned_score = eval.score(masked);
    CHECK(pruned_score < 0.0);

    // deterministic across instances with the same seed
    DistortionEvaluator eval2(model, 99, 2);
    CHECK(eval2.score(masked) == pruned_score);
    // a different seed draws a different batch
    DistortionEvaluator eval3(model, 100, 2);
    CHECK(eval3.score(masked) != pruned_score);
}

TEST_CASE("deeper sparsity scores no better under the same evaluator") {
    std::vector<WeightTensor> model;
    model.push_back(random_tensor(conv_spec("c1", 4, 3, 3, 3, 1, 1, 8, 8), 41));
    DistortionEvaluator eval(model, 7, 2);
    double prev = 0.0;
    PruneMask mask = all_keep_mask(model[0].spec);
    for (double sparsity : {0.2, 0.4, 0.6, 0.8}) {
        mask = prune_to_sparsity_nested(model[0], GrainShape::Fine0D, sparsity, mask);
        std::vector<WeightTensor> masked = {apply_mask(model[0], mask)};
        const double score = eval.score(masked);
        CHECK(score <= prev);
        prev = score;
    }
}

TEST_CASE("sensitivity scan probes one layer at a time") {
    std::vector<WeightTensor> model;
    model.push_back(random_tensor(conv_spec("c1", 3, 2, 3, 3, 1, 1, 8, 8), 51));
    model.push_back(random_tensor(fc_spec("f1", 4, 8), 52));
    DistortionEvaluator eval(model, 3, 1);
    const std::vector<double> grid = {0.0, 0.5};
    const SensitivityReport report =
        sensitivity_scan(model, GrainShape::Kernel2D, grid, eval);

    REQUIRE(report.layers.size() == 2);
    REQUIRE(report.points[0].size() == 2);
    // sparsity 0 leaves the model untouched
    CHECK(report.points[0][0].score == 0.0);
    CHECK(report.points[1][0].score == 0.0);
    CHECK(report.points[0][1].score < 0.0);
    CHECK(report.points[0][1].sparsity == 0.5);

    CHECK_THROWS_AS(sensitivity_scan(model, GrainShape::Fine0D, {}, eval), InvalidArgument);
    CHECK_THROWS_AS(sensitivity_scan(model, GrainShape::Fine0D, {0.5, 0.2}, eval),
                    InvalidArgument);
    CHECK_THROWS_AS(sensitivity_scan(model, GrainShape::Fine0D, {0.0, 1.0}, eval),
                    InvalidArgument);
}

TEST_CASE("plan_stage picks the deepest sparsity within budget") {
    SensitivityReport report;
    report.layers = {"a", "b"};
    report.points = {
        {{0.0, -0.0}, {0.3, -0.1}, {0.6, -0.5}},
        {{0.0, -0.0}, {0.3, -0.4}, {0.6, -0.9}},
    };
    const auto plan = plan_stage(report, 0.2);
    CHECK(plan.at("a") == 0.3);
    CHECK(plan.at("b") == 0.0);
    const auto generous = plan_stage(report, 1.0);
    CHECK(generous.at("a") == 0.6);
    CHECK(generous.at("b") == 0.6);

    SensitivityReport no_anchor;
    no_anchor.layers = {"a"};
    no_anchor.points = {{{0.3, -0.1}}};
    CHECK_THROWS_AS(plan_stage(no_anchor, 0.5), InvalidArgument);
}

TEST_CASE("iterative pruning nests masks and records a monotone curve") {
    std::vector<WeightTensor> model;
    model.push_back(random_tensor(conv_spec("c1", 4, 2, 3, 3, 1, 1, 8, 8), 61));
    model.push_back(random_tensor(fc_spec("f1", 5, 10), 62));
    DistortionEvaluator eval(model, 8, 1);
    const PruneSchedule schedule = PruneSchedule::uniform({0.25, 0.5, 0.75}, model.size());

    std::vector<std::vector<PruneMask>> staged;
    const IterativePruneResult result = iterative_prune(
        model, GrainShape::Vector1D, schedule, eval,
        [&](std::size_t, const std::vector<PruneMask>& masks) { staged.push_back(masks); });

    REQUIRE(result.curve.size() == 3);
    REQUIRE(staged.size() == 3);
    for (std::size_t s = 1; s < result.curve.size(); ++s) {
        CHECK(result.curve[s].conv_density <= result.curve[s - 1].conv_density);
        for (std::size_t l = 0; l < model.size(); ++l)
            for (std::size_t i = 0; i < staged[s][l].keep.size(); ++i)
                if (!staged[s - 1][l].keep[i]) CHECK(staged[s][l].keep[i] == 0);
    }
    // the final mask is the last stage's mask
    for (std::size_t l = 0; l < model.size(); ++l)
        CHECK(result.masks[l].keep == staged.back()[l].keep);
    // fc layer was pruned at fine granularity: kept count matches its own
    // rounding, not the conv grain rounding
    CHECK(result.masks[1].kept_count() == 50 - 38); // 50 weights, round(0.75*50) deleted
}

TEST_CASE("retrain hook runs between stages and masks are re-applied") {
    std::vector<WeightTensor> model;
    model.push_back(random_tensor(conv_spec("c1", 2, 2, 3, 3, 1, 1, 6, 6), 71));

    struct CountingEval : Evaluator {
        int scores = 0, retrains = 0;
        double score(const std::vector<WeightTensor>&) override {
            ++scores;
            return 0.0;
        }
        void retrain(std::vector<WeightTensor>& weights,
                     const std::vector<PruneMask>&) override {
            ++retrains;
            for (auto& t : weights)
                for (float& v : t.values) v += 1.0f; // also perturbs deleted slots
        }
    } eval;

    const PruneSchedule schedule = PruneSchedule::uniform({0.3, 0.6}, 1);
    const IterativePruneResult result =
        iterative_prune(model, GrainShape::Fine0D, schedule, eval);
    CHECK(eval.scores == 2);
    CHECK(eval.retrains == 1); // between the two stages only
    CHECK(result.masks[0].kept_count() == 36 - 22); // round(0.6*36)
}

TEST_CASE("mask files round-trip") {
    namespace fs = std::filesystem;
    const fs::path path = fs::temp_directory_path() / "sparsegrain_masks_rt.json";
    std::vector<WeightTensor> model;
    model.push_back(random_tensor(conv_spec("c1", 3, 2, 3, 3, 1, 1, 6, 6), 81));
    model.push_back(random_tensor(fc_spec("f1", 4, 7), 82));

    std::vector<PruneMask> masks = {
        prune_to_sparsity(model[0], GrainShape::Kernel2D, 0.4),
        prune_to_sparsity(model[1], GrainShape::Fine0D, 0.7),
    };
    save_masks(path, masks, {GrainShape::Kernel2D, GrainShape::Fine0D});

    const auto loaded = load_masks(path);
    REQUIRE(loaded.size() == 2);
    CHECK(loaded[0].first.layer == "c1");
    CHECK(loaded[0].first.keep == masks[0].keep);
    CHECK(loaded[0].second == GrainShape::Kernel2D);
    CHECK(loaded[1].first.keep == masks[1].keep);
    CHECK(loaded[1].second == GrainShape::Fine0D);
    fs::remove(path);

    CHECK_THROWS_AS(load_masks(path), DataError);
}

#include "sparsegrain/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "sparsegrain/errors.hpp"
#include "sparsegrain/forward.hpp"
#include "sparsegrain/model_io.hpp"
#include "sparsegrain/random.hpp"

namespace sparsegrain {

using nlohmann::json;

SaliencyVector saliency(const WeightTensor& tensor, const GrainPartition& part) {
    if (part.grain_count * part.weights_per_grain != tensor.values.size())
        throw InvalidArgument("layer '" + tensor.spec.name +
                              "': partition does not match tensor");
    SaliencyVector result;
    result.shape = part.shape;
    result.scores.resize(part.grain_count);
    for (std::size_t g = 0; g < part.grain_count; ++g) {
        double sum = 0.0;
        for (std::size_t i = part.grain_begin(g); i < part.grain_end(g); ++i)
            sum += std::abs(static_cast<double>(tensor.values[i]));
        result.scores[g] = sum;
    }
    return result;
}

namespace {

std::size_t target_deleted_grains(double target_sparsity, std::size_t grain_count) {
    if (!(target_sparsity >= 0.0 && target_sparsity <= 1.0))
        throw InvalidArgument("target sparsity " + std::to_string(target_sparsity) +
                              " is outside [0, 1]");
    // round half up; the paper never defines rounding
    const auto n = static_cast<std::size_t>(
        std::floor(target_sparsity * static_cast<double>(grain_count) + 0.5));
    return std::min(n, grain_count);
}

/// Grain indices ordered by (saliency, index) ascending.
std::vector<std::size_t> grains_by_saliency(const std::vector<double>& scores) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&scores](std::size_t a, std::size_t b) {
        return scores[a] < scores[b];
    });
    return order;
}

PruneMask mask_from_deleted(const WeightTensor& tensor, const GrainPartition& part,
                            const std::vector<std::uint8_t>& grain_deleted) {
    PruneMask mask;
    mask.layer = tensor.spec.name;
    mask.keep.assign(tensor.values.size(), 1);
    for (std::size_t g = 0; g < part.grain_count; ++g)
        if (grain_deleted[g])
            std::fill(mask.keep.begin() + part.grain_begin(g),
                      mask.keep.begin() + part.grain_end(g), std::uint8_t{0});
    return mask;
}

} // namespace

PruneMask prune_to_sparsity(const WeightTensor& tensor, GrainShape shape,
                            double target_sparsity) {
    const GrainPartition part = partition(tensor.spec, shape);
    const std::size_t n_delete = target_deleted_grains(target_sparsity, part.grain_count);
    const SaliencyVector sal = saliency(tensor, part);
    const std::vector<std::size_t> order = grains_by_saliency(sal.scores);
    std::vector<std::uint8_t> deleted(part.grain_count, 0);
    for (std::size_t i = 0; i < n_delete; ++i) deleted[order[i]] = 1;
    return mask_from_deleted(tensor, part, deleted);
}

PruneMask prune_to_sparsity_nested(const WeightTensor& tensor, GrainShape shape,
                                   double target_sparsity, const PruneMask& prior) {
    const GrainPartition part = partition(tensor.spec, shape);
    if (prior.keep.size() != tensor.values.size())
        throw InvalidArgument("layer '" + tensor.spec.name + "': prior mask length mismatch");
    if (!is_grain_atomic(prior, part))
        throw InvalidArgument("layer '" + tensor.spec.name +
                              "': prior mask is not grain-atomic for this granularity");

    std::vector<std::uint8_t> deleted(part.grain_count, 0);
    std::size_t already = 0;
    for (std::size_t g = 0; g < part.grain_count; ++g) {
        deleted[g] = prior.keep[part.grain_begin(g)] ? 0 : 1;
        already += deleted[g];
    }
    const std::size_t n_target = target_deleted_grains(target_sparsity, part.grain_count);
    if (n_target > already) {
        const SaliencyVector sal = saliency(tensor, part);
        const std::vector<std::size_t> order = grains_by_saliency(sal.scores);
        std::size_t remaining = n_target - already;
        for (std::size_t idx : order) {
            if (remaining == 0) break;
            if (!deleted[idx]) {
                deleted[idx] = 1;
                --remaining;
            }
        }
    }
    return mask_from_deleted(tensor, part, deleted);
}

PruneSchedule PruneSchedule::uniform(const std::vector<double>& stages,
                                     std::size_t layer_count) {
    PruneSchedule schedule;
    for (double target : stages)
        schedule.stage_targets.emplace_back(layer_count, target);
    return schedule;
}

void PruneSchedule::validate(std::size_t layer_count) const {
    for (std::size_t t = 0; t < stage_targets.size(); ++t) {
        if (stage_targets[t].size() != layer_count)
            throw InvalidArgument("schedule stage " + std::to_string(t) + " has " +
                                  std::to_string(stage_targets[t].size()) +
                                  " targets for " + std::to_string(layer_count) + " layers");
        for (std::size_t l = 0; l < layer_count; ++l) {
            const double target = stage_targets[t][l];
            if (!(target >= 0.0 && target <= 1.0))
                throw InvalidArgument("schedule target " + std::to_string(target) +
                                      " is outside [0, 1]");
            if (t > 0 && target < stage_targets[t - 1][l])
                throw InvalidArgument("schedule is not monotone for layer index " +
                                      std::to_string(l) + " at stage " + std::to_string(t));
        }
    }
}

DistortionEvaluator::DistortionEvaluator(const std::vector<WeightTensor>& reference_model,
                                         std::uint64_t seed, int batch) {
    if (batch < 1) throw InvalidArgument("evaluator batch must be positive");
    inputs_.resize(reference_model.size());
    outputs_.resize(reference_model.size());
    for (std::size_t l = 0; l < reference_model.size(); ++l) {
        const WeightTensor& tensor = reference_model[l];
        const LayerSpec& spec = tensor.spec;
        const std::size_t input_size =
            spec.is_conv()
                ? static_cast<std::size_t>(spec.in_channels) * spec.input_h * spec.input_w
                : static_cast<std::size_t>(spec.in_channels);
        Rng rng(mix_seed(seed, l));
        for (int b = 0; b < batch; ++b) {
            std::vector<float> input(input_size);
            for (float& v : input) v = static_cast<float>(rng.next_normal());
            outputs_[l].push_back(layer_output(tensor, input));
            inputs_[l].push_back(std::move(input));
        }
    }
}

double DistortionEvaluator::score(const std::vector<WeightTensor>& masked_model) {
    if (masked_model.size() != inputs_.size())
        throw InvalidArgument("evaluator was built for a model with " +
                              std::to_string(inputs_.size()) + " layers");
    double sse = 0.0;
    std::size_t count = 0;
    for (std::size_t l = 0; l < masked_model.size(); ++l) {
        for (std::size_t b = 0; b < inputs_[l].size(); ++b) {
            const std::vector<float> out = layer_output(masked_model[l], inputs_[l][b]);
            const std::vector<float>& ref = outputs_[l][b];
            for (std::size_t i = 0; i < out.size(); ++i) {
                const double diff = static_cast<double>(out[i]) - ref[i];
                sse += diff * diff;
            }
            count += out.size();
        }
    }
    return count == 0 ? 0.0 : -sse / static_cast<double>(count);
}

SensitivityReport sensitivity_scan(const std::vector<WeightTensor>& model, GrainShape shape,
                                   const std::vector<double>& grid, Evaluator& eval) {
    if (grid.empty()) throw InvalidArgument("sensitivity grid is empty");
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (!(grid[i] >= 0.0 && grid[i] < 1.0))
            throw InvalidArgument("sensitivity grid value " + std::to_string(grid[i]) +
                                  " is outside [0, 1)");
        if (i > 0 && grid[i] <= grid[i - 1])
            throw InvalidArgument("sensitivity grid must be strictly increasing");
    }

    SensitivityReport report;
    for (const WeightTensor& tensor : model) report.layers.push_back(tensor.spec.name);
    report.points.resize(model.size());

    for (std::size_t l = 0; l < model.size(); ++l) {
        const GrainShape layer_shape = effective_shape(model[l].spec, shape);
        for (double sparsity : grid) {
            std::vector<WeightTensor> probe = model;
            const PruneMask mask = prune_to_sparsity(model[l], layer_shape, sparsity);
            probe[l] = apply_mask(model[l], mask);
            double value = 0.0;
            try {
                value = eval.score(probe);
            } catch (const std::exception& e) {
                throw Error("sensitivity scan failed for layer '" + model[l].spec.name +
                            "' at sparsity " + std::to_string(sparsity) + ": " + e.what());
            }
            report.points[l].push_back({sparsity, value});
        }
    }
    return report;
}

std::map<std::string, double> plan_stage(const SensitivityReport& report, double budget) {
    if (budget < 0.0) throw InvalidArgument("plan budget must be non-negative");
    std::map<std::string, double> targets;
    for (std::size_t l = 0; l < report.layers.size(); ++l) {
        const auto& points = report.points[l];
        const auto anchor = std::find_if(points.begin(), points.end(),
                                         [](const SensitivityPoint& p) { return p.sparsity == 0.0; });
        if (anchor == points.end())
            throw InvalidArgument("layer '" + report.layers[l] +
                                  "': sensitivity report lacks the 0-sparsity anchor");
        double best = 0.0;
        for (const SensitivityPoint& p : points)
            if (anchor->score - p.score <= budget && p.sparsity > best) best = p.sparsity;
        targets[report.layers[l]] = best;
    }
    return targets;
}

IterativePruneResult iterative_prune(const std::vector<WeightTensor>& model, GrainShape shape,
                                     const PruneSchedule& schedule, Evaluator& eval,
                                     const StageObserver& on_stage) {
    schedule.validate(model.size());

    std::vector<WeightTensor> weights = model;
    std::vector<GrainShape> shapes;
    IterativePruneResult result;
    for (const WeightTensor& tensor : model) {
        shapes.push_back(effective_shape(tensor.spec, shape));
        result.masks.push_back(all_keep_mask(tensor.spec));
    }

    for (std::size_t stage = 0; stage < schedule.stage_targets.size(); ++stage) {
        for (std::size_t l = 0; l < weights.size(); ++l)
            result.masks[l] = prune_to_sparsity_nested(
                weights[l], shapes[l], schedule.stage_targets[stage][l], result.masks[l]);

        std::vector<WeightTensor> masked;
        masked.reserve(weights.size());
        for (std::size_t l = 0; l < weights.size(); ++l)
            masked.push_back(apply_mask(weights[l], result.masks[l]));

        result.curve.push_back({conv_density(model, result.masks), eval.score(masked)});
        if (on_stage) on_stage(stage, result.masks);

        if (stage + 1 < schedule.stage_targets.size()) {
            weights = std::move(masked);
            eval.retrain(weights, result.masks);
            // keep deleted grains at zero whatever the hook did
            for (std::size_t l = 0; l < weights.size(); ++l)
                weights[l] = apply_mask(weights[l], result.masks[l]);
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Mask serialization: JSON + base64 bitset, LSB-first within each byte.

namespace {

const char kBase64Alphabet[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    for (std::size_t i = 0; i < bytes.size(); i += 3) {
        std::uint32_t chunk = static_cast<std::uint32_t>(bytes[i]) << 16;
        if (i + 1 < bytes.size()) chunk |= static_cast<std::uint32_t>(bytes[i + 1]) << 8;
        if (i + 2 < bytes.size()) chunk |= bytes[i + 2];
        out.push_back(kBase64Alphabet[(chunk >> 18) & 0x3f]);
        out.push_back(kBase64Alphabet[(chunk >> 12) & 0x3f]);
        out.push_back(i + 1 < bytes.size() ? kBase64Alphabet[(chunk >> 6) & 0x3f] : '=');
        out.push_back(i + 2 < bytes.size() ? kBase64Alphabet[chunk & 0x3f] : '=');
    }
    return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
    auto value_of = [](char c) -> int {
        if (c >= 'A' && c <= 'Z') return c - 'A';
        if (c >= 'a' && c <= 'z') return c - 'a' + 26;
        if (c >= '0' && c <= '9') return c - '0' + 52;
        if (c == '+') return 62;
        if (c == '/') return 63;
        return -1;
    };
    std::vector<std::uint8_t> out;
    std::uint32_t chunk = 0;
    int have = 0;
    for (char c : text) {
        if (c == '=') break;
        const int v = value_of(c);
        if (v < 0) throw DataError("invalid base64 character in mask file");
        chunk = (chunk << 6) | static_cast<std::uint32_t>(v);
        if (++have == 4) {
            out.push_back(static_cast<std::uint8_t>((chunk >> 16) & 0xff));
            out.push_back(static_cast<std::uint8_t>((chunk >> 8) & 0xff));
            out.push_back(static_cast<std::uint8_t>(chunk & 0xff));
            have = 0;
            chunk = 0;
        }
    }
    if (have == 2) {
        out.push_back(static_cast<std::uint8_t>((chunk >> 4) & 0xff));
    } else if (have == 3) {
        out.push_back(static_cast<std::uint8_t>((chunk >> 10) & 0xff));
        out.push_back(static_cast<std::uint8_t>((chunk >> 2) & 0xff));
    } else if (have == 1) {
        throw DataError("truncated base64 payload in mask file");
    }
    return out;
}

std::vector<std::uint8_t> pack_bits(const std::vector<std::uint8_t>& bits) {
    std::vector<std::uint8_t> bytes((bits.size() + 7) / 8, 0);
    for (std::size_t i = 0; i < bits.size(); ++i)
        if (bits[i]) bytes[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
    return bytes;
}

std::vector<std::uint8_t> unpack_bits(const std::vector<std::uint8_t>& bytes,
                                      std::size_t count) {
    if (bytes.size() < (count + 7) / 8)
        throw DataError("mask bitset is shorter than its declared weight count");
    std::vector<std::uint8_t> bits(count);
    for (std::size_t i = 0; i < count; ++i)
        bits[i] = (bytes[i / 8] >> (i % 8)) & 1u;
    return bits;
}

} // namespace

void save_masks(const std::filesystem::path& path, const std::vector<PruneMask>& masks,
                const std::vector<GrainShape>& shapes) {
    if (masks.size() != shapes.size())
        throw InvalidArgument("mask and shape lists differ in length");
    json entries = json::array();
    for (std::size_t i = 0; i < masks.size(); ++i) {
        entries.push_back({{"layer", masks[i].layer},
                           {"granularity", grain_shape_name(shapes[i])},
                           {"weights", masks[i].keep.size()},
                           {"density", masks[i].density()},
                           {"keep_bits", base64_encode(pack_bits(masks[i].keep))}});
    }
    write_file_atomic(path, json{{"masks", entries}}.dump(2) + "\n");
}

std::vector<std::pair<PruneMask, GrainShape>> load_masks(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open mask file '" + path.string() + "'");
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw DataError("mask file '" + path.string() + "': " + e.what());
    }
    if (!doc.contains("masks") || !doc["masks"].is_array())
        throw DataError("mask file '" + path.string() + "' has no masks array");
    std::vector<std::pair<PruneMask, GrainShape>> result;
    for (const json& entry : doc["masks"]) {
        try {
            PruneMask mask;
            mask.layer = entry.at("layer").get<std::string>();
            const auto count = entry.at("weights").get<std::size_t>();
            mask.keep = unpack_bits(base64_decode(entry.at("keep_bits").get<std::string>()),
                                    count);
            result.emplace_back(std::move(mask),
                                parse_grain_shape(entry.at("granularity").get<std::string>()));
        } catch (const json::exception& e) {
            throw DataError("mask file '" + path.string() + "': " + e.what());
        }
    }
    return result;
}

} // namespace sparsegrain

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include <unistd.h>

#include "relrec/data.hpp"
#include "relrec/eval.hpp"
#include "relrec/model.hpp"
#include "relrec/rng.hpp"
#include "relrec/trainer.hpp"

namespace relrec::testing {

// Synthetic log where each user walks forward through the catalogue with
// small random jumps, so the next items are predictable from recent ones.
inline std::vector<Interaction> synthetic_log(std::size_t users, std::size_t items, std::size_t min_len,
                                              std::size_t max_len, std::uint64_t seed) {
    std::vector<Interaction> out;
    CounterRng rng(seed);
    for (std::size_t u = 0; u < users; ++u) {
        const std::size_t len = min_len + rng.below(max_len - min_len + 1);
        std::size_t item = rng.below(items);
        for (std::size_t t = 0; t < len; ++t) {
            out.push_back({"u" + std::to_string(u), "i" + std::to_string(item), static_cast<std::int64_t>(t), {}});
            item = (item + 1 + rng.below(3)) % items;
        }
    }
    return out;
}

inline Dataset synthetic_dataset(std::size_t users = 50, std::size_t items = 40, std::uint64_t seed = 7) {
    const auto log = synthetic_log(users, items, 12, 30, seed);
    return build_dataset(log, 1, "synthetic");
}

// A unique scratch directory under the system temp dir, removed on scope exit.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        path_ = std::filesystem::temp_directory_path() /
                ("relrec-" + tag + "-" + std::to_string(mix64(reinterpret_cast<std::uintptr_t>(this) ^
                                                               static_cast<std::uint64_t>(::getpid()))));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

// Metric oracle written from the definitions: DCG is summed position by
// position, and the ideal DCG is the best DCG over every arrangement.
inline double oracle_dcg(const std::vector<std::size_t>& order, std::size_t num_positives, std::size_t cutoff,
                         GainMode gain) {
    double dcg = 0.0;
    for (std::size_t pos = 0; pos < order.size() && pos < cutoff; ++pos) {
        if (order[pos] < num_positives) {
            const double g = gain == GainMode::graded ? static_cast<double>(num_positives - order[pos]) : 1.0;
            dcg += g / std::log2(static_cast<double>(pos) + 2.0);
        }
    }
    return dcg;
}

inline double oracle_hr(const std::vector<std::size_t>& order, std::size_t num_positives, std::size_t cutoff,
                        HitMode mode) {
    std::size_t hits = 0;
    for (std::size_t pos = 0; pos < order.size() && pos < cutoff; ++pos) hits += order[pos] < num_positives;
    if (mode == HitMode::any_hit) return hits > 0 ? 1.0 : 0.0;
    return static_cast<double>(hits) / static_cast<double>(std::min(num_positives, cutoff));
}

struct OracleSweep {
    std::size_t arrangements = 0;
    double max_ndcg_error = 0.0;
    double max_hr_error = 0.0;
};

// Every permutation of n <= max_candidates candidates, every positive count
// and cutoff, in the given gain mode.
inline OracleSweep exhaustive_metric_check(std::size_t max_candidates, GainMode gain) {
    OracleSweep out;
    for (std::size_t n = 1; n <= max_candidates; ++n) {
        std::vector<std::size_t> order(n);
        for (std::size_t k_pos = 1; k_pos <= n; ++k_pos) {
            for (std::size_t cutoff = 1; cutoff <= n + 1; ++cutoff) {
                std::iota(order.begin(), order.end(), 0);
                double ideal = 0.0;
                do {
                    ideal = std::max(ideal, oracle_dcg(order, k_pos, cutoff, gain));
                } while (std::next_permutation(order.begin(), order.end()));
                std::iota(order.begin(), order.end(), 0);
                do {
                    const double expect = oracle_dcg(order, k_pos, cutoff, gain) / ideal;
                    const double got = ndcg_at_k(order, k_pos, cutoff, gain);
                    out.max_ndcg_error = std::max(out.max_ndcg_error, std::abs(expect - got));
                    for (const auto mode : {HitMode::recall, HitMode::any_hit}) {
                        const double h = hr_at_k(order, k_pos, cutoff, mode);
                        out.max_hr_error = std::max(out.max_hr_error, std::abs(h - oracle_hr(order, k_pos, cutoff, mode)));
                    }
                    ++out.arrangements;
                } while (std::next_permutation(order.begin(), order.end()));
            }
        }
    }
    return out;
}

struct BlockError {
    std::string name;
    double max_abs_diff = 0.0;
    double max_abs_numeric = 0.0;
    double max_abs_analytic = 0.0;
    // Largest difference relative to the block's largest numeric gradient.
    // Blocks whose true gradient vanishes identically fall back to the
    // absolute difference.
    double relative() const {
        return max_abs_numeric > 1e-9 ? max_abs_diff / max_abs_numeric : max_abs_diff;
    }
};

// Central finite differences of batch_loss against the tape gradients, one
// entry per parameter block. Dropout is off (train_mode = false).
inline std::vector<BlockError> gradient_check(Model& model, const TrainingBatch& batch, double step,
                                              WeightOrientation orientation = WeightOrientation::nearest_first) {
    model.zero_grad();
    batch_loss(model, batch, false, 0, orientation, true);
    std::vector<Matrix> analytic;
    for (const auto& p : model.params()) analytic.push_back(p.grad);

    std::vector<BlockError> out;
    for (std::size_t b = 0; b < model.params().size(); ++b) {
        auto& p = model.params()[b];
        BlockError e{p.name};
        for (Eigen::Index i = 0; i < p.value.size(); ++i) {
            double& x = p.value.data()[i];
            const double saved = x;
            x = saved + step;
            const double up = batch_loss(model, batch, false, 0, orientation, false);
            x = saved - step;
            const double down = batch_loss(model, batch, false, 0, orientation, false);
            x = saved;
            const double numeric = (up - down) / (2.0 * step);
            const double a = analytic[b].data()[i];
            e.max_abs_diff = std::max(e.max_abs_diff, std::abs(a - numeric));
            e.max_abs_numeric = std::max(e.max_abs_numeric, std::abs(numeric));
            e.max_abs_analytic = std::max(e.max_abs_analytic, std::abs(a));
        }
        out.push_back(e);
    }
    return out;
}

// Toy setting: hidden 4, one context of 5 items from a catalogue of 10,
// 3 weighted positives and 3 negatives at the final position.
inline TrainingBatch toy_batch(std::size_t positives = 3, std::size_t negatives = 3,
                               RelevanceKind kind = RelevanceKind::linear) {
    const std::vector<ItemId> span = {3, 7, 1, 9, 4, 2, 8, 5};  // 5 inputs + 3 targets
    TrainingBatch batch;
    append_example(batch, span, 5, positives, kind, TargetScheme::last);
    const std::vector<ItemId> negs = {6, 10, 3};
    auto& last = batch.groups.back();
    last.negatives.assign(negs.begin(), negs.begin() + static_cast<std::ptrdiff_t>(negatives));
    for (std::size_t g = 0; g + 1 < batch.groups.size(); ++g) {
        batch.groups[g].negatives = {static_cast<ItemId>(6 + g % 5)};
    }
    return batch;
}

inline ModelConfig toy_config(std::size_t heads = 1) {
    ModelConfig c;
    c.hidden_dim = 4;
    c.num_blocks = 2;
    c.num_heads = heads;
    c.max_len = 5;
    c.dropout_rate = 0.0;
    c.num_items = 10;
    c.seed = 3;
    return c;
}

}  // namespace relrec::testing

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "relrec/loss.hpp"
#include "relrec/model.hpp"
#include "relrec/relevance.hpp"
#include "relrec/split.hpp"

namespace relrec {

// Where the multi-positive term attaches inside a training sequence.
//   last: interior positions predict the next item (one positive); the
//         final input position predicts the next `pos` items, weighted.
//   all:  every position predicts its next `pos` items (fewer near the end),
//         weighted by the profile of the available length.
enum class TargetScheme { last, all };

std::string_view to_string(TargetScheme s) noexcept;
TargetScheme parse_target_scheme(std::string_view name);

struct TrainConfig {
    std::size_t batch_size = 128;
    double lr = 1e-3;
    std::size_t train_positives = 1;
    // Negatives at the multi-positive position; 0 means "same as positives".
    // Single-positive positions always draw one negative.
    std::size_t negatives = 0;
    RelevanceKind relevance = RelevanceKind::linear;
    WeightOrientation orientation = WeightOrientation::nearest_first;
    TargetScheme scheme = TargetScheme::last;
    std::uint64_t seed = 42;
};

// One hidden-state row scored against its positives (nearest first) and
// sampled negatives.
struct TargetGroup {
    std::size_t row = 0;
    std::vector<ItemId> positives;
    std::vector<ItemId> negatives;
    std::vector<double> weights;
};

struct TrainingBatch {
    SequenceBatch inputs;
    std::vector<TargetGroup> groups;
};

// Input window and targets for one user's training span. Negatives are left
// empty. Returns false when the span is too short (< 2 items).
bool append_example(TrainingBatch& batch, std::span<const ItemId> train_span, std::size_t max_len,
                    std::size_t train_positives, RelevanceKind relevance, TargetScheme scheme);

// Mean over groups of the relevance loss, taken on the model's logits. When
// `backward` is set the gradients are accumulated into model.params().
double batch_loss(Model& model, const TrainingBatch& batch, bool train_mode, std::uint64_t dropout_key,
                  WeightOrientation orientation, bool backward);

class Trainer {
public:
    Trainer(Model& model, const SplitDataset& split, const TrainConfig& config);

    // One pass over all trainable users in a seeded order; returns the mean
    // batch loss. Randomness depends only on (seed, epoch).
    double train_epoch(std::uint64_t epoch);

    AdamState& optimizer() noexcept { return optimizer_; }
    const AdamState& optimizer() const noexcept { return optimizer_; }

    // Batches of epoch `epoch` (exposed for tests).
    std::vector<TrainingBatch> make_batches(std::uint64_t epoch) const;

private:
    Model& model_;
    const SplitDataset& split_;
    TrainConfig config_;
    AdamState optimizer_;
    std::vector<std::size_t> trainable_;          // indices into split_.users
    std::vector<std::vector<ItemId>> blocked_;    // sorted train items per user
};

}  // namespace relrec

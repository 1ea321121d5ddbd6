#include "relrec/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "relrec/error.hpp"
#include "relrec/rng.hpp"

namespace relrec {

namespace {

constexpr std::uint64_t kShuffleTag = 0x73687566ULL;  // "shuf"
constexpr std::uint64_t kNegativeTag = 0x6e656773ULL;  // "negs"
constexpr std::uint64_t kDropoutTag = 0x64726f70ULL;  // "drop"

void add_group(TrainingBatch& batch, std::size_t row, std::span<const ItemId> positives, RelevanceKind relevance) {
    TargetGroup g;
    g.row = row;
    g.positives.assign(positives.begin(), positives.end());
    const auto& profile = cached_profile(relevance, positives.size());
    g.weights = profile.weights;
    batch.groups.push_back(std::move(g));
}

}  // namespace

std::string_view to_string(TargetScheme s) noexcept {
    return s == TargetScheme::last ? "last" : "all";
}

TargetScheme parse_target_scheme(std::string_view name) {
    if (name == "last") return TargetScheme::last;
    if (name == "all") return TargetScheme::all;
    throw Error(ErrorCode::invalid_argument, "unknown target scheme: " + std::string(name));
}

bool append_example(TrainingBatch& batch, std::span<const ItemId> train_span, std::size_t max_len,
                    std::size_t train_positives, RelevanceKind relevance, TargetScheme scheme) {
    const std::size_t n = train_span.size();
    if (n < 2 || train_positives < 1) {
        return false;
    }
    if (batch.inputs.batch == 0) {
        batch.inputs.len = max_len;
    } else if (batch.inputs.len != max_len) {
        throw Error(ErrorCode::invalid_argument, "training batch mixes window lengths");
    }
    const std::size_t pos = std::min(train_positives, n - 1);
    // Inputs are train_span[0, input_end); the window keeps its last max_len.
    const std::size_t input_end = scheme == TargetScheme::last ? n - pos : n - 1;
    const std::size_t m = std::min(input_end, max_len);
    const std::size_t start = input_end - m;
    const std::size_t base_row = batch.inputs.batch * max_len + (max_len - m);

    const auto padded = pad_context(train_span.subspan(start, m), max_len);
    batch.inputs.ids.insert(batch.inputs.ids.end(), padded.begin(), padded.end());
    ++batch.inputs.batch;

    for (std::size_t i = 0; i < m; ++i) {
        const std::size_t g = start + i;
        std::size_t count = 1;
        if (scheme == TargetScheme::all) {
            count = std::min(pos, n - 1 - g);
        } else if (i + 1 == m) {
            count = pos;
        }
        add_group(batch, base_row + i, train_span.subspan(g + 1, count), relevance);
    }
    return true;
}

double batch_loss(Model& model, const TrainingBatch& batch, bool train_mode, std::uint64_t dropout_key,
                  WeightOrientation orientation, bool backward) {
    if (batch.groups.empty()) {
        throw Error(ErrorCode::invalid_argument, "training batch has no targets");
    }
    Tape tape(backward);
    const Var hidden = model.forward(tape, batch.inputs, train_mode, dropout_key);
    const Var table = tape.param(model.item_embeddings());

    std::vector<std::size_t> rows;
    std::vector<ItemId> items;
    for (const auto& g : batch.groups) {
        rows.insert(rows.end(), g.positives.size() + g.negatives.size(), g.row);
        items.insert(items.end(), g.positives.begin(), g.positives.end());
        items.insert(items.end(), g.negatives.begin(), g.negatives.end());
    }
    const Var logits = gather_dot(tape, hidden, rows, table, items);
    const auto& z = tape.value(logits);

    Matrix dz(z.rows(), 1);
    const std::span<const double> zs(z.data(), static_cast<std::size_t>(z.size()));
    const std::span<double> dzs(dz.data(), static_cast<std::size_t>(dz.size()));
    double total = 0.0;
    std::size_t offset = 0;
    for (const auto& g : batch.groups) {
        const auto np = g.positives.size();
        const auto nn = g.negatives.size();
        total += relevance_loss_logits(zs.subspan(offset, np), zs.subspan(offset + np, nn), g.weights,
                                       dzs.subspan(offset, np), dzs.subspan(offset + np, nn), orientation);
        offset += np + nn;
    }
    const double groups = static_cast<double>(batch.groups.size());
    const double loss = total / groups;
    if (!std::isfinite(loss)) {
        throw Error(ErrorCode::numeric, "non-finite training loss");
    }
    if (backward) {
        dz /= groups;
        tape.backward(logits, dz);
    }
    return loss;
}

Trainer::Trainer(Model& model, const SplitDataset& split, const TrainConfig& config)
    : model_(model), split_(split), config_(config), optimizer_(make_adam_state(model.params())) {
    if (config_.batch_size < 1) {
        throw Error(ErrorCode::invalid_config, "batch_size must be >= 1");
    }
    if (config_.train_positives < 1) {
        throw Error(ErrorCode::invalid_config, "train_positives must be >= 1");
    }
    if (split_.num_items != model_.config().num_items) {
        throw Error(ErrorCode::incompatible, "model and split disagree on catalogue size");
    }
    blocked_.resize(split_.users.size());
    for (std::size_t u = 0; u < split_.users.size(); ++u) {
        const auto& train = split_.users[u].train;
        if (train.size() < 2) {
            continue;
        }
        trainable_.push_back(u);
        auto& b = blocked_[u];
        b.assign(train.begin(), train.end());
        std::sort(b.begin(), b.end());
        b.erase(std::unique(b.begin(), b.end()), b.end());
    }
    if (trainable_.empty()) {
        throw Error(ErrorCode::empty_dataset, "no user has a training span of length >= 2");
    }
}

std::vector<TrainingBatch> Trainer::make_batches(std::uint64_t epoch) const {
    const std::uint64_t epoch_key = derive_key(config_.seed, epoch);
    std::vector<std::size_t> order = trainable_;
    CounterRng shuffle(derive_key(epoch_key, kShuffleTag));
    for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[shuffle.below(i)]);
    }

    const std::size_t num_items = split_.num_items;
    const std::size_t max_len = model_.config().max_len;
    std::vector<TrainingBatch> batches;
    for (std::size_t start = 0; start < order.size(); start += config_.batch_size) {
        TrainingBatch batch;
        const std::size_t end = std::min(order.size(), start + config_.batch_size);
        for (std::size_t i = start; i < end; ++i) {
            const std::size_t u = order[i];
            const std::size_t first_group = batch.groups.size();
            append_example(batch, split_.users[u].train, max_len, config_.train_positives, config_.relevance,
                           config_.scheme);
            const auto& blocked = blocked_[u];
            CounterRng rng(derive_key(derive_key(epoch_key, kNegativeTag), static_cast<std::uint64_t>(u)));
            const std::size_t eligible = num_items - blocked.size();
            for (std::size_t gi = first_group; gi < batch.groups.size(); ++gi) {
                auto& g = batch.groups[gi];
                const bool multi = config_.scheme == TargetScheme::all || gi + 1 == batch.groups.size();
                std::size_t count = 1;
                if (multi) {
                    count = config_.negatives != 0 ? config_.negatives : g.positives.size();
                }
                if (count > eligible) {
                    throw Error(ErrorCode::invalid_argument,
                                "user " + std::to_string(split_.users[u].user) + " has too few eligible negatives");
                }
                while (g.negatives.size() < count) {
                    const auto candidate = static_cast<ItemId>(rng.below(num_items) + 1);
                    if (std::binary_search(blocked.begin(), blocked.end(), candidate) ||
                        std::find(g.negatives.begin(), g.negatives.end(), candidate) != g.negatives.end()) {
                        continue;
                    }
                    g.negatives.push_back(candidate);
                }
            }
        }
        batches.push_back(std::move(batch));
    }
    return batches;
}

double Trainer::train_epoch(std::uint64_t epoch) {
    const std::uint64_t epoch_key = derive_key(config_.seed, epoch);
    const AdamConfig adam{config_.lr};
    auto batches = make_batches(epoch);
    double total = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
        model_.zero_grad();
        total += batch_loss(model_, batches[b], true, derive_key(derive_key(epoch_key, kDropoutTag), b),
                            config_.orientation, true);
        model_.item_embeddings().grad.row(kPaddingItem).setZero();
        adam_step(model_.params(), optimizer_, adam);
    }
    return total / static_cast<double>(batches.size());
}

}  // namespace relrec

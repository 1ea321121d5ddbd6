#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "relrec/data.hpp"
#include "relrec/model.hpp"
#include "relrec/rng.hpp"
#include "relrec/split.hpp"

namespace relrec {

enum class Protocol { traditional, mfi };
enum class GainMode { graded, binary };
// recall: hits / min(K, k); any_hit: 1 if any positive is in the top k.
enum class HitMode { recall, any_hit };

std::string_view to_string(Protocol p) noexcept;
std::string_view to_string(GainMode g) noexcept;
GainMode parse_gain_mode(std::string_view name);
HitMode parse_hit_mode(std::string_view name);

// n distinct ids drawn uniformly from {1..num_items} minus `excluded`.
std::vector<ItemId> sample_negatives(std::span<const ItemId> excluded, std::size_t num_items, std::size_t n,
                                     CounterRng& rng, UserId user = 0);

// Candidate indices ordered by descending score; equal scores are ordered by
// ascending item id, then by candidate index.
std::vector<std::size_t> rank_candidates(std::span<const double> scores, std::span<const ItemId> items);

// In both metrics a ranking is a permutation of candidate indices where
// index j < num_positives is the positive with temporal rank j + 1 (0 is
// the nearest future item) and the rest are negatives.
double ndcg_at_k(std::span<const std::size_t> ranking, std::size_t num_positives, std::size_t cutoff,
                 GainMode gain = GainMode::graded);
double hr_at_k(std::span<const std::size_t> ranking, std::size_t num_positives, std::size_t cutoff,
               HitMode mode = HitMode::recall);

struct EvalCase {
    UserId user = 0;
    std::vector<ItemId> context;
    std::vector<ItemId> positives;  // positives[0] = nearest future item
    std::vector<ItemId> negatives;

    // positives followed by negatives
    std::vector<ItemId> candidates() const;
};

// Which held-out span to score: the test span (context = train + valid) or
// the validation span (context = train).
enum class EvalTarget { test, valid };

struct EvalConfig {
    std::size_t k_eval = 1;
    std::size_t cutoff = 10;
    std::size_t num_negatives = 100;
    GainMode gain = GainMode::graded;
    HitMode hit = HitMode::recall;
    std::uint64_t seed = 0;
    EvalTarget target = EvalTarget::test;
};

struct MetricRecord {
    double ndcg = 0.0;
    double hr = 0.0;
    std::size_t cutoff = 10;
    std::size_t k_eval = 1;
    Protocol protocol = Protocol::traditional;
    std::size_t users_evaluated = 0;
    std::size_t users_skipped = 0;
};

// Negatives exclude the user's whole sequence and depend only on
// (seed, user), so every epoch and every K sees the same negatives.
std::vector<EvalCase> build_eval_cases(const SplitDataset& split, const EvalConfig& config);

class Scorer {
public:
    virtual ~Scorer() = default;
    // One score per candidate of every case.
    virtual std::vector<std::vector<double>> score(std::span<const EvalCase> cases) const = 0;
};

class ModelScorer final : public Scorer {
public:
    explicit ModelScorer(const Model& model, std::size_t batch_size = 256)
        : model_(model), batch_size_(batch_size) {}
    std::vector<std::vector<double>> score(std::span<const EvalCase> cases) const override;

private:
    const Model& model_;
    std::size_t batch_size_;
};

// Scores by item frequency over the training spans.
class PopularityScorer final : public Scorer {
public:
    explicit PopularityScorer(const SplitDataset& split);
    std::vector<std::vector<double>> score(std::span<const EvalCase> cases) const override;

private:
    std::vector<double> counts_;
};

// Independent uniform scores per (user, item).
class RandomScorer final : public Scorer {
public:
    explicit RandomScorer(std::uint64_t seed) : seed_(seed) {}
    std::vector<std::vector<double>> score(std::span<const EvalCase> cases) const override;

private:
    std::uint64_t seed_;
};

// Per-user NDCG@k and HR@k averaged over evaluable users, in user order.
MetricRecord evaluate(const Scorer& scorer, const SplitDataset& split, const EvalConfig& config);
MetricRecord evaluate_cases(const Scorer& scorer, std::span<const EvalCase> cases, const EvalConfig& config,
                            std::size_t users_skipped);
// Metrics from precomputed candidate scores (scores[i] follows
// cases[i].candidates()).
MetricRecord metrics_from_scores(std::span<const EvalCase> cases, std::span<const std::vector<double>> scores,
                                 const EvalConfig& config, std::size_t users_skipped);

// Single-positive protocol computed from the positive's rank among its
// negatives directly (no sort): NDCG = 1/log2(rank + 2), HR = rank < k.
struct TraditionalResult {
    double ndcg = 0.0;
    double hr = 0.0;
};
TraditionalResult traditional_metrics(double positive_score, ItemId positive_item,
                                      std::span<const double> negative_scores,
                                      std::span<const ItemId> negative_items, std::size_t cutoff);
MetricRecord evaluate_traditional(const Scorer& scorer, const SplitDataset& split, const EvalConfig& config);

}  // namespace relrec

#include "relrec/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <unordered_set>

#include "relrec/error.hpp"

namespace relrec {

namespace {

constexpr std::uint64_t kNegativeStreamTag = 0x6576616c6e6567ULL;  // "evalneg"

double discount(std::size_t position) {  // 1-based
    return 1.0 / std::log2(static_cast<double>(position) + 1.0);
}

void check_metric_args(std::size_t num_positives, std::size_t cutoff) {
    if (num_positives == 0) {
        throw Error(ErrorCode::invalid_argument, "metric needs at least one positive");
    }
    if (cutoff == 0) {
        throw Error(ErrorCode::invalid_argument, "metric cutoff must be >= 1");
    }
}

}  // namespace

std::string_view to_string(Protocol p) noexcept {
    return p == Protocol::traditional ? "traditional" : "mfi";
}

std::string_view to_string(GainMode g) noexcept {
    return g == GainMode::graded ? "graded" : "binary";
}

GainMode parse_gain_mode(std::string_view name) {
    if (name == "graded") return GainMode::graded;
    if (name == "binary") return GainMode::binary;
    throw Error(ErrorCode::invalid_argument, "unknown gain mode: " + std::string(name));
}

HitMode parse_hit_mode(std::string_view name) {
    if (name == "recall") return HitMode::recall;
    if (name == "any" || name == "any_hit") return HitMode::any_hit;
    throw Error(ErrorCode::invalid_argument, "unknown hit mode: " + std::string(name));
}

std::vector<ItemId> sample_negatives(std::span<const ItemId> excluded, std::size_t num_items, std::size_t n,
                                     CounterRng& rng, UserId user) {
    std::vector<ItemId> blocked(excluded.begin(), excluded.end());
    std::sort(blocked.begin(), blocked.end());
    blocked.erase(std::unique(blocked.begin(), blocked.end()), blocked.end());
    const auto in_range = std::count_if(blocked.begin(), blocked.end(), [&](ItemId i) {
        return i >= 1 && static_cast<std::size_t>(i) <= num_items;
    });
    const std::size_t eligible = num_items - static_cast<std::size_t>(in_range);
    if (eligible < n) {
        throw Error(ErrorCode::invalid_argument, "user " + std::to_string(user) + " has only " +
                                                     std::to_string(eligible) + " eligible negatives, " +
                                                     std::to_string(n) + " requested");
    }
    auto is_blocked = [&](ItemId i) { return std::binary_search(blocked.begin(), blocked.end(), i); };

    std::vector<ItemId> out;
    out.reserve(n);
    if (2 * n > eligible) {
        // Dense request: partial Fisher-Yates over the explicit eligible list.
        std::vector<ItemId> pool;
        pool.reserve(eligible);
        for (std::size_t i = 1; i <= num_items; ++i) {
            if (!is_blocked(static_cast<ItemId>(i))) {
                pool.push_back(static_cast<ItemId>(i));
            }
        }
        for (std::size_t j = 0; j < n; ++j) {
            const auto pick = j + rng.below(pool.size() - j);
            std::swap(pool[j], pool[pick]);
            out.push_back(pool[j]);
        }
        return out;
    }
    std::unordered_set<ItemId> chosen;
    while (out.size() < n) {
        const auto candidate = static_cast<ItemId>(rng.below(num_items) + 1);
        if (is_blocked(candidate) || !chosen.insert(candidate).second) {
            continue;
        }
        out.push_back(candidate);
    }
    return out;
}

std::vector<std::size_t> rank_candidates(std::span<const double> scores, std::span<const ItemId> items) {
    if (scores.size() != items.size()) {
        throw Error(ErrorCode::invalid_argument, "rank_candidates: scores and items differ in length");
    }
    for (const double s : scores) {
        if (std::isnan(s)) {
            throw Error(ErrorCode::numeric, "rank_candidates: NaN score");
        }
    }
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) {
            return scores[a] > scores[b];
        }
        return items[a] < items[b];
    });
    return order;
}

double ndcg_at_k(std::span<const std::size_t> ranking, std::size_t num_positives, std::size_t cutoff,
                 GainMode gain) {
    check_metric_args(num_positives, cutoff);
    auto gain_of = [&](std::size_t temporal_index) {  // 0-based
        return gain == GainMode::graded ? static_cast<double>(num_positives - temporal_index) : 1.0;
    };
    double dcg = 0.0;
    const std::size_t depth = std::min(cutoff, ranking.size());
    for (std::size_t p = 0; p < depth; ++p) {
        if (ranking[p] < num_positives) {
            dcg += gain_of(ranking[p]) * discount(p + 1);
        }
    }
    // Ideal list: positives in temporal order, which also sorts the graded
    // gains in decreasing order.
    double idcg = 0.0;
    for (std::size_t p = 0; p < std::min(num_positives, cutoff); ++p) {
        idcg += gain_of(p) * discount(p + 1);
    }
    return dcg / idcg;
}

double hr_at_k(std::span<const std::size_t> ranking, std::size_t num_positives, std::size_t cutoff,
               HitMode mode) {
    check_metric_args(num_positives, cutoff);
    const std::size_t depth = std::min(cutoff, ranking.size());
    const auto hits = static_cast<std::size_t>(std::count_if(
        ranking.begin(), ranking.begin() + static_cast<std::ptrdiff_t>(depth),
        [&](std::size_t c) { return c < num_positives; }));
    if (mode == HitMode::any_hit) {
        return hits > 0 ? 1.0 : 0.0;
    }
    return static_cast<double>(hits) / static_cast<double>(std::min(num_positives, cutoff));
}

std::vector<ItemId> EvalCase::candidates() const {
    std::vector<ItemId> out(positives);
    out.insert(out.end(), negatives.begin(), negatives.end());
    return out;
}

std::vector<EvalCase> build_eval_cases(const SplitDataset& split, const EvalConfig& config) {
    if (config.k_eval < 1) {
        throw Error(ErrorCode::invalid_argument, "k_eval must be >= 1");
    }
    if (config.target == EvalTarget::test && config.k_eval > split.spec.k_test) {
        throw Error(ErrorCode::invalid_argument, "k_eval " + std::to_string(config.k_eval) +
                                                     " exceeds the split's k_test " +
                                                     std::to_string(split.spec.k_test));
    }
    const std::uint64_t stream = derive_key(config.seed, kNegativeStreamTag);
    std::vector<EvalCase> cases;
    cases.reserve(split.users.size());
    for (const auto& us : split.users) {
        if (us.skipped) {
            continue;
        }
        EvalCase c;
        c.user = us.user;
        c.context = us.train;
        if (config.target == EvalTarget::test) {
            c.context.insert(c.context.end(), us.valid.begin(), us.valid.end());
            c.positives.assign(us.test.begin(), us.test.begin() + static_cast<std::ptrdiff_t>(config.k_eval));
        } else {
            if (us.valid.empty()) {
                continue;
            }
            const auto take = std::min(config.k_eval, us.valid.size());
            c.positives.assign(us.valid.begin(), us.valid.begin() + static_cast<std::ptrdiff_t>(take));
        }
        std::vector<ItemId> full(us.train);
        full.insert(full.end(), us.valid.begin(), us.valid.end());
        full.insert(full.end(), us.test.begin(), us.test.end());
        CounterRng rng(derive_key(stream, static_cast<std::uint64_t>(us.user)));
        c.negatives = sample_negatives(full, split.num_items, config.num_negatives, rng, us.user);
        cases.push_back(std::move(c));
    }
    return cases;
}

std::vector<std::vector<double>> ModelScorer::score(std::span<const EvalCase> cases) const {
    std::vector<std::vector<double>> out;
    out.reserve(cases.size());
    for (std::size_t start = 0; start < cases.size(); start += batch_size_) {
        const std::size_t end = std::min(cases.size(), start + batch_size_);
        std::vector<std::vector<ItemId>> contexts;
        contexts.reserve(end - start);
        for (std::size_t i = start; i < end; ++i) {
            contexts.push_back(cases[i].context);
        }
        const Matrix hidden = model_.last_hidden(contexts);
        for (std::size_t i = start; i < end; ++i) {
            const RowVector h = hidden.row(static_cast<Eigen::Index>(i - start));
            out.push_back(model_.score(h, cases[i].candidates()));
        }
    }
    return out;
}

PopularityScorer::PopularityScorer(const SplitDataset& split) : counts_(split.num_items + 1, 0.0) {
    for (const auto& us : split.users) {
        for (const auto item : us.train) {
            counts_[static_cast<std::size_t>(item)] += 1.0;
        }
    }
}

std::vector<std::vector<double>> PopularityScorer::score(std::span<const EvalCase> cases) const {
    std::vector<std::vector<double>> out;
    out.reserve(cases.size());
    for (const auto& c : cases) {
        std::vector<double> s;
        for (const auto item : c.candidates()) {
            s.push_back(counts_.at(static_cast<std::size_t>(item)));
        }
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<std::vector<double>> RandomScorer::score(std::span<const EvalCase> cases) const {
    std::vector<std::vector<double>> out;
    out.reserve(cases.size());
    for (const auto& c : cases) {
        const std::uint64_t user_key = derive_key(seed_, static_cast<std::uint64_t>(c.user));
        std::vector<double> s;
        for (const auto item : c.candidates()) {
            CounterRng rng(derive_key(user_key, static_cast<std::uint64_t>(item)));
            s.push_back(rng.uniform());
        }
        out.push_back(std::move(s));
    }
    return out;
}

MetricRecord metrics_from_scores(std::span<const EvalCase> cases, std::span<const std::vector<double>> scores,
                                 const EvalConfig& config, std::size_t users_skipped) {
    if (cases.empty()) {
        throw Error(ErrorCode::empty_dataset, "no evaluable users");
    }
    if (scores.size() != cases.size()) {
        throw Error(ErrorCode::invalid_argument, "one score vector per case expected");
    }
    MetricRecord record;
    record.cutoff = config.cutoff;
    record.k_eval = config.k_eval;
    record.protocol = config.k_eval == 1 ? Protocol::traditional : Protocol::mfi;
    record.users_skipped = users_skipped;
    double ndcg_sum = 0.0;
    double hr_sum = 0.0;
    for (std::size_t i = 0; i < cases.size(); ++i) {
        const auto candidates = cases[i].candidates();
        const auto ranking = rank_candidates(scores[i], candidates);
        const auto positives = cases[i].positives.size();
        ndcg_sum += ndcg_at_k(ranking, positives, config.cutoff, config.gain);
        hr_sum += hr_at_k(ranking, positives, config.cutoff, config.hit);
    }
    record.users_evaluated = cases.size();
    record.ndcg = ndcg_sum / static_cast<double>(cases.size());
    record.hr = hr_sum / static_cast<double>(cases.size());
    return record;
}

MetricRecord evaluate_cases(const Scorer& scorer, std::span<const EvalCase> cases, const EvalConfig& config,
                            std::size_t users_skipped) {
    if (cases.empty()) {
        throw Error(ErrorCode::empty_dataset, "no evaluable users");
    }
    const auto scores = scorer.score(cases);
    return metrics_from_scores(cases, scores, config, users_skipped);
}

MetricRecord evaluate(const Scorer& scorer, const SplitDataset& split, const EvalConfig& config) {
    const auto cases = build_eval_cases(split, config);
    return evaluate_cases(scorer, cases, config, split.users.size() - cases.size());
}

TraditionalResult traditional_metrics(double positive_score, ItemId positive_item,
                                      std::span<const double> negative_scores,
                                      std::span<const ItemId> negative_items, std::size_t cutoff) {
    if (negative_scores.size() != negative_items.size()) {
        throw Error(ErrorCode::invalid_argument, "traditional_metrics: length mismatch");
    }
    if (std::isnan(positive_score)) {
        throw Error(ErrorCode::numeric, "traditional_metrics: NaN score");
    }
    std::size_t rank = 0;  // number of negatives placed above the positive
    for (std::size_t j = 0; j < negative_scores.size(); ++j) {
        const double s = negative_scores[j];
        if (std::isnan(s)) {
            throw Error(ErrorCode::numeric, "traditional_metrics: NaN score");
        }
        if (s > positive_score || (s == positive_score && negative_items[j] < positive_item)) {
            ++rank;
        }
    }
    TraditionalResult r;
    if (rank < cutoff) {
        r.ndcg = 1.0 / std::log2(static_cast<double>(rank) + 2.0);
        r.hr = 1.0;
    }
    return r;
}

MetricRecord evaluate_traditional(const Scorer& scorer, const SplitDataset& split, const EvalConfig& config) {
    if (config.k_eval != 1) {
        throw Error(ErrorCode::invalid_argument, "traditional protocol uses exactly one positive");
    }
    const auto cases = build_eval_cases(split, config);
    if (cases.empty()) {
        throw Error(ErrorCode::empty_dataset, "no evaluable users");
    }
    const auto scores = scorer.score(cases);
    MetricRecord record;
    record.cutoff = config.cutoff;
    record.k_eval = 1;
    record.protocol = Protocol::traditional;
    record.users_skipped = split.users.size() - cases.size();
    record.users_evaluated = cases.size();
    double ndcg_sum = 0.0;
    double hr_sum = 0.0;
    for (std::size_t i = 0; i < cases.size(); ++i) {
        const std::span<const double> s = scores[i];
        const auto r = traditional_metrics(s[0], cases[i].positives[0], s.subspan(1), cases[i].negatives,
                                           config.cutoff);
        ndcg_sum += r.ndcg;
        hr_sum += r.hr;
    }
    record.ndcg = ndcg_sum / static_cast<double>(cases.size());
    record.hr = hr_sum / static_cast<double>(cases.size());
    return record;
}

}  // namespace relrec

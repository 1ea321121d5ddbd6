#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "relrec/data.hpp"
#include "relrec/tape.hpp"

namespace relrec {

struct ModelConfig {
    std::size_t hidden_dim = 50;
    std::size_t num_blocks = 2;
    std::size_t num_heads = 1;
    std::size_t max_len = 50;
    double dropout_rate = 0.2;
    std::size_t num_items = 0;
    std::uint64_t seed = 42;

    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

// A batch of left-padded contexts, row-major: ids[b * len + t].
struct SequenceBatch {
    std::size_t batch = 0;
    std::size_t len = 0;
    std::vector<ItemId> ids;
};

// Self-attentive next-item model with tied item embeddings.
//
// Per block (pre-normalized queries, residual on the normalized query):
//   q = LN_a(x); x = q + Attn(q Wq, x Wk, x Wv) Wo; x = LN_f(x);
//   x = x + FFN(x); x = x * nonpad
// followed by a final LN and the padding mask. Item and positional
// embeddings enter as E[id] * sqrt(d) + P[t].
class Model {
public:
    explicit Model(const ModelConfig& config);

    const ModelConfig& config() const noexcept { return config_; }

    // Parameter tensors in checkpoint order (see docs/formats.md).
    std::vector<Parameter>& params() noexcept { return params_; }
    const std::vector<Parameter>& params() const noexcept { return params_; }
    Parameter& item_embeddings() noexcept { return params_[0]; }
    const Parameter& item_embeddings() const noexcept { return params_[0]; }

    // Records the forward pass of a batch on `tape` and returns the hidden
    // states ((batch * len) x hidden_dim). Dropout masks are drawn from a
    // counter stream keyed by `dropout_key` and only when train_mode is set.
    // When attention_probs is non-null it receives the attention matrices of
    // every block, ordered [block][sequence * heads + head].
    Var forward(Tape& tape, const SequenceBatch& batch, bool train_mode, std::uint64_t dropout_key,
                std::vector<std::vector<Matrix>>* attention_probs = nullptr);
    Var forward(Tape& tape, const SequenceBatch& batch) const;

    // Inference: hidden states for a context of at most max_len ids
    // (0 = padding), returned as |context| x hidden_dim.
    Matrix hidden_states(std::span<const ItemId> context) const;

    // Final-position hidden state for each context (contexts longer than
    // max_len keep their most recent max_len items).
    Matrix last_hidden(std::span<const std::vector<ItemId>> contexts) const;

    // Dot products with item embeddings; item 0 is rejected.
    std::vector<double> score(const RowVector& hidden, std::span<const ItemId> items) const;

    void zero_grad();

    bool operator==(const Model& other) const;

private:
    Var forward_impl(Tape& tape, const SequenceBatch& batch, bool train_mode, std::uint64_t dropout_key,
                     std::vector<std::vector<Matrix>>* attention_probs,
                     const std::vector<Parameter>& params, std::vector<Parameter>* mutable_params) const;

    ModelConfig config_;
    std::vector<Parameter> params_;
};

// Left-pads (or truncates to the most recent) items to exactly `len` ids.
std::vector<ItemId> pad_context(std::span<const ItemId> items, std::size_t len);

// Adam with the reference defaults (lr 1e-3, betas 0.9/0.98, eps 1e-8).
struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.98;
    double eps = 1e-8;
};

struct AdamState {
    std::uint64_t step = 0;
    std::vector<Matrix> m;
    std::vector<Matrix> v;

    bool operator==(const AdamState&) const = default;
};

AdamState make_adam_state(const std::vector<Parameter>& params);
void adam_step(std::vector<Parameter>& params, AdamState& state, const AdamConfig& config);

// Checkpoint: versioned header + raw little-endian tensors, then the Adam
// moments and an opaque training-state blob. Layout in docs/formats.md.
struct Checkpoint {
    ModelConfig config;
    std::uint64_t epoch = 0;
    std::vector<Matrix> tensors;
    AdamState optimizer;
    std::string training_state;
};

void save_checkpoint(const std::filesystem::path& path, const Model& model, std::uint64_t epoch,
                     const AdamState& optimizer, const std::string& training_state);
Checkpoint read_checkpoint(const std::filesystem::path& path);
// Rebuilds the model from a checkpoint (tensor shapes are validated).
Model model_from_checkpoint(const Checkpoint& checkpoint);

}  // namespace relrec

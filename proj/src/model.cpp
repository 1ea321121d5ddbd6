#include "relrec/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>

#include "relrec/binary_io.hpp"
#include "relrec/error.hpp"
#include "relrec/rng.hpp"

namespace relrec {

namespace {

constexpr char kCheckpointMagic[8] = {'R', 'L', 'R', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kCheckpointVersion = 1;
constexpr double kLayerNormEps = 1e-8;

// Tensor slots inside one attention block, in checkpoint order.
enum BlockSlot : std::size_t {
    attn_ln_gamma,
    attn_ln_beta,
    w_query,
    b_query,
    w_key,
    b_key,
    w_value,
    b_value,
    w_out,
    b_out,
    ffn_ln_gamma,
    ffn_ln_beta,
    w_ffn1,
    b_ffn1,
    w_ffn2,
    b_ffn2,
    kBlockSlots
};

constexpr const char* kSlotNames[kBlockSlots] = {
    "attn_ln.gamma", "attn_ln.beta", "attn.w_query", "attn.b_query", "attn.w_key",   "attn.b_key",
    "attn.w_value",  "attn.b_value", "attn.w_out",   "attn.b_out",   "ffn_ln.gamma", "ffn_ln.beta",
    "ffn.w1",        "ffn.b1",       "ffn.w2",       "ffn.b2"};

std::size_t block_index(std::size_t block, BlockSlot slot) { return 2 + block * kBlockSlots + slot; }

Parameter make_param(std::string name, Eigen::Index rows, Eigen::Index cols) {
    Parameter p;
    p.name = std::move(name);
    p.value.setZero(rows, cols);
    p.grad.setZero(rows, cols);
    return p;
}

void fill_normal(Matrix& m, double stddev, std::uint64_t key) {
    CounterRng rng(key);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        m.data()[i] = rng.normal() * stddev;
    }
}

// Inverted-dropout keep mask scaled by 1/(1-rate).
Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, std::uint64_t key) {
    Matrix m(rows, cols);
    CounterRng rng(key);
    const double keep_scale = 1.0 / (1.0 - rate);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        m.data()[i] = rng.uniform() >= rate ? keep_scale : 0.0;
    }
    return m;
}

}  // namespace

void ModelConfig::validate() const {
    auto fail = [](const std::string& what) { throw Error(ErrorCode::invalid_config, "invalid model config: " + what); };
    if (hidden_dim < 1) fail("hidden_dim must be >= 1");
    if (num_heads < 1) fail("num_heads must be >= 1");
    if (hidden_dim % num_heads != 0) {
        fail("hidden_dim " + std::to_string(hidden_dim) + " not divisible by num_heads " + std::to_string(num_heads));
    }
    if (max_len < 1) fail("max_len must be >= 1");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) fail("dropout_rate must be in [0, 1)");
    if (num_items < 1) fail("num_items must be >= 1");
}

Model::Model(const ModelConfig& config) : config_(config) {
    config_.validate();
    const auto d = static_cast<Eigen::Index>(config_.hidden_dim);
    const double stddev = 1.0 / std::sqrt(static_cast<double>(config_.hidden_dim));

    params_.push_back(make_param("item_embeddings", static_cast<Eigen::Index>(config_.num_items) + 1, d));
    params_.push_back(make_param("positional_embeddings", static_cast<Eigen::Index>(config_.max_len), d));
    for (std::size_t b = 0; b < config_.num_blocks; ++b) {
        for (std::size_t s = 0; s < kBlockSlots; ++s) {
            const bool is_row = (s % 2 == 1) || s == attn_ln_gamma || s == ffn_ln_gamma;
            params_.push_back(make_param("block" + std::to_string(b) + "." + kSlotNames[s], is_row ? 1 : d, d));
        }
    }
    params_.push_back(make_param("final_ln.gamma", 1, d));
    params_.push_back(make_param("final_ln.beta", 1, d));

    const std::uint64_t init_key = derive_key(config_.seed, 0x696e6974);  // "init"
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& p = params_[i];
        const bool is_gamma = p.name.ends_with(".gamma");
        const bool is_bias = p.value.rows() == 1 && !is_gamma;
        if (is_gamma) {
            p.value.setOnes();
        } else if (!is_bias) {
            fill_normal(p.value, stddev, derive_key(init_key, i));
        }
    }
    params_[0].value.row(kPaddingItem).setZero();
}

void Model::zero_grad() {
    for (auto& p : params_) {
        p.zero_grad();
    }
}

bool Model::operator==(const Model& other) const {
    if (!(config_ == other.config_) || params_.size() != other.params_.size()) {
        return false;
    }
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const auto& a = params_[i].value;
        const auto& b = other.params_[i].value;
        if (a.rows() != b.rows() || a.cols() != b.cols() ||
            std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) != 0) {
            return false;
        }
    }
    return true;
}

Var Model::forward(Tape& tape, const SequenceBatch& batch, bool train_mode, std::uint64_t dropout_key,
                   std::vector<std::vector<Matrix>>* attention_probs) {
    return forward_impl(tape, batch, train_mode, dropout_key, attention_probs, params_, &params_);
}

Var Model::forward(Tape& tape, const SequenceBatch& batch) const {
    return forward_impl(tape, batch, false, 0, nullptr, params_, nullptr);
}

Var Model::forward_impl(Tape& tape, const SequenceBatch& batch, bool train_mode, std::uint64_t dropout_key,
                        std::vector<std::vector<Matrix>>* attention_probs, const std::vector<Parameter>& params,
                        std::vector<Parameter>* mutable_params) const {
    const std::size_t len = batch.len;
    if (len < 1 || len > config_.max_len) {
        throw Error(ErrorCode::invalid_argument, "context length " + std::to_string(len) + " outside 1.." +
                                                     std::to_string(config_.max_len));
    }
    if (batch.ids.size() != batch.batch * len) {
        throw Error(ErrorCode::invalid_argument, "sequence batch size mismatch");
    }
    for (const auto id : batch.ids) {
        if (id < 0 || static_cast<std::size_t>(id) > config_.num_items) {
            throw Error(ErrorCode::out_of_range, "item id " + std::to_string(id) + " outside 0.." +
                                                     std::to_string(config_.num_items));
        }
    }
    auto bind = [&](std::size_t index) {
        return mutable_params != nullptr ? tape.param((*mutable_params)[index]) : tape.param(params[index]);
    };
    const bool use_dropout = train_mode && config_.dropout_rate > 0.0;
    const double rate = config_.dropout_rate;
    std::uint64_t site = 0;
    auto next_key = [&] { return derive_key(dropout_key, site++); };

    const std::size_t rows = batch.ids.size();
    std::vector<double> nonpad(rows);
    std::vector<std::int32_t> positions(rows);
    // Positions are aligned to the right edge of the max_len window, so a
    // shorter batch sees the same positional rows as a padded full window.
    const std::size_t offset = config_.max_len - len;
    for (std::size_t r = 0; r < rows; ++r) {
        nonpad[r] = batch.ids[r] != kPaddingItem ? 1.0 : 0.0;
        positions[r] = static_cast<std::int32_t>(offset + r % len);
    }
    const auto d = static_cast<Eigen::Index>(config_.hidden_dim);

    Var x = scale(tape, gather_rows(tape, bind(0), batch.ids), std::sqrt(static_cast<double>(config_.hidden_dim)));
    x = add(tape, x, gather_rows(tape, bind(1), positions));
    if (use_dropout) {
        x = mul_constant(tape, x, dropout_mask(static_cast<Eigen::Index>(rows), d, rate, next_key()));
    }
    x = mask_rows(tape, x, nonpad);

    if (attention_probs != nullptr) {
        attention_probs->assign(config_.num_blocks, {});
    }
    for (std::size_t b = 0; b < config_.num_blocks; ++b) {
        auto p = [&](BlockSlot slot) { return bind(block_index(b, slot)); };
        const Var q_in = layer_norm(tape, x, p(attn_ln_gamma), p(attn_ln_beta), kLayerNormEps);
        const Var q = linear(tape, q_in, p(w_query), p(b_query));
        const Var k = linear(tape, x, p(w_key), p(b_key));
        const Var v = linear(tape, x, p(w_value), p(b_value));

        std::vector<Matrix> masks;
        AttentionSpec spec;
        spec.seq_len = len;
        spec.num_heads = config_.num_heads;
        spec.key_valid = nonpad;
        if (use_dropout) {
            const auto key = next_key();
            masks.reserve(batch.batch * config_.num_heads);
            for (std::size_t m = 0; m < batch.batch * config_.num_heads; ++m) {
                masks.push_back(dropout_mask(static_cast<Eigen::Index>(len), static_cast<Eigen::Index>(len), rate,
                                             derive_key(key, m)));
            }
            spec.dropout_masks = &masks;
        }
        if (attention_probs != nullptr) {
            spec.probabilities_out = &(*attention_probs)[b];
        }
        const Var attn = linear(tape, causal_attention(tape, q, k, v, spec), p(w_out), p(b_out));
        x = add(tape, q_in, attn);
        x = layer_norm(tape, x, p(ffn_ln_gamma), p(ffn_ln_beta), kLayerNormEps);

        Var f = linear(tape, x, p(w_ffn1), p(b_ffn1));
        if (use_dropout) {
            f = mul_constant(tape, f, dropout_mask(static_cast<Eigen::Index>(rows), d, rate, next_key()));
        }
        f = relu(tape, f);
        f = linear(tape, f, p(w_ffn2), p(b_ffn2));
        if (use_dropout) {
            f = mul_constant(tape, f, dropout_mask(static_cast<Eigen::Index>(rows), d, rate, next_key()));
        }
        x = add(tape, x, f);
        x = mask_rows(tape, x, nonpad);
    }
    const std::size_t last = params.size() - 2;
    x = layer_norm(tape, x, bind(last), bind(last + 1), kLayerNormEps);
    return mask_rows(tape, x, nonpad);
}

std::vector<ItemId> pad_context(std::span<const ItemId> items, std::size_t len) {
    std::vector<ItemId> out(len, kPaddingItem);
    const std::size_t take = std::min(len, items.size());
    std::copy(items.end() - static_cast<std::ptrdiff_t>(take), items.end(),
              out.end() - static_cast<std::ptrdiff_t>(take));
    return out;
}

Matrix Model::hidden_states(std::span<const ItemId> context) const {
    if (context.empty() || context.size() > config_.max_len) {
        throw Error(ErrorCode::invalid_argument, "context length must be in 1..max_len");
    }
    SequenceBatch batch;
    batch.batch = 1;
    batch.len = context.size();
    batch.ids.assign(context.begin(), context.end());
    Tape tape(false);
    return tape.value(forward(tape, batch));
}

Matrix Model::last_hidden(std::span<const std::vector<ItemId>> contexts) const {
    SequenceBatch batch;
    batch.batch = contexts.size();
    batch.len = config_.max_len;
    batch.ids.reserve(batch.batch * batch.len);
    for (const auto& ctx : contexts) {
        const auto padded = pad_context(ctx, batch.len);
        batch.ids.insert(batch.ids.end(), padded.begin(), padded.end());
    }
    Tape tape(false);
    const auto& h = tape.value(forward(tape, batch));
    Matrix out(static_cast<Eigen::Index>(contexts.size()), h.cols());
    for (std::size_t b = 0; b < contexts.size(); ++b) {
        out.row(static_cast<Eigen::Index>(b)) = h.row(static_cast<Eigen::Index>((b + 1) * batch.len - 1));
    }
    return out;
}

std::vector<double> Model::score(const RowVector& hidden, std::span<const ItemId> items) const {
    const auto& emb = params_[0].value;
    if (hidden.cols() != emb.cols()) {
        throw Error(ErrorCode::invalid_argument, "hidden state width differs from embedding width");
    }
    std::vector<double> scores(items.size());
    for (std::size_t j = 0; j < items.size(); ++j) {
        if (items[j] < 1 || static_cast<std::size_t>(items[j]) > config_.num_items) {
            throw Error(ErrorCode::out_of_range, "cannot score item id " + std::to_string(items[j]));
        }
        scores[j] = hidden.dot(emb.row(items[j]));
    }
    return scores;
}

AdamState make_adam_state(const std::vector<Parameter>& params) {
    AdamState state;
    for (const auto& p : params) {
        state.m.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
        state.v.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    }
    return state;
}

void adam_step(std::vector<Parameter>& params, AdamState& state, const AdamConfig& config) {
    if (state.m.size() != params.size() || state.v.size() != params.size()) {
        throw Error(ErrorCode::invalid_argument, "optimizer state does not match parameters");
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double bias1 = 1.0 - std::pow(config.beta1, t);
    const double bias2 = 1.0 - std::pow(config.beta2, t);
    const double step_size = config.lr / bias1;
    const double sqrt_bias2 = std::sqrt(bias2);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i];
        if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) {
            throw Error(ErrorCode::invalid_argument, "gradient shape mismatch for " + p.name);
        }
        auto m = state.m[i].array();
        auto v = state.v[i].array();
        const auto g = p.grad.array();
        m = config.beta1 * m + (1.0 - config.beta1) * g;
        v = config.beta2 * v + (1.0 - config.beta2) * g.square();
        p.value.array() -= step_size * m / (v.sqrt() / sqrt_bias2 + config.eps);
    }
}

void save_checkpoint(const std::filesystem::path& path, const Model& model, std::uint64_t epoch,
                     const AdamState& optimizer, const std::string& training_state) {
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw Error(ErrorCode::io, "cannot write checkpoint: " + tmp.string());
        }
        const auto& c = model.config();
        out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
        bin::write_pod<std::uint32_t>(out, kCheckpointVersion);
        bin::write_pod<std::uint64_t>(out, c.hidden_dim);
        bin::write_pod<std::uint64_t>(out, c.num_blocks);
        bin::write_pod<std::uint64_t>(out, c.num_heads);
        bin::write_pod<std::uint64_t>(out, c.max_len);
        bin::write_pod<std::uint64_t>(out, c.num_items);
        bin::write_pod<double>(out, c.dropout_rate);
        bin::write_pod<std::uint64_t>(out, c.seed);
        bin::write_pod<std::uint64_t>(out, epoch);
        const auto& params = model.params();
        bin::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
        auto write_matrix = [&](const Matrix& m) {
            out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
        };
        for (const auto& p : params) {
            bin::write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(p.value.rows()));
            bin::write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(p.value.cols()));
            write_matrix(p.value);
        }
        bin::write_pod<std::uint64_t>(out, optimizer.step);
        const bool has_moments = optimizer.m.size() == params.size() && optimizer.v.size() == params.size();
        bin::write_pod<std::uint32_t>(out, has_moments ? 1U : 0U);
        if (has_moments) {
            for (const auto& m : optimizer.m) write_matrix(m);
            for (const auto& v : optimizer.v) write_matrix(v);
        }
        bin::write_string(out, training_state);
        if (!out) {
            throw Error(ErrorCode::io, "failed writing checkpoint: " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::io, "cannot open checkpoint: " + path.string());
    }
    char magic[sizeof(kCheckpointMagic)] = {};
    in.read(magic, sizeof(magic));
    if (!in || !std::equal(std::begin(magic), std::end(magic), std::begin(kCheckpointMagic))) {
        throw Error(ErrorCode::parse, "not a checkpoint file: " + path.string());
    }
    const auto version = bin::read_pod<std::uint32_t>(in);
    if (version != kCheckpointVersion) {
        throw Error(ErrorCode::parse, "unsupported checkpoint version " + std::to_string(version));
    }
    Checkpoint ck;
    ck.config.hidden_dim = bin::read_pod<std::uint64_t>(in);
    ck.config.num_blocks = bin::read_pod<std::uint64_t>(in);
    ck.config.num_heads = bin::read_pod<std::uint64_t>(in);
    ck.config.max_len = bin::read_pod<std::uint64_t>(in);
    ck.config.num_items = bin::read_pod<std::uint64_t>(in);
    ck.config.dropout_rate = bin::read_pod<double>(in);
    ck.config.seed = bin::read_pod<std::uint64_t>(in);
    ck.epoch = bin::read_pod<std::uint64_t>(in);
    const auto count = bin::read_pod<std::uint32_t>(in);
    auto read_matrix = [&](Eigen::Index rows, Eigen::Index cols) {
        Matrix m(rows, cols);
        in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
        if (!in) {
            throw Error(ErrorCode::parse, "truncated checkpoint tensor");
        }
        return m;
    };
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto rows = bin::read_pod<std::uint64_t>(in);
        const auto cols = bin::read_pod<std::uint64_t>(in);
        if (rows > (1ULL << 32) || cols > (1ULL << 20)) {
            throw Error(ErrorCode::parse, "checkpoint tensor shape out of range");
        }
        ck.tensors.push_back(read_matrix(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)));
    }
    ck.optimizer.step = bin::read_pod<std::uint64_t>(in);
    if (bin::read_pod<std::uint32_t>(in) != 0) {
        for (int pass = 0; pass < 2; ++pass) {
            auto& dst = pass == 0 ? ck.optimizer.m : ck.optimizer.v;
            for (const auto& t : ck.tensors) {
                dst.push_back(read_matrix(t.rows(), t.cols()));
            }
        }
    }
    ck.training_state = bin::read_string(in);
    return ck;
}

Model model_from_checkpoint(const Checkpoint& checkpoint) {
    Model model(checkpoint.config);
    auto& params = model.params();
    if (params.size() != checkpoint.tensors.size()) {
        throw Error(ErrorCode::parse, "checkpoint tensor count does not match model config");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& t = checkpoint.tensors[i];
        if (t.rows() != params[i].value.rows() || t.cols() != params[i].value.cols()) {
            throw Error(ErrorCode::parse, "checkpoint tensor shape mismatch for " + params[i].name);
        }
        params[i].value = t;
    }
    return model;
}

}  // namespace relrec

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>

#include "fixtures.hpp"
#include "relrec/error.hpp"
#include "relrec/model.hpp"
#include "relrec/tape.hpp"
#include "relrec/trainer.hpp"

using namespace relrec;

namespace {

ModelConfig small_config(std::size_t heads = 2) {
    ModelConfig c;
    c.hidden_dim = 8;
    c.num_blocks = 2;
    c.num_heads = heads;
    c.max_len = 12;
    c.dropout_rate = 0.2;
    c.num_items = 30;
    c.seed = 5;
    return c;
}

std::vector<ItemId> random_context(CounterRng& rng, std::size_t len, std::size_t num_items) {
    std::vector<ItemId> ctx(len);
    for (auto& x : ctx) x = static_cast<ItemId>(rng.below(num_items) + 1);
    return ctx;
}

}  // namespace

TEST_CASE("initialization is seeded and follows the documented layout") {
    const auto cfg = small_config();
    const Model a(cfg), b(cfg);
    CHECK(a == b);
    auto other = cfg;
    other.seed = 6;
    CHECK_FALSE(a == Model(other));

    const auto& p = a.params();
    REQUIRE(p.size() == 2 + 16 * cfg.num_blocks + 2);
    CHECK(p[0].value.rows() == 31);
    CHECK(p[0].value.row(0).isZero());
    CHECK(p[1].value.rows() == 12);
    for (const auto& param : p) {
        if (param.name.find("gamma") != std::string::npos) CHECK((param.value.array() == 1.0).all());
        if (param.name.find("beta") != std::string::npos) CHECK(param.value.isZero());
    }
}

TEST_CASE("invalid model configs are rejected") {
    auto c = small_config();
    c.num_heads = 3;
    CHECK_THROWS_AS(Model{c}, Error);
    c = small_config();
    c.dropout_rate = 1.0;
    CHECK_THROWS_AS(Model{c}, Error);
    c = small_config();
    c.num_items = 0;
    CHECK_THROWS_AS(Model{c}, Error);
    c = small_config();
    c.max_len = 0;
    CHECK_THROWS_AS(Model{c}, Error);
}

TEST_CASE("out-of-range item ids are rejected") {
    const Model m(small_config());
    const std::vector<ItemId> ctx = {1, 31};
    CHECK_THROWS_AS(m.hidden_states(ctx), Error);
    const RowVector h = RowVector::Zero(8);
    const std::vector<ItemId> pad = {0};
    CHECK_THROWS_AS(m.score(h, pad), Error);
}

TEST_CASE("hidden states are causal") {
    const Model m(small_config());
    CounterRng rng(17);
    for (int t = 0; t < 100; ++t) {
        const std::size_t len = 2 + rng.below(11);
        auto ctx = random_context(rng, len, 30);
        const auto base = m.hidden_states(ctx);
        const std::size_t cut = rng.below(len - 1);
        for (std::size_t i = cut + 1; i < len; ++i) ctx[i] = static_cast<ItemId>(rng.below(30) + 1);
        const auto changed = m.hidden_states(ctx);
        for (std::size_t r = 0; r <= cut; ++r) {
            CHECK((changed.row(static_cast<Eigen::Index>(r)) - base.row(static_cast<Eigen::Index>(r)))
                      .cwiseAbs()
                      .maxCoeff() < 1e-12);
        }
    }
}

TEST_CASE("padding does not change the final hidden state") {
    const Model m(small_config());
    CounterRng rng(23);
    for (int t = 0; t < 20; ++t) {
        const auto ctx = random_context(rng, 1 + rng.below(12), 30);
        const auto h = m.hidden_states(ctx);
        const std::vector<std::vector<ItemId>> one = {ctx};
        const auto last = m.last_hidden(one);
        CHECK((last.row(0) - h.row(h.rows() - 1)).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("attention rows are distributions over visible, earlier positions") {
    Model m(small_config());
    SequenceBatch batch;
    batch.batch = 2;
    batch.len = 6;
    batch.ids = {0, 0, 3, 4, 5, 6, 1, 2, 3, 4, 5, 6};
    Tape tape(false);
    std::vector<std::vector<Matrix>> probs;
    m.forward(tape, batch, false, 0, &probs);
    REQUIRE(probs.size() == 2);
    for (const auto& block : probs) {
        REQUIRE(block.size() == 4);  // 2 sequences x 2 heads
        for (std::size_t s = 0; s < block.size(); ++s) {
            const auto& a = block[s];
            const std::size_t seq = s / 2;
            for (Eigen::Index q = 0; q < a.rows(); ++q) {
                const bool pad_query = batch.ids[seq * 6 + static_cast<std::size_t>(q)] == 0;
                double sum = 0.0;
                for (Eigen::Index k = 0; k < a.cols(); ++k) {
                    if (k > q || batch.ids[seq * 6 + static_cast<std::size_t>(k)] == 0) CHECK(a(q, k) == 0.0);
                    CHECK(a(q, k) >= 0.0);
                    sum += a(q, k);
                }
                if (!pad_query) CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("scores are dot products with item embeddings") {
    const Model m(small_config());
    const std::vector<ItemId> ctx = {4, 9, 2};
    const RowVector h = m.hidden_states(ctx).row(2);
    const std::vector<ItemId> items = {1, 7, 30};
    const auto s = m.score(h, items);
    for (std::size_t j = 0; j < items.size(); ++j) {
        double dot = 0.0;
        for (Eigen::Index c = 0; c < h.size(); ++c) dot += h(c) * m.item_embeddings().value(items[j], c);
        CHECK(s[j] == doctest::Approx(dot).epsilon(1e-12));
    }
}

TEST_CASE("dropout is keyed: same key same output, train mode differs from eval") {
    Model m(small_config());
    SequenceBatch batch;
    batch.batch = 1;
    batch.len = 5;
    batch.ids = {1, 2, 3, 4, 5};
    auto run = [&](bool train, std::uint64_t key) {
        Tape tape(false);
        return Matrix(tape.value(m.forward(tape, batch, train, key)));
    };
    CHECK(run(true, 7) == run(true, 7));
    CHECK_FALSE(run(true, 7) == run(true, 8));
    CHECK(run(false, 7) == run(false, 8));
}

TEST_CASE("toy gradients match central finite differences") {
    for (std::size_t heads : {1u, 2u}) {
        Model m(testing::toy_config(heads));
        const auto batch = testing::toy_batch();
        for (const auto& e : testing::gradient_check(m, batch, 1e-4)) {
            INFO(e.name << " heads=" << heads);
            CHECK(e.relative() < 1e-4);
        }
    }
}

TEST_CASE("gradients also hold under the literal orientation and the all-positions scheme") {
    Model m(testing::toy_config());
    const std::vector<ItemId> span = {3, 7, 1, 9, 4, 2, 8, 5};
    TrainingBatch batch;
    append_example(batch, span, 5, 3, RelevanceKind::exponential, TargetScheme::all);
    for (auto& g : batch.groups) g.negatives = {6, 10};
    for (const auto& e : testing::gradient_check(m, batch, 1e-4, WeightOrientation::literal_index)) {
        INFO(e.name);
        CHECK(e.relative() < 1e-4);
    }
}

TEST_CASE("items absent from a batch receive no gradient") {
    Model m(testing::toy_config());
    const auto batch = testing::toy_batch(1, 1);
    m.zero_grad();
    batch_loss(m, batch, false, 0, WeightOrientation::nearest_first, true);
    std::vector<bool> used(11, false);
    for (const auto id : batch.inputs.ids) used[static_cast<std::size_t>(id)] = true;
    for (const auto& g : batch.groups) {
        for (const auto i : g.positives) used[static_cast<std::size_t>(i)] = true;
        for (const auto i : g.negatives) used[static_cast<std::size_t>(i)] = true;
    }
    const auto& grad = m.item_embeddings().grad;
    for (std::size_t i = 0; i <= 10; ++i) {
        if (!used[i]) CHECK(grad.row(static_cast<Eigen::Index>(i)).isZero());
    }
}

TEST_CASE("tape primitives: matmul, relu and layer norm adjoints") {
    Parameter a{"a", Matrix::Random(3, 4), Matrix::Zero(3, 4)};
    Parameter b{"b", Matrix::Random(4, 2), Matrix::Zero(4, 2)};
    Parameter g{"g", Matrix::Random(1, 2), Matrix::Zero(1, 2)};
    Parameter beta{"beta", Matrix::Random(1, 2), Matrix::Zero(1, 2)};
    std::vector<Parameter*> ps = {&a, &b, &g, &beta};
    const Matrix w = Matrix::Random(3, 2);
    auto f = [&](bool grad) {
        Tape t(grad);
        Var y = matmul(t, t.param(a), t.param(b));
        y = relu(t, y);
        y = layer_norm(t, y, t.param(g), t.param(beta), 1e-8);
        y = mul_constant(t, y, w);
        const double val = t.value(y).sum();
        if (grad) t.backward(y, Matrix::Ones(3, 2));
        return val;
    };
    for (auto* p : ps) p->zero_grad();
    f(true);
    for (auto* p : ps) {
        for (Eigen::Index i = 0; i < p->value.size(); ++i) {
            double& x = p->value.data()[i];
            const double s = x;
            x = s + 1e-6;
            const double up = f(false);
            x = s - 1e-6;
            const double dn = f(false);
            x = s;
            CHECK(p->grad.data()[i] == doctest::Approx((up - dn) / 2e-6).epsilon(1e-5));
        }
    }
}

TEST_CASE("adam: zero gradient moves nothing, a quadratic is minimized") {
    std::vector<Parameter> ps = {{"x", Matrix::Constant(1, 3, 2.0), Matrix::Zero(1, 3)}};
    auto state = make_adam_state(ps);
    adam_step(ps, state, AdamConfig{});
    CHECK((ps[0].value.array() == 2.0).all());

    for (int step = 0; step < 3000; ++step) {
        ps[0].grad = 2.0 * (ps[0].value.array() - 0.5).matrix();
        adam_step(ps, state, AdamConfig{0.01});
    }
    CHECK((ps[0].value.array() - 0.5).abs().maxCoeff() < 1e-3);
}

TEST_CASE("adam first step moves each coordinate by lr against the gradient sign") {
    std::vector<Parameter> ps = {{"x", Matrix::Zero(1, 2), Matrix::Zero(1, 2)}};
    ps[0].grad << 3.0, -0.5;
    auto state = make_adam_state(ps);
    adam_step(ps, state, AdamConfig{0.1});
    CHECK(ps[0].value(0, 0) == doctest::Approx(-0.1).epsilon(1e-6));
    CHECK(ps[0].value(0, 1) == doctest::Approx(0.1).epsilon(1e-6));
}

TEST_CASE("checkpoints round-trip bit-exactly") {
    testing::TempDir dir("ckpt");
    Model m(small_config());
    const auto ds = testing::synthetic_dataset(40, 30, 3);
    const auto sp = split(ds, SplitSpec{});
    auto cfg = small_config();
    cfg.num_items = ds.num_items;
    Model trained(cfg);
    TrainConfig tc;
    tc.batch_size = 16;
    Trainer trainer(trained, sp, tc);
    trainer.train_epoch(1);

    const auto path = dir.path() / "m.ckpt";
    save_checkpoint(path, trained, 1, trainer.optimizer(), "{\"k\":1}");
    const auto ck = read_checkpoint(path);
    CHECK(ck.epoch == 1);
    CHECK(ck.training_state == "{\"k\":1}");
    CHECK(ck.config == trained.config());
    CHECK(ck.optimizer == trainer.optimizer());
    const auto restored = model_from_checkpoint(ck);
    CHECK(restored == trained);

    // Saving the restored model reproduces the same bytes.
    const auto path2 = dir.path() / "m2.ckpt";
    save_checkpoint(path2, restored, 1, ck.optimizer, ck.training_state);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    const std::string b1((std::istreambuf_iterator<char>(f1)), {}), b2((std::istreambuf_iterator<char>(f2)), {});
    CHECK(b1 == b2);
}

TEST_CASE("truncated or foreign checkpoints are rejected") {
    testing::TempDir dir("badckpt");
    const Model m(small_config());
    const auto path = dir.path() / "m.ckpt";
    save_checkpoint(path, m, 0, make_adam_state(m.params()), "");
    std::filesystem::resize_file(path, std::filesystem::file_size(path) / 2);
    CHECK_THROWS_AS(read_checkpoint(path), Error);
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out << "not a checkpoint at all";
    }
    CHECK_THROWS_AS(read_checkpoint(path), Error);
}

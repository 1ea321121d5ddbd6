#include <doctest.h>

#include <fstream>
#include <sstream>

#include "fixtures.hpp"
#include "relrec/error.hpp"
#include "relrec/experiments.hpp"

using namespace relrec;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::size_t count_lines(const std::string& s) {
    return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

RunConfig tiny_config(const std::filesystem::path& out) {
    RunConfig c;
    c.dataset_name = "synthetic";
    c.format = "custom";
    c.epochs = 2;
    c.batch_size = 16;
    c.eval_positives = {1, 3};
    c.eval_negatives = 20;
    c.model.hidden_dim = 8;
    c.model.num_blocks = 1;
    c.model.max_len = 10;
    c.output_root = out;
    return c;
}

}  // namespace

TEST_CASE("two-epoch smoke run writes the documented layout") {
    testing::TempDir dir("smoke");
    const auto ds = testing::synthetic_dataset(50, 150, 1);
    auto cfg = tiny_config(dir.path());
    cfg.relevance = RelevanceKind::linear;
    cfg.train_positives = 3;
    const auto r = run_seed(cfg, ds, 42);
    CHECK(r.run_id == "synthetic-linear-tp3-s42");
    for (const char* f : {"config.txt", "epochs.csv", "summary.json", "model.ckpt"}) {
        CHECK(std::filesystem::exists(r.directory / f));
    }
    const auto csv = slurp(r.directory / "epochs.csv");
    CHECK(csv.starts_with(std::string(kEpochCsvHeader) + "\n"));
    CHECK(count_lines(csv) == 1 + 2 * 2);  // header + 2 epochs x 2 protocols
    CHECK(r.epochs_run == 2);
    CHECK(r.best_test.size() == 2);
    CHECK(r.history.size() == 2);
}

TEST_CASE("identical configs produce byte-identical outputs") {
    testing::TempDir a("det-a"), b("det-b");
    const auto ds = testing::synthetic_dataset(50, 150, 2);
    const auto ra = run_seed(tiny_config(a.path()), ds, 7);
    const auto rb = run_seed(tiny_config(b.path()), ds, 7);
    CHECK(slurp(ra.directory / "epochs.csv") == slurp(rb.directory / "epochs.csv"));
    CHECK(slurp(ra.directory / "model.ckpt") == slurp(rb.directory / "model.ckpt"));
    const auto rc = run_seed(tiny_config(a.path()), ds, 8);
    CHECK(slurp(ra.directory / "epochs.csv") != slurp(rc.directory / "epochs.csv"));
}

TEST_CASE("a resumed run reproduces the uninterrupted one") {
    testing::TempDir full("resume-full"), part("resume-part");
    const auto ds = testing::synthetic_dataset(50, 150, 3);
    auto cfg = tiny_config(full.path());
    cfg.epochs = 4;
    cfg.train_positives = 2;
    const auto r_full = run_seed(cfg, ds, 11);

    auto first = cfg;
    first.output_root = part.path();
    first.epochs = 2;
    run_seed(first, ds, 11);
    // An interrupted epoch may have appended rows past the checkpoint.
    {
        std::ofstream out(part.path() / r_full.run_id / "epochs.csv", std::ios::app);
        out << r_full.run_id << ",synthetic,linear,2,1,3,0.1,0.1,1,0\n";
    }
    auto second = cfg;
    second.output_root = part.path();
    second.resume = true;
    const auto r_part = run_seed(second, ds, 11);
    CHECK(slurp(r_full.directory / "epochs.csv") == slurp(r_part.directory / "epochs.csv"));
    CHECK(slurp(r_full.directory / "model.ckpt") == slurp(r_part.directory / "model.ckpt"));
    CHECK(r_part.best_epoch == r_full.best_epoch);

    auto changed = second;
    changed.lr = 0.01;
    CHECK_THROWS_AS(run_seed(changed, ds, 11), Error);
}

TEST_CASE("early stopping ends the run after `patience` evaluations without gain") {
    testing::TempDir dir("patience");
    const auto ds = testing::synthetic_dataset(50, 150, 4);
    auto cfg = tiny_config(dir.path());
    cfg.epochs = 60;
    cfg.patience = 1;
    cfg.lr = 0.05;
    const auto r = run_seed(cfg, ds, 3);
    CHECK(r.stopped_early);
    CHECK(r.epochs_run < 60);
    CHECK(r.epochs_run == r.best_epoch + 1);
}

TEST_CASE("run config validation") {
    RunConfig c;
    c.epochs = 0;
    CHECK_THROWS_AS(c.validate(), Error);
    c = RunConfig{};
    c.seeds.clear();
    CHECK_THROWS_AS(c.validate(), Error);
    c = RunConfig{};
    c.eval_positives = {1, 0};
    CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("report aggregates seeds and marks the best per column") {
    testing::TempDir dir("report");
    const auto ds = testing::synthetic_dataset(50, 150, 5);
    auto base = tiny_config(dir.path());
    base.eval_positives = {1};
    for (const auto& cfg : model_sweep(base, 3)) {
        if (cfg.train_positives == 1 || cfg.relevance == RelevanceKind::linear) {
            for (std::uint64_t seed : {1u, 2u}) run_seed(cfg, ds, seed);
        }
    }
    const auto rep = report(dir.path());
    CHECK(rep.table.find("| baseline") != std::string::npos);
    CHECK(rep.table.find("| linear") != std::string::npos);
    CHECK(rep.table.find("**") != std::string::npos);
    CHECK(rep.table.find("±") != std::string::npos);
    CHECK(rep.summary_csv.starts_with("model,dataset,eval_pos,metric,mean,std,seeds\n"));
    CHECK(rep.summary_csv.find("baseline,synthetic,1,ndcg,") != std::string::npos);
    CHECK(rep.curves_csv.starts_with("epoch,model,protocol,ndcg\n"));
    CHECK(count_lines(rep.curves_csv) == 1 + 2 * 2);  // 2 models x 2 epochs
    CHECK(std::filesystem::exists(dir.path() / "report.md"));
    CHECK(std::filesystem::exists(dir.path() / "curves.csv"));

    auto other = base;
    other.cutoff = 5;
    other.run_name = "cut5";
    run_seed(other, ds, 1);
    CHECK_THROWS_AS(report(dir.path()), Error);
}

TEST_CASE("report on an empty directory is an error") {
    testing::TempDir dir("empty-report");
    CHECK_THROWS_AS(report(dir.path()), Error);
}

TEST_CASE("sweeps enumerate the comparison and ablation grids") {
    RunConfig base;
    const auto models = model_sweep(base, 10);
    REQUIRE(models.size() == 5);
    CHECK(models[0].train_positives == 1);
    CHECK(model_label(models[0]) == "baseline");
    CHECK(model_label(models[4]) == "exp");
    const auto grid = train_positive_sweep(base, {RelevanceKind::linear, RelevanceKind::exponential}, {2, 3, 4, 5, 10});
    CHECK(grid.size() == 10);
}

TEST_CASE("output root falls back to the environment") {
    ::setenv(kOutputRootEnv, "/tmp/relrec-env-root", 1);
    CHECK(default_output_root() == "/tmp/relrec-env-root");
    ::unsetenv(kOutputRootEnv);
    CHECK(default_output_root() == "runs");
}

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "relrec/data.hpp"
#include "relrec/eval.hpp"
#include "relrec/model.hpp"
#include "relrec/trainer.hpp"

namespace relrec {

// Environment variable naming the default output root (the CLI flag wins).
inline constexpr const char* kOutputRootEnv = "RELREC_OUTPUT_ROOT";

struct RunConfig {
    // data
    std::filesystem::path data;
    std::string format = "ml-100k";  // preset name, or "custom"
    LogFormat custom_format;         // used when format == "custom"
    std::string dataset_name;        // defaults to the data file stem
    std::size_t min_count = 5;

    // training
    RelevanceKind relevance = RelevanceKind::linear;
    std::size_t train_positives = 1;
    std::size_t negatives = 0;
    TargetScheme scheme = TargetScheme::last;
    WeightOrientation orientation = WeightOrientation::nearest_first;
    std::size_t epochs = 200;
    std::size_t batch_size = 128;
    double lr = 1e-3;
    std::size_t patience = 20;
    std::size_t eval_every = 1;

    // split / evaluation
    std::vector<std::size_t> eval_positives = {1};
    std::size_t k_valid = 1;
    std::size_t min_train = 1;
    std::size_t cutoff = 10;
    std::size_t eval_negatives = 100;
    GainMode gain = GainMode::graded;
    HitMode hit = HitMode::recall;

    ModelConfig model;  // num_items and seed are filled per run
    std::vector<std::uint64_t> seeds = {42};

    std::filesystem::path output_root = "runs";
    std::string run_name;  // defaults to <dataset>-<model>-tp<positives>
    bool resume = false;
    bool verbose = false;

    void validate() const;
    LogFormat log_format() const;
    std::string dataset_label() const;
};

// "baseline" for single-positive training, otherwise the relevance kind.
std::string model_label(const RunConfig& config);
std::string run_id(const RunConfig& config, std::uint64_t seed);

// Flat key=value text mirroring the CLI flags (one per line).
std::string config_text(const RunConfig& config);

struct EpochRecord {
    std::size_t epoch = 0;
    double loss = 0.0;
    std::vector<MetricRecord> test;  // one per eval_positives entry
    double valid_ndcg = 0.0;
};

struct RunResult {
    std::string run_id;
    std::filesystem::path directory;
    std::size_t epochs_run = 0;
    std::size_t best_epoch = 0;
    double best_valid_ndcg = 0.0;
    bool stopped_early = false;
    std::vector<MetricRecord> best_test;  // test metrics at the best-validation epoch
    std::vector<EpochRecord> history;     // epochs evaluated in this invocation
};

// Trains one seed: evaluates after every `eval_every` epochs, appends
// epochs.csv rows, keeps model.ckpt resumable, writes summary.json at the
// end. Output lands in <output_root>/<run_id>/.
RunResult run_seed(const RunConfig& config, const Dataset& dataset, std::uint64_t seed);

// All seeds of one configuration; loads the dataset once.
std::vector<RunResult> run(const RunConfig& config);

// The model-comparison sweep: baseline (1 positive) plus the four relevance
// kinds at `train_positives`.
std::vector<RunConfig> model_sweep(const RunConfig& base, std::size_t train_positives);
// Train-positive ablation for the given kinds.
std::vector<RunConfig> train_positive_sweep(const RunConfig& base, const std::vector<RelevanceKind>& kinds,
                                            const std::vector<std::size_t>& positives);

struct Report {
    std::string table;       // aligned text, best per column in **bold**
    std::string summary_csv; // model,dataset,eval_pos,metric,mean,std,seeds
    std::string curves_csv;  // epoch,model,protocol,ndcg
};

// Aggregates every <dir>/*/summary.json (+ epochs.csv) and writes
// report.md, report.csv and curves.csv into `dir`.
Report report(const std::filesystem::path& dir);

std::filesystem::path default_output_root();

// Column header of epochs.csv.
inline constexpr const char* kEpochCsvHeader = "run_id,dataset,relevance,train_pos,eval_pos,epoch,ndcg,hr,users,skipped";

}  // namespace relrec

// relrec command-line entry point: train, evaluate, report, ingest.
//
// Failures print exactly one line, "error: <code>: <message>", to stderr
// and exit with status 1 (2 for usage errors).

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "relrec/data.hpp"
#include "relrec/error.hpp"
#include "relrec/eval.hpp"
#include "relrec/experiments.hpp"
#include "relrec/model.hpp"
#include "relrec/split.hpp"

namespace {

using relrec::Error;
using relrec::ErrorCode;

std::string one_line(std::string text) {
    std::replace(text.begin(), text.end(), '\n', ' ');
    std::replace(text.begin(), text.end(), '\r', ' ');
    return text;
}

int fail(std::string_view code, const std::string& message, int status = 1) {
    std::cerr << "error: " << code << ": " << one_line(message) << std::endl;
    return status;
}

struct DataFlags {
    std::string data;
    std::string format = "ml-100k";
    std::string delimiter = "\t";
    int user_col = 0;
    int item_col = 1;
    int timestamp_col = 3;
    int skip_lines = 0;
    bool utc_text = false;
    bool strict = false;
    std::size_t min_count = 5;

    void add(CLI::App& app) {
        app.add_option("--data", data, "Interaction log or dataset cache")->required();
        app.add_option("--format", format, "ml-100k | ml-1m | foursquare | custom")->capture_default_str();
        app.add_option("--delimiter", delimiter, "Field delimiter (custom format)");
        app.add_option("--user-col", user_col, "User column (custom format)");
        app.add_option("--item-col", item_col, "Item column (custom format)");
        app.add_option("--timestamp-col", timestamp_col, "Timestamp column (custom format)");
        app.add_option("--skip-lines", skip_lines, "Header lines to skip (custom format)");
        app.add_flag("--utc-text", utc_text, "Timestamps are 'Tue Apr 03 18:00:09 +0000 2012' text");
        app.add_flag("--strict", strict, "Fail on the first malformed line");
        app.add_option("--min-count", min_count, "Minimum interactions per user and item")->capture_default_str();
    }

    relrec::LogFormat log_format() const {
        relrec::LogFormat f;
        if (format != "custom") {
            f = relrec::LogFormat::preset(format);
        } else {
            f.delimiter = delimiter == "\\t" ? "\t" : delimiter;
            f.user_col = user_col;
            f.item_col = item_col;
            f.timestamp_col = timestamp_col;
            f.skip_lines = skip_lines;
            f.timestamp_format =
                utc_text ? relrec::TimestampFormat::utc_text : relrec::TimestampFormat::epoch_seconds;
        }
        f.strict = strict;
        return f;
    }
};

// key=value lines without sections apply to the subcommand being run, so a
// run's config.txt can be passed straight back with --config.
class FlatConfig : public CLI::ConfigINI {
public:
    explicit FlatConfig(const CLI::App& app) : app_(app) {}

    std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
        auto items = CLI::ConfigINI::from_config(input);
        const auto subs = app_.get_subcommands();
        if (subs.empty()) {
            return items;
        }
        for (auto& item : items) {
            if (item.parents.empty() && item.name != "++" && item.name != "--") {
                item.parents = {subs.front()->get_name()};
            }
        }
        return items;
    }

private:
    const CLI::App& app_;
};

int cmd_train(const DataFlags& df, relrec::RunConfig cfg, const std::string& relevance, const std::string& scheme,
              const std::string& gain, const std::string& hit, bool literal_index, const std::string& output) {
    cfg.data = df.data;
    cfg.format = df.format == "custom" ? "custom" : df.format;
    cfg.custom_format = df.log_format();
    cfg.min_count = df.min_count;
    cfg.relevance = relrec::parse_relevance_kind(relevance);
    cfg.scheme = relrec::parse_target_scheme(scheme);
    cfg.gain = relrec::parse_gain_mode(gain);
    cfg.hit = relrec::parse_hit_mode(hit);
    cfg.orientation = literal_index ? relrec::WeightOrientation::literal_index
                                    : relrec::WeightOrientation::nearest_first;
    cfg.output_root = output.empty() ? relrec::default_output_root() : std::filesystem::path(output);
    cfg.validate();

    const auto dataset = relrec::load_any(cfg.data, df.log_format(), cfg.min_count);
    for (const auto seed : cfg.seeds) {
        const auto r = relrec::run_seed(cfg, dataset, seed);
        nlohmann::json line{{"run_id", r.run_id},
                            {"directory", r.directory.string()},
                            {"epochs_run", r.epochs_run},
                            {"best_epoch", r.best_epoch},
                            {"best_valid_ndcg", r.best_valid_ndcg}};
        for (const auto& m : r.best_test) {
            line["ndcg@" + std::to_string(m.cutoff) + "/k" + std::to_string(m.k_eval)] = m.ndcg;
        }
        std::cout << line.dump() << std::endl;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Relevance-weighted multi-positive sequential recommendation"};
    app.require_subcommand(1);
    app.set_config("--config", "", "Flat key=value file mirroring the long flags (flags win)");
    app.config_formatter(std::make_shared<FlatConfig>(app));

    // train
    auto* train = app.add_subcommand("train", "Train a model and write runs/<run_id>/");
    DataFlags train_data;
    train_data.add(*train);
    relrec::RunConfig cfg;
    std::string relevance = "linear";
    std::string scheme = "last";
    std::string gain = "graded";
    std::string hit = "recall";
    bool literal_index = false;
    std::string output;
    std::vector<std::uint64_t> seeds;
    train->add_option("--dataset-name", cfg.dataset_name, "Label used in run ids and reports");
    train->add_option("--relevance", relevance, "fixed | linear | power | exp")->capture_default_str();
    train->add_option("--train-positives", cfg.train_positives, "Future items per training target")
        ->capture_default_str();
    train->add_option("--negatives", cfg.negatives, "Negatives at the multi-positive position (0 = positives)");
    train->add_option("--target-scheme", scheme, "last | all")->capture_default_str();
    train->add_flag("--literal-index", literal_index, "Weight positive i by r(pos - i + 1)");
    train->add_option("--epochs", cfg.epochs)->capture_default_str();
    train->add_option("--batch-size", cfg.batch_size)->capture_default_str();
    train->add_option("--lr", cfg.lr)->capture_default_str();
    train->add_option("--patience", cfg.patience, "Evaluations without validation gain before stopping")
        ->capture_default_str();
    train->add_option("--eval-every", cfg.eval_every)->capture_default_str();
    train->add_option("--eval-positives", cfg.eval_positives, "Held-out test items, e.g. 1,5,10")
        ->delimiter(',')
        ->capture_default_str();
    train->add_option("--k-valid", cfg.k_valid)->capture_default_str();
    train->add_option("--min-train", cfg.min_train)->capture_default_str();
    train->add_option("--cutoff", cfg.cutoff, "Metric cutoff k")->capture_default_str();
    train->add_option("--eval-negatives", cfg.eval_negatives)->capture_default_str();
    train->add_option("--gain", gain, "graded | binary")->capture_default_str();
    train->add_option("--hit", hit, "recall | any")->capture_default_str();
    train->add_option("--hidden-dim", cfg.model.hidden_dim)->capture_default_str();
    train->add_option("--blocks", cfg.model.num_blocks)->capture_default_str();
    train->add_option("--heads", cfg.model.num_heads)->capture_default_str();
    train->add_option("--max-len", cfg.model.max_len)->capture_default_str();
    train->add_option("--dropout", cfg.model.dropout_rate)->capture_default_str();
    train->add_option("--seeds", seeds, "Seed list, e.g. 1,2,3")->delimiter(',');
    train->add_option("--output", output, std::string("Output root (default $") + relrec::kOutputRootEnv +
                                              " or ./runs)");
    train->add_option("--run-name", cfg.run_name, "Run id prefix");
    train->add_flag("--resume", cfg.resume, "Continue from an existing checkpoint");
    train->add_flag("--verbose", cfg.verbose, "Per-epoch progress on stderr");

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "Evaluate a checkpoint");
    DataFlags eval_data;
    eval_data.add(*evaluate);
    std::string checkpoint;
    std::vector<std::size_t> eval_positives = {1};
    std::string protocol = "mfi";
    std::size_t cutoff = 10;
    std::size_t eval_negatives = 100;
    std::size_t k_valid = 1;
    std::uint64_t eval_seed = 42;
    std::string eval_gain = "graded";
    std::string eval_hit = "recall";
    evaluate->add_option("--checkpoint", checkpoint)->required();
    evaluate->add_option("--eval-positives", eval_positives)->delimiter(',')->capture_default_str();
    evaluate->add_option("--protocol", protocol, "mfi | traditional")->capture_default_str();
    evaluate->add_option("--cutoff", cutoff)->capture_default_str();
    evaluate->add_option("--eval-negatives", eval_negatives)->capture_default_str();
    evaluate->add_option("--k-valid", k_valid)->capture_default_str();
    evaluate->add_option("--seed", eval_seed, "Negative-sampling seed")->capture_default_str();
    evaluate->add_option("--gain", eval_gain)->capture_default_str();
    evaluate->add_option("--hit", eval_hit)->capture_default_str();

    // report
    auto* rep = app.add_subcommand("report", "Aggregate completed runs into tables and curves");
    std::string report_dir;
    rep->add_option("directory", report_dir, "Directory holding run folders")->required();

    // ingest
    auto* ingest = app.add_subcommand("ingest", "Parse a log and write a dataset cache");
    DataFlags ingest_data;
    ingest_data.add(*ingest);
    std::string cache_out;
    ingest->add_option("--out", cache_out, "Cache file to write")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail("usage", e.what(), 2);
    }

    try {
        if (*train) {
            if (!seeds.empty()) {
                cfg.seeds = seeds;
            }
            return cmd_train(train_data, cfg, relevance, scheme, gain, hit, literal_index, output);
        }
        if (*evaluate) {
            const auto ck = relrec::read_checkpoint(checkpoint);
            const auto model = relrec::model_from_checkpoint(ck);
            const auto dataset = relrec::load_any(eval_data.data, eval_data.log_format(), eval_data.min_count);
            if (dataset.num_items != model.config().num_items) {
                throw Error(ErrorCode::incompatible, "checkpoint has " + std::to_string(model.config().num_items) +
                                                         " items, dataset has " + std::to_string(dataset.num_items));
            }
            if (eval_positives.empty()) {
                throw Error(ErrorCode::invalid_argument, "eval-positives is empty");
            }
            const std::size_t k_max = *std::max_element(eval_positives.begin(), eval_positives.end());
            const auto sp = relrec::split(dataset, relrec::SplitSpec{k_max, k_valid, 1});
            const relrec::ModelScorer scorer(model);
            nlohmann::json out = nlohmann::json::array();
            for (const auto k : eval_positives) {
                relrec::EvalConfig ec;
                ec.k_eval = k;
                ec.cutoff = cutoff;
                ec.num_negatives = eval_negatives;
                ec.gain = relrec::parse_gain_mode(eval_gain);
                ec.hit = relrec::parse_hit_mode(eval_hit);
                ec.seed = eval_seed;
                relrec::MetricRecord m;
                if (protocol == "traditional") {
                    m = relrec::evaluate_traditional(scorer, sp, ec);
                } else if (protocol == "mfi") {
                    m = relrec::evaluate(scorer, sp, ec);
                } else {
                    throw Error(ErrorCode::invalid_argument, "unknown protocol: " + protocol);
                }
                out.push_back({{"protocol", protocol},
                               {"eval_positives", k},
                               {"cutoff", cutoff},
                               {"ndcg", m.ndcg},
                               {"hr", m.hr},
                               {"users", m.users_evaluated},
                               {"skipped", m.users_skipped}});
            }
            std::cout << out.dump() << std::endl;
            return 0;
        }
        if (*rep) {
            const auto r = relrec::report(report_dir);
            std::cout << r.table;
            return 0;
        }
        if (*ingest) {
            const auto parsed = relrec::parse_log(ingest_data.data, ingest_data.log_format());
            const auto dataset = relrec::build_dataset(parsed.events, ingest_data.min_count, ingest_data.data);
            relrec::save_dataset(dataset, cache_out);
            nlohmann::json line{{"records", parsed.events.size()},
                                {"malformed_lines", parsed.malformed_lines},
                                {"users", dataset.num_users()},
                                {"items", dataset.num_items},
                                {"interactions", dataset.num_interactions()},
                                {"filtered_events", dataset.filtered_events},
                                {"cache", cache_out}};
            std::cout << line.dump() << std::endl;
            return 0;
        }
    } catch (const Error& e) {
        return fail(relrec::to_string(e.code()), e.what());
    } catch (const nlohmann::json::exception& e) {
        return fail("parse", e.what());
    } catch (const std::filesystem::filesystem_error& e) {
        return fail("io", e.what());
    } catch (const std::exception& e) {
        return fail("internal", e.what());
    }
    return 0;
}

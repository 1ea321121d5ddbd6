#include "relrec/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "relrec/error.hpp"
#include "relrec/split.hpp"

namespace relrec {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::string fixed(double value, int digits = 8) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, value);
    return buf;
}

std::string join(const std::vector<std::size_t>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        out += (i ? "," : "") + std::to_string(values[i]);
    }
    return out;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::io, "cannot read " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(ErrorCode::io, "cannot write " + path.string());
    }
    out << content;
}

json metric_json(const MetricRecord& m) {
    return json{{"eval_positives", m.k_eval}, {"protocol", std::string(to_string(m.protocol))},
                {"cutoff", m.cutoff},         {"ndcg", m.ndcg},
                {"hr", m.hr},                 {"users", m.users_evaluated},
                {"skipped", m.users_skipped}};
}

MetricRecord metric_from_json(const json& j) {
    MetricRecord m;
    m.k_eval = j.at("eval_positives").get<std::size_t>();
    m.protocol = m.k_eval == 1 ? Protocol::traditional : Protocol::mfi;
    m.cutoff = j.at("cutoff").get<std::size_t>();
    m.ndcg = j.at("ndcg").get<double>();
    m.hr = j.at("hr").get<double>();
    m.users_evaluated = j.at("users").get<std::size_t>();
    m.users_skipped = j.at("skipped").get<std::size_t>();
    return m;
}

// Early-stopping bookkeeping persisted inside the checkpoint.
struct StopState {
    double best_valid = -1.0;
    std::size_t best_epoch = 0;
    std::size_t bad_evals = 0;
    bool stopped = false;
    std::vector<MetricRecord> best_test;

    std::string dump() const {
        json j{{"best_valid", best_valid}, {"best_epoch", best_epoch}, {"bad_evals", bad_evals},
               {"stopped", stopped}, {"best_test", json::array()}};
        for (const auto& m : best_test) {
            j["best_test"].push_back(metric_json(m));
        }
        return j.dump();
    }

    static StopState parse(const std::string& text) {
        StopState s;
        if (text.empty()) {
            return s;
        }
        const auto j = json::parse(text);
        s.best_valid = j.at("best_valid").get<double>();
        s.best_epoch = j.at("best_epoch").get<std::size_t>();
        s.bad_evals = j.at("bad_evals").get<std::size_t>();
        s.stopped = j.at("stopped").get<bool>();
        for (const auto& m : j.at("best_test")) {
            s.best_test.push_back(metric_from_json(m));
        }
        return s;
    }
};

// Config lines that may differ between an interrupted run and its resume.
bool resume_neutral(const std::string& line) {
    return line.starts_with("epochs=") || line.starts_with("resume=") || line.starts_with("verbose=") ||
           line.starts_with("output=");
}

std::string strip_resume_neutral(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::string out;
    while (std::getline(in, line)) {
        if (!resume_neutral(line)) {
            out += line + "\n";
        }
    }
    return out;
}

// Keeps the header and every row whose epoch column is <= last_epoch.
void truncate_epochs_csv(const fs::path& path, std::size_t last_epoch) {
    if (!fs::exists(path)) {
        write_file(path, std::string(kEpochCsvHeader) + "\n");
        return;
    }
    std::istringstream in(read_file(path));
    std::string line;
    std::string out;
    bool header = true;
    while (std::getline(in, line)) {
        if (header) {
            out += line + "\n";
            header = false;
            continue;
        }
        std::vector<std::string> cols;
        std::stringstream ls(line);
        std::string col;
        while (std::getline(ls, col, ',')) {
            cols.push_back(col);
        }
        if (cols.size() >= 6 && std::stoull(cols[5]) <= last_epoch) {
            out += line + "\n";
        }
    }
    write_file(path, out);
}

struct Stat {
    double mean = 0.0;
    double stddev = 0.0;
    std::size_t n = 0;
};

Stat stat_of(const std::vector<double>& xs) {
    Stat s;
    s.n = xs.size();
    if (xs.empty()) {
        return s;
    }
    for (const double x : xs) s.mean += x;
    s.mean /= static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double ss = 0.0;
        for (const double x : xs) ss += (x - s.mean) * (x - s.mean);
        s.stddev = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    }
    return s;
}

std::string protocol_name(std::size_t k_eval) {
    return k_eval == 1 ? "traditional" : "mfi@" + std::to_string(k_eval);
}

}  // namespace

void RunConfig::validate() const {
    auto fail = [](const std::string& what) { throw Error(ErrorCode::invalid_config, "invalid run config: " + what); };
    if (epochs < 1) fail("epochs must be >= 1");
    if (seeds.empty()) fail("seed list is empty");
    if (eval_positives.empty()) fail("eval_positives is empty");
    for (const auto k : eval_positives) {
        if (k < 1) fail("eval_positives must all be >= 1");
    }
    if (train_positives < 1) fail("train_positives must be >= 1");
    if (batch_size < 1) fail("batch_size must be >= 1");
    if (cutoff < 1) fail("cutoff must be >= 1");
    if (eval_every < 1) fail("eval_every must be >= 1");
    if (k_valid < 1) fail("k_valid must be >= 1 (validation drives early stopping)");
    if (min_count < 1) fail("min_count must be >= 1");
    if (!(lr > 0.0)) fail("lr must be positive");
}

LogFormat RunConfig::log_format() const {
    return format == "custom" ? custom_format : LogFormat::preset(format);
}

std::string RunConfig::dataset_label() const {
    if (!dataset_name.empty()) {
        return dataset_name;
    }
    if (format != "custom") {
        return format;
    }
    auto stem = data.stem().string();
    return stem.empty() ? "dataset" : stem;
}

std::string model_label(const RunConfig& config) {
    return config.train_positives == 1 ? "baseline" : std::string(to_string(config.relevance));
}

std::string run_id(const RunConfig& config, std::uint64_t seed) {
    const std::string name = config.run_name.empty()
                                 ? config.dataset_label() + "-" + model_label(config) + "-tp" +
                                       std::to_string(config.train_positives)
                                 : config.run_name;
    return name + "-s" + std::to_string(seed);
}

std::string config_text(const RunConfig& c) {
    std::ostringstream out;
    out << "data=" << c.data.string() << "\n";
    out << "format=" << c.format << "\n";
    if (c.format == "custom") {
        const auto& f = c.custom_format;
        out << "delimiter=" << f.delimiter << "\n"
            << "user-col=" << f.user_col << "\n"
            << "item-col=" << f.item_col << "\n"
            << "timestamp-col=" << f.timestamp_col << "\n"
            << "rating-col=" << f.rating_col << "\n"
            << "skip-lines=" << f.skip_lines << "\n";
    }
    out << "dataset-name=" << c.dataset_label() << "\n";
    out << "min-count=" << c.min_count << "\n";
    out << "relevance=" << to_string(c.relevance) << "\n";
    out << "train-positives=" << c.train_positives << "\n";
    out << "negatives=" << c.negatives << "\n";
    out << "target-scheme=" << to_string(c.scheme) << "\n";
    out << "literal-index=" << (c.orientation == WeightOrientation::literal_index ? "true" : "false") << "\n";
    out << "epochs=" << c.epochs << "\n";
    out << "batch-size=" << c.batch_size << "\n";
    out << "lr=" << fixed(c.lr, 10) << "\n";
    out << "patience=" << c.patience << "\n";
    out << "eval-every=" << c.eval_every << "\n";
    out << "eval-positives=" << join(c.eval_positives) << "\n";
    out << "k-valid=" << c.k_valid << "\n";
    out << "min-train=" << c.min_train << "\n";
    out << "cutoff=" << c.cutoff << "\n";
    out << "eval-negatives=" << c.eval_negatives << "\n";
    out << "gain=" << to_string(c.gain) << "\n";
    out << "hit=" << (c.hit == HitMode::recall ? "recall" : "any") << "\n";
    out << "hidden-dim=" << c.model.hidden_dim << "\n";
    out << "blocks=" << c.model.num_blocks << "\n";
    out << "heads=" << c.model.num_heads << "\n";
    out << "max-len=" << c.model.max_len << "\n";
    out << "dropout=" << fixed(c.model.dropout_rate, 6) << "\n";
    std::vector<std::size_t> seeds(c.seeds.begin(), c.seeds.end());
    out << "seeds=" << join(seeds) << "\n";
    out << "run-name=" << c.run_name << "\n";
    return out.str();
}

fs::path default_output_root() {
    if (const char* env = std::getenv(kOutputRootEnv); env != nullptr && *env != '\0') {
        return env;
    }
    return "runs";
}

RunResult run_seed(const RunConfig& config, const Dataset& dataset, std::uint64_t seed) {
    config.validate();
    const auto t_start = std::chrono::steady_clock::now();
    const std::size_t k_max = *std::max_element(config.eval_positives.begin(), config.eval_positives.end());
    const auto sp = split(dataset, SplitSpec{k_max, config.k_valid, config.min_train});

    ModelConfig mc = config.model;
    mc.num_items = dataset.num_items;
    mc.seed = seed;
    Model model(mc);

    TrainConfig tc;
    tc.batch_size = config.batch_size;
    tc.lr = config.lr;
    tc.train_positives = config.train_positives;
    tc.negatives = config.negatives;
    tc.relevance = config.relevance;
    tc.orientation = config.orientation;
    tc.scheme = config.scheme;
    tc.seed = seed;
    Trainer trainer(model, sp, tc);

    RunResult result;
    result.run_id = run_id(config, seed);
    result.directory = config.output_root / result.run_id;
    fs::create_directories(result.directory);
    const auto ckpt_path = result.directory / "model.ckpt";
    const auto csv_path = result.directory / "epochs.csv";
    const auto cfg_path = result.directory / "config.txt";

    RunConfig seed_config = config;
    seed_config.seeds = {seed};
    const std::string cfg_text = config_text(seed_config);

    StopState state;
    std::size_t start_epoch = 1;
    if (config.resume && fs::exists(ckpt_path)) {
        if (fs::exists(cfg_path) && strip_resume_neutral(read_file(cfg_path)) != strip_resume_neutral(cfg_text)) {
            throw Error(ErrorCode::incompatible, "cannot resume " + result.run_id + ": config differs");
        }
        const auto ck = read_checkpoint(ckpt_path);
        if (!(ck.config == mc)) {
            throw Error(ErrorCode::incompatible, "cannot resume " + result.run_id + ": model config differs");
        }
        model = model_from_checkpoint(ck);
        trainer.optimizer() = ck.optimizer;
        state = StopState::parse(ck.training_state);
        start_epoch = ck.epoch + 1;
        truncate_epochs_csv(csv_path, ck.epoch);
    } else {
        write_file(csv_path, std::string(kEpochCsvHeader) + "\n");
    }
    write_file(cfg_path, cfg_text);

    EvalConfig valid_cfg;
    valid_cfg.k_eval = 1;
    valid_cfg.cutoff = config.cutoff;
    valid_cfg.num_negatives = config.eval_negatives;
    valid_cfg.gain = config.gain;
    valid_cfg.hit = config.hit;
    valid_cfg.seed = seed;
    valid_cfg.target = EvalTarget::valid;
    const auto valid_cases = build_eval_cases(sp, valid_cfg);

    EvalConfig test_cfg = valid_cfg;
    test_cfg.target = EvalTarget::test;
    test_cfg.k_eval = k_max;
    const auto test_cases = build_eval_cases(sp, test_cfg);
    const std::size_t test_skipped = sp.users.size() - test_cases.size();

    // Smaller K reuse the K_max cases: same users, same negatives, the
    // first K positives.
    std::vector<std::vector<EvalCase>> cases_by_k;
    for (const auto k : config.eval_positives) {
        auto cases = test_cases;
        for (auto& c : cases) {
            c.positives.resize(k);
        }
        cases_by_k.push_back(std::move(cases));
    }

    const std::string label = model_label(config);
    const std::string dataset_label = config.dataset_label();
    std::ofstream csv(csv_path, std::ios::binary | std::ios::app);
    if (!csv) {
        throw Error(ErrorCode::io, "cannot append " + csv_path.string());
    }

    for (std::size_t epoch = start_epoch; epoch <= config.epochs && !state.stopped; ++epoch) {
        EpochRecord rec;
        rec.epoch = epoch;
        rec.loss = trainer.train_epoch(epoch);
        if (epoch % config.eval_every == 0 || epoch == config.epochs) {
            const ModelScorer scorer(model);
            rec.valid_ndcg = evaluate_cases(scorer, valid_cases, valid_cfg, sp.users.size() - valid_cases.size()).ndcg;
            const auto full_scores = scorer.score(test_cases);
            for (std::size_t i = 0; i < config.eval_positives.size(); ++i) {
                const std::size_t k = config.eval_positives[i];
                std::vector<std::vector<double>> scores;
                scores.reserve(full_scores.size());
                for (const auto& s : full_scores) {
                    std::vector<double> sub(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(k));
                    sub.insert(sub.end(), s.begin() + static_cast<std::ptrdiff_t>(k_max), s.end());
                    scores.push_back(std::move(sub));
                }
                EvalConfig cfg = test_cfg;
                cfg.k_eval = k;
                const auto m = metrics_from_scores(cases_by_k[i], scores, cfg, test_skipped);
                rec.test.push_back(m);
                csv << result.run_id << ',' << dataset_label << ',' << label << ',' << config.train_positives << ','
                    << k << ',' << epoch << ',' << fixed(m.ndcg) << ',' << fixed(m.hr) << ',' << m.users_evaluated
                    << ',' << m.users_skipped << '\n';
            }
            csv.flush();
            if (rec.valid_ndcg > state.best_valid) {
                state.best_valid = rec.valid_ndcg;
                state.best_epoch = epoch;
                state.best_test = rec.test;
                state.bad_evals = 0;
            } else if (++state.bad_evals >= config.patience) {
                state.stopped = true;
            }
            if (config.verbose) {
                std::cerr << result.run_id << " epoch " << epoch << " loss " << fixed(rec.loss, 5) << " valid "
                          << fixed(rec.valid_ndcg, 4);
                for (const auto& m : rec.test) {
                    std::cerr << " ndcg@" << m.k_eval << " " << fixed(m.ndcg, 4);
                }
                std::cerr << std::endl;
            }
        }
        save_checkpoint(ckpt_path, model, epoch, trainer.optimizer(), state.dump());
        result.epochs_run = epoch;
        result.history.push_back(std::move(rec));
    }
    if (result.epochs_run == 0) {
        result.epochs_run = start_epoch - 1;
    }

    result.best_epoch = state.best_epoch;
    result.best_valid_ndcg = state.best_valid;
    result.stopped_early = state.stopped;
    result.best_test = state.best_test;

    json summary{{"run_id", result.run_id},
                 {"dataset", dataset_label},
                 {"model", label},
                 {"relevance", std::string(to_string(config.relevance))},
                 {"train_positives", config.train_positives},
                 {"target_scheme", std::string(to_string(config.scheme))},
                 {"seed", seed},
                 {"cutoff", config.cutoff},
                 {"epochs_run", result.epochs_run},
                 {"best_epoch", result.best_epoch},
                 {"best_valid_ndcg", result.best_valid_ndcg},
                 {"stopped_early", result.stopped_early},
                 {"users", dataset.num_users()},
                 {"items", dataset.num_items},
                 {"interactions", dataset.num_interactions()},
                 {"train_seconds",
                  std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count()},
                 {"metrics", json::array()}};
    for (const auto& m : result.best_test) {
        summary["metrics"].push_back(metric_json(m));
    }
    write_file(result.directory / "summary.json", summary.dump(2) + "\n");
    return result;
}

std::vector<RunResult> run(const RunConfig& config) {
    config.validate();
    const auto dataset = load_any(config.data, config.log_format(), config.min_count);
    std::vector<RunResult> results;
    for (const auto seed : config.seeds) {
        results.push_back(run_seed(config, dataset, seed));
    }
    return results;
}

std::vector<RunConfig> model_sweep(const RunConfig& base, std::size_t train_positives) {
    std::vector<RunConfig> out;
    RunConfig baseline = base;
    baseline.train_positives = 1;
    out.push_back(baseline);
    for (const auto kind :
         {RelevanceKind::fixed, RelevanceKind::linear, RelevanceKind::power, RelevanceKind::exponential}) {
        RunConfig c = base;
        c.relevance = kind;
        c.train_positives = train_positives;
        out.push_back(c);
    }
    return out;
}

std::vector<RunConfig> train_positive_sweep(const RunConfig& base, const std::vector<RelevanceKind>& kinds,
                                            const std::vector<std::size_t>& positives) {
    std::vector<RunConfig> out;
    for (const auto kind : kinds) {
        for (const auto p : positives) {
            RunConfig c = base;
            c.relevance = kind;
            c.train_positives = p;
            out.push_back(c);
        }
    }
    return out;
}

Report report(const fs::path& dir) {
    if (!fs::is_directory(dir)) {
        throw Error(ErrorCode::io, "not a directory: " + dir.string());
    }
    std::vector<fs::path> run_dirs;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_directory() && fs::exists(entry.path() / "summary.json")) {
            run_dirs.push_back(entry.path());
        }
    }
    std::sort(run_dirs.begin(), run_dirs.end());
    if (run_dirs.empty()) {
        throw Error(ErrorCode::empty_dataset, "no completed runs under " + dir.string());
    }

    struct RunInfo {
        std::string dataset;
        std::string model;
        std::size_t train_positives;
        json summary;
        fs::path path;
    };
    std::vector<RunInfo> runs;
    std::set<std::size_t> cutoffs;
    std::map<std::string, std::set<std::size_t>> positives_by_model;
    for (const auto& d : run_dirs) {
        auto summary = json::parse(read_file(d / "summary.json"));
        RunInfo info{summary.at("dataset").get<std::string>(), summary.at("model").get<std::string>(),
                     summary.at("train_positives").get<std::size_t>(), summary, d};
        cutoffs.insert(summary.at("cutoff").get<std::size_t>());
        positives_by_model[info.model].insert(info.train_positives);
        runs.push_back(std::move(info));
    }
    if (cutoffs.size() > 1) {
        throw Error(ErrorCode::incompatible, "runs under " + dir.string() + " mix metric cutoffs");
    }
    const std::size_t cutoff = *cutoffs.begin();
    std::set<std::string> datasets;
    for (const auto& r : runs) datasets.insert(r.dataset);
    auto row_label = [&](const RunInfo& r) {
        return positives_by_model[r.model].size() > 1 ? r.model + "/tp" + std::to_string(r.train_positives) : r.model;
    };

    // (eval_pos) -> (row) -> (dataset) -> {ndcg values, hr values}
    std::map<std::size_t, std::map<std::string, std::map<std::string, std::pair<std::vector<double>, std::vector<double>>>>>
        cells;
    std::vector<std::string> row_order;
    for (const auto& r : runs) {
        const auto row = row_label(r);
        if (std::find(row_order.begin(), row_order.end(), row) == row_order.end()) {
            row_order.push_back(row);
        }
        for (const auto& m : r.summary.at("metrics")) {
            auto& cell = cells[m.at("eval_positives").get<std::size_t>()][row][r.dataset];
            cell.first.push_back(m.at("ndcg").get<double>());
            cell.second.push_back(m.at("hr").get<double>());
        }
    }
    // Baseline first, then the relevance kinds in their canonical order.
    const std::vector<std::string> canonical = {"baseline", "fixed", "linear", "power", "exp"};
    auto rank_of = [&](const std::string& row) {
        const auto base = row.substr(0, row.find('/'));
        const auto it = std::find(canonical.begin(), canonical.end(), base);
        return static_cast<std::size_t>(it - canonical.begin());
    };
    std::stable_sort(row_order.begin(), row_order.end(),
                     [&](const std::string& a, const std::string& b) { return rank_of(a) < rank_of(b); });

    Report rep;
    std::ostringstream table;
    std::ostringstream summary_csv;
    summary_csv << "model,dataset,eval_pos,metric,mean,std,seeds\n";
    for (const auto& [k_eval, rows] : cells) {
        table << "## " << protocol_name(k_eval) << " (" << k_eval << " positive" << (k_eval > 1 ? "s" : "")
              << "), NDCG@" << cutoff << " / HR@" << cutoff << "\n\n";
        std::vector<std::string> header = {"model"};
        for (const auto& ds : datasets) {
            header.push_back(ds + " NDCG");
            header.push_back(ds + " HR");
        }
        std::vector<std::vector<std::string>> grid;
        std::vector<std::vector<double>> means;
        for (const auto& row : row_order) {
            if (!rows.contains(row)) continue;
            std::vector<std::string> line = {row};
            std::vector<double> row_means;
            for (const auto& ds : datasets) {
                const auto it = rows.at(row).find(ds);
                for (int metric = 0; metric < 2; ++metric) {
                    if (it == rows.at(row).end()) {
                        line.push_back("-");
                        row_means.push_back(-1.0);
                        continue;
                    }
                    const auto& values = metric == 0 ? it->second.first : it->second.second;
                    const auto s = stat_of(values);
                    line.push_back(s.n > 1 ? fixed(s.mean, 4) + " ± " + fixed(s.stddev, 4) : fixed(s.mean, 4));
                    row_means.push_back(s.mean);
                    summary_csv << row << ',' << ds << ',' << k_eval << ',' << (metric == 0 ? "ndcg" : "hr") << ','
                                << fixed(s.mean) << ',' << fixed(s.stddev) << ',' << s.n << '\n';
                }
            }
            grid.push_back(std::move(line));
            means.push_back(std::move(row_means));
        }
        for (std::size_t col = 0; col + 1 < header.size(); ++col) {
            double best = -1.0;
            for (const auto& m : means) best = std::max(best, m[col]);
            for (std::size_t r = 0; r < grid.size(); ++r) {
                if (means[r][col] == best && best >= 0.0) {
                    grid[r][col + 1] = "**" + grid[r][col + 1] + "**";
                }
            }
        }
        std::vector<std::size_t> widths(header.size());
        auto display_width = [](const std::string& s) {
            // "±" is two bytes in UTF-8 but one column.
            std::size_t w = 0;
            for (const unsigned char ch : s) w += (ch & 0xc0) != 0x80 ? 1 : 0;
            return w;
        };
        for (std::size_t c = 0; c < header.size(); ++c) {
            widths[c] = display_width(header[c]);
            for (const auto& line : grid) widths[c] = std::max(widths[c], display_width(line[c]));
        }
        auto emit = [&](const std::vector<std::string>& line) {
            table << "|";
            for (std::size_t c = 0; c < line.size(); ++c) {
                table << ' ' << line[c] << std::string(widths[c] - display_width(line[c]), ' ') << " |";
            }
            table << "\n";
        };
        emit(header);
        table << "|";
        for (const auto w : widths) table << std::string(w + 2, '-') << "|";
        table << "\n";
        for (const auto& line : grid) emit(line);
        table << "\n";
    }
    rep.table = table.str();
    rep.summary_csv = summary_csv.str();

    // Epoch curves: mean NDCG over seeds per (model, protocol, epoch).
    std::map<std::tuple<std::string, std::string, std::size_t>, std::vector<double>> curves;
    for (const auto& r : runs) {
        const auto model = datasets.size() > 1 ? r.dataset + "/" + row_label(r) : row_label(r);
        std::istringstream in(read_file(r.path / "epochs.csv"));
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
            std::vector<std::string> cols;
            std::stringstream ls(line);
            std::string col;
            while (std::getline(ls, col, ',')) cols.push_back(col);
            if (cols.size() < 10) continue;
            curves[{model, protocol_name(std::stoull(cols[4])), std::stoull(cols[5])}].push_back(std::stod(cols[6]));
        }
    }
    std::vector<std::tuple<std::size_t, std::string, std::string, double>> curve_rows;
    for (const auto& [key, values] : curves) {
        curve_rows.emplace_back(std::get<2>(key), std::get<0>(key), std::get<1>(key), stat_of(values).mean);
    }
    std::sort(curve_rows.begin(), curve_rows.end());
    std::ostringstream curves_csv;
    curves_csv << "epoch,model,protocol,ndcg\n";
    for (const auto& [epoch, model, protocol, ndcg] : curve_rows) {
        curves_csv << epoch << ',' << model << ',' << protocol << ',' << fixed(ndcg) << '\n';
    }
    rep.curves_csv = curves_csv.str();

    write_file(dir / "report.md", rep.table);
    write_file(dir / "report.csv", rep.summary_csv);
    write_file(dir / "curves.csv", rep.curves_csv);
    return rep;
}

}  // namespace relrec

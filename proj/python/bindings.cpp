#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <string>
#include <vector>

#include "relrec/data.hpp"
#include "relrec/error.hpp"
#include "relrec/eval.hpp"
#include "relrec/experiments.hpp"
#include "relrec/loss.hpp"
#include "relrec/model.hpp"
#include "relrec/relevance.hpp"
#include "relrec/split.hpp"

namespace py = pybind11;
using namespace relrec;

namespace {

WeightOrientation orientation_of(bool literal_index) {
    return literal_index ? WeightOrientation::literal_index : WeightOrientation::nearest_first;
}

std::vector<std::size_t> as_ranking(const std::vector<std::size_t>& ranking) { return ranking; }

py::dict metric_dict(const MetricRecord& m) {
    py::dict d;
    d["ndcg"] = m.ndcg;
    d["hr"] = m.hr;
    d["cutoff"] = m.cutoff;
    d["eval_positives"] = m.k_eval;
    d["users"] = m.users_evaluated;
    d["skipped"] = m.users_skipped;
    return d;
}

}  // namespace

PYBIND11_MODULE(_relrec, m) {
    m.doc() = "relrec core: relevance profiles, loss, metrics, model and training runs";

    static py::exception<Error> relrec_error(m, "RelrecError", PyExc_RuntimeError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::set_error(relrec_error, (std::string(to_string(e.code())) + ": " + e.what()).c_str());
        }
    });

    m.def(
        "make_profile",
        [](const std::string& kind, std::size_t k) { return make_profile(parse_relevance_kind(kind), k).weights; },
        py::arg("kind"), py::arg("k"), "Normalized relevance weights, nearest future item first.");

    m.def(
        "relevance_loss",
        [](const std::vector<double>& pos, const std::vector<double>& neg, const std::vector<double>& weights,
           bool literal_index) { return relevance_loss({pos, neg, weights}, orientation_of(literal_index)); },
        py::arg("pos_probs"), py::arg("neg_probs"), py::arg("weights"), py::arg("literal_index") = false);

    m.def(
        "baseline_loss",
        [](double pos, const std::vector<double>& neg) {
            const std::vector<double> p = {pos}, w = {1.0};
            return baseline_loss({p, neg, w});
        },
        py::arg("pos_prob"), py::arg("neg_probs"));

    m.def(
        "ndcg_at_k",
        [](const std::vector<std::size_t>& ranking, std::size_t num_positives, std::size_t cutoff,
           const std::string& gain) { return ndcg_at_k(as_ranking(ranking), num_positives, cutoff, parse_gain_mode(gain)); },
        py::arg("ranking"), py::arg("num_positives"), py::arg("cutoff") = 10, py::arg("gain") = "graded",
        "Ranking lists candidate indices best first; index j < num_positives is the (j+1)-th nearest positive.");

    m.def(
        "hr_at_k",
        [](const std::vector<std::size_t>& ranking, std::size_t num_positives, std::size_t cutoff,
           const std::string& hit) { return hr_at_k(as_ranking(ranking), num_positives, cutoff, parse_hit_mode(hit)); },
        py::arg("ranking"), py::arg("num_positives"), py::arg("cutoff") = 10, py::arg("hit") = "recall");

    py::class_<Dataset>(m, "Dataset")
        .def_property_readonly("num_users", &Dataset::num_users)
        .def_readonly("num_items", &Dataset::num_items)
        .def_property_readonly("num_interactions", &Dataset::num_interactions)
        .def_readonly("filtered_events", &Dataset::filtered_events)
        .def_readonly("sequences", &Dataset::sequences)
        .def("save", [](const Dataset& d, const std::filesystem::path& path) { save_dataset(d, path); });

    m.def(
        "load_dataset",
        [](const std::filesystem::path& path, const std::string& format, std::size_t min_count) {
            return load_any(path, LogFormat::preset(format), min_count);
        },
        py::arg("path"), py::arg("format") = "ml-100k", py::arg("min_count") = 5,
        "Parse an interaction log (or load a dataset cache) into dense per-user sequences.");

    py::class_<Model>(m, "Model")
        .def_static(
            "load", [](const std::filesystem::path& path) { return model_from_checkpoint(read_checkpoint(path)); },
            py::arg("path"))
        .def_property_readonly("num_items", [](const Model& self) { return self.config().num_items; })
        .def_property_readonly("hidden_dim", [](const Model& self) { return self.config().hidden_dim; })
        .def(
            "score",
            [](const Model& self, const std::vector<ItemId>& context, const std::vector<ItemId>& items) {
                const std::vector<std::vector<ItemId>> one = {context};
                const RowVector h = self.last_hidden(one).row(0);
                return self.score(h, items);
            },
            py::arg("context"), py::arg("items"), "Scores of `items` after `context` (most recent last).");

    m.def(
        "evaluate",
        [](const Model& model, const Dataset& dataset, std::size_t eval_positives, std::size_t cutoff,
           std::size_t num_negatives, std::uint64_t seed) {
            const auto sp = split(dataset, SplitSpec{eval_positives, 1, 1});
            EvalConfig cfg;
            cfg.k_eval = eval_positives;
            cfg.cutoff = cutoff;
            cfg.num_negatives = num_negatives;
            cfg.seed = seed;
            py::gil_scoped_release release;
            const auto r = relrec::evaluate(ModelScorer(model), sp, cfg);
            py::gil_scoped_acquire acquire;
            return metric_dict(r);
        },
        py::arg("model"), py::arg("dataset"), py::arg("eval_positives") = 1, py::arg("cutoff") = 10,
        py::arg("num_negatives") = 100, py::arg("seed") = 42);

    m.def(
        "train",
        [](const std::filesystem::path& data, const std::string& format, const std::string& relevance,
           std::size_t train_positives, const std::vector<std::size_t>& eval_positives, std::size_t epochs,
           const std::vector<std::uint64_t>& seeds, const std::filesystem::path& output, std::size_t min_count,
           std::size_t hidden_dim, std::size_t blocks, std::size_t max_len, std::size_t eval_negatives,
           std::size_t batch_size, const std::string& dataset_name) {
            RunConfig cfg;
            cfg.data = data;
            cfg.format = format;
            cfg.dataset_name = dataset_name;
            cfg.relevance = parse_relevance_kind(relevance);
            cfg.train_positives = train_positives;
            cfg.eval_positives = eval_positives;
            cfg.epochs = epochs;
            cfg.seeds = seeds;
            cfg.output_root = output.empty() ? default_output_root() : output;
            cfg.min_count = min_count;
            cfg.model.hidden_dim = hidden_dim;
            cfg.model.num_blocks = blocks;
            cfg.model.max_len = max_len;
            cfg.eval_negatives = eval_negatives;
            cfg.batch_size = batch_size;
            std::vector<RunResult> results;
            {
                py::gil_scoped_release release;
                results = run(cfg);
            }
            py::list out;
            for (const auto& r : results) {
                py::dict d;
                d["run_id"] = r.run_id;
                d["directory"] = r.directory;
                d["epochs_run"] = r.epochs_run;
                d["best_epoch"] = r.best_epoch;
                py::list metrics;
                for (const auto& mr : r.best_test) metrics.append(metric_dict(mr));
                d["metrics"] = metrics;
                out.append(d);
            }
            return out;
        },
        py::arg("data"), py::arg("format") = "ml-100k", py::arg("relevance") = "linear",
        py::arg("train_positives") = 1, py::arg("eval_positives") = std::vector<std::size_t>{1},
        py::arg("epochs") = 200, py::arg("seeds") = std::vector<std::uint64_t>{42},
        py::arg("output") = std::filesystem::path(), py::arg("min_count") = 5, py::arg("hidden_dim") = 50,
        py::arg("blocks") = 2, py::arg("max_len") = 50, py::arg("eval_negatives") = 100,
        py::arg("batch_size") = 128, py::arg("dataset_name") = "",
        "Train one configuration for every seed; writes <output>/<run_id>/ and returns per-seed summaries.");

    m.def(
        "report",
        [](const std::filesystem::path& dir) {
            const auto r = relrec::report(dir);
            py::dict d;
            d["table"] = r.table;
            d["summary_csv"] = r.summary_csv;
            d["curves_csv"] = r.curves_csv;
            return d;
        },
        py::arg("directory"));
}

// Python bindings. Sentences cross the boundary as lists of
// (form, lemma, pos, morph) tuples.

#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "histag/evaluation.hpp"
#include "histag/morph.hpp"
#include "histag/pipeline.hpp"
#include "histag/preprocess.hpp"
#include "histag/sweep.hpp"
#include "histag/tagger.hpp"

namespace py = pybind11;
using namespace histag;

namespace {

using PyToken = std::tuple<std::string, std::string, std::string, std::string>;
using PySentence = std::vector<PyToken>;

std::vector<Sentence> to_sentences(const std::vector<PySentence>& in) {
    std::vector<Sentence> out;
    for (const auto& s : in) {
        Sentence sentence;
        for (const auto& [form, lemma, pos, morph] : s) sentence.tokens.push_back({form, lemma, pos, morph});
        out.push_back(std::move(sentence));
    }
    return out;
}

std::vector<PySentence> from_sentences(const std::vector<Sentence>& in) {
    std::vector<PySentence> out;
    for (const auto& s : in) {
        PySentence sentence;
        for (const auto& t : s.tokens) sentence.emplace_back(t.form, t.lemma, t.pos, t.morph);
        out.push_back(std::move(sentence));
    }
    return out;
}

std::map<std::string, std::string> morph_dict(const MorphVector& v) {
    std::map<std::string, std::string> out;
    for (std::size_t i = 0; i < kMorphCategories.size(); ++i) {
        if (v[i] != "_") out[std::string(kMorphCategories[i])] = v[i];
    }
    return out;
}

TrainConfig make_config(const std::string& task, const std::map<std::string, std::string>& settings) {
    TrainConfig c;
    c.task = parse_task(task);
    c.target_metric = c.task == TaskId::LEMMA ? TargetMetric::precision : TargetMetric::accuracy;
    for (const auto& [k, v] : settings) c.set(k, v);
    c.check();
    return c;
}

}  // namespace

PYBIND11_MODULE(_histag, m) {
    m.doc() = "Character-level lemmatizer and tagger for historical texts";

    py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<RuntimeFailure>(m, "RuntimeFailure", PyExc_RuntimeError);

    m.def("parse_roman", [](const std::string& s) { return parse_roman(s); }, py::arg("numeral"));
    m.def("normalize_roman", [](const std::string& s) { return normalize_roman(s); }, py::arg("form"));
    m.def("split_morph", [](const std::string& s) { return morph_dict(split_morph(s)); }, py::arg("composite"));
    m.def(
        "join_morph",
        [](const std::map<std::string, std::string>& d) {
            MorphVector v;
            for (const auto& [k, val] : d) v.at(k) = val;
            return join_morph(v);
        },
        py::arg("categories"));
    m.def("shannon_diversity", &eval::shannon_diversity, py::arg("counts"));

    m.def(
        "parse_tsv", [](const std::string& text) { return from_sentences(parse_tsv(text).sentences); },
        py::arg("text"));
    m.def(
        "write_tsv",
        [](const std::vector<PySentence>& sentences) {
            Document doc;
            doc.sentences = to_sentences(sentences);
            return write_tsv(doc);
        },
        py::arg("sentences"));
    m.def(
        "split",
        [](const std::vector<PySentence>& sentences, std::uint64_t seed, const std::string& ratios) {
            auto s = split_dataset(to_sentences(sentences), parse_ratios(ratios), seed);
            return std::make_tuple(from_sentences(s.train), from_sentences(s.dev), from_sentences(s.test));
        },
        py::arg("sentences"), py::arg("seed") = 42, py::arg("ratios") = "0.8,0.1,0.1");

    py::class_<TrainedModel>(m, "Model")
        .def_property_readonly("task", [](const TrainedModel& t) { return std::string(task_name(t.task)); })
        .def_property_readonly("best_epoch", [](const TrainedModel& t) { return t.best_epoch; })
        .def_property_readonly("parameter_count", &TrainedModel::parameter_count)
        .def_property_readonly("config", [](const TrainedModel& t) { return t.config.to_text(); })
        .def_property_readonly("log",
                               [](const TrainedModel& t) {
                                   std::vector<std::tuple<int, double, double, double>> out;
                                   for (const auto& r : t.log) {
                                       out.emplace_back(r.epoch, r.train_loss, r.dev_metric, r.learning_rate);
                                   }
                                   return out;
                               })
        .def(
            "predict",
            [](const TrainedModel& t, const std::vector<std::vector<std::string>>& sentences) {
                py::gil_scoped_release release;
                return predict_labels(t, sentences);
            },
            py::arg("sentences"))
        .def("save", [](const TrainedModel& t, const std::string& path) { save_model(t, path); }, py::arg("path"))
        .def("to_bytes", [](const TrainedModel& t) { return py::bytes(serialize_model(t)); });

    m.def(
        "train",
        [](const std::string& task, const std::vector<PySentence>& train_set, const std::vector<PySentence>& dev_set,
           const std::map<std::string, std::string>& settings) {
            TrainConfig c = make_config(task, settings);
            SplitSet s;
            s.train = to_sentences(train_set);
            s.dev = to_sentences(dev_set);
            py::gil_scoped_release release;
            return train(c, s);
        },
        py::arg("task"), py::arg("train"), py::arg("dev"), py::arg("settings") = std::map<std::string, std::string>{});
    m.def(
        "load_model", [](const std::string& path) { return load_model(path); }, py::arg("path"));
    m.def(
        "model_from_bytes", [](const py::bytes& b) { return deserialize_model(std::string(b)); }, py::arg("data"));
    m.def(
        "annotate",
        [](const std::string& model_dir, const std::vector<std::vector<std::string>>& sentences) {
            auto models = ModelSet::load_dir(model_dir);
            if (models.empty()) throw InputError("no <task>.model files in " + model_dir);
            return from_sentences(models.annotate(sentences));
        },
        py::arg("model_dir"), py::arg("sentences"));

    m.def(
        "evaluate",
        [](const std::vector<PySentence>& gold, const std::vector<PySentence>& pred,
           std::optional<std::vector<PySentence>> train_set, const std::string& tables) {
            ReportOptions o;
            o.tables = parse_tables(tables);
            if (train_set) o.train = to_sentences(*train_set);
            return evaluation_reports(to_sentences(gold), to_sentences(pred), o);
        },
        py::arg("gold"), py::arg("pred"), py::arg("train") = py::none(), py::arg("tables") = "all");
    m.def(
        "posttreat",
        [](const std::vector<PySentence>& sentences) {
            return from_sentences(eval::pos_lemma_posttreatment(to_sentences(sentences), eval::default_que_rules()));
        },
        py::arg("sentences"));

    m.def(
        "rank",
        [](const std::vector<std::map<std::string, double>>& runs, const std::string& target_metric,
           std::optional<std::set<std::string>> excluded) {
            SweepLog log;
            for (std::size_t i = 0; i < runs.size(); ++i) {
                SweepRun r;
                r.run_id = static_cast<int>(i);
                r.metrics = runs[i];
                log.push_back(std::move(r));
            }
            RankingPolicy policy;
            policy.target_metric = target_metric;
            if (excluded) policy.excluded = *excluded;
            auto result = rank_models(log, policy);
            return std::make_tuple(result.selected, result.rank_sums);
        },
        py::arg("runs"), py::arg("target_metric") = "all.accuracy", py::arg("excluded") = py::none());
    m.def("fractional_ranks", &fractional_ranks, py::arg("values"));
}

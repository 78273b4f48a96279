#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "privlm/classifier.hpp"
#include "privlm/common.hpp"
#include "privlm/config.hpp"
#include "privlm/curation.hpp"
#include "privlm/detector.hpp"
#include "privlm/evaluate.hpp"
#include "privlm/metrics.hpp"
#include "privlm/model.hpp"
#include "privlm/pipeline.hpp"
#include "privlm/templates.hpp"
#include "privlm/theory.hpp"
#include "privlm/train.hpp"

namespace py = pybind11;
using namespace privlm;

namespace {

py::dict span_dict(const PiiSpan& s) {
    py::dict d;
    d["start"] = s.start;
    d["end"] = s.end;
    d["category"] = to_string(s.category);
    return d;
}

py::dict annotation_dict(const AnnotatedSequence& seq, const Tokenizer& tok) {
    py::dict d;
    py::list tokens;
    for (int id : seq.tokens) tokens.append(tok.token(id));
    d["tokens"] = tokens;
    d["labels"] = std::vector<int>(seq.labels.begin(), seq.labels.end());
    py::list spans;
    for (const auto& s : seq.spans) spans.append(span_dict(s));
    d["spans"] = spans;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "privacy-protection fine-tuning lab (C++ core)";

    py::register_exception<Error>(m, "PrivlmError");

    py::class_<Tokenizer>(m, "Tokenizer")
        .def_static("build", &Tokenizer::build, py::arg("texts"))
        .def_static("split", &Tokenizer::split, py::arg("text"))
        .def("encode", &Tokenizer::encode)
        .def("decode", &Tokenizer::decode)
        .def("token", &Tokenizer::token)
        .def("token_id", &Tokenizer::token_id)
        .def_property_readonly("vocab_size", &Tokenizer::vocab_size)
        .def_property_readonly("bos_id", &Tokenizer::bos_id)
        .def_property_readonly("eos_id", &Tokenizer::eos_id)
        .def_property_readonly("unk_id", &Tokenizer::unk_id)
        .def_property_readonly("anon_id", &Tokenizer::anon_id);

    py::class_<Sample>(m, "Sample")
        .def_readonly("id", &Sample::id)
        .def_readonly("question", &Sample::question)
        .def_readonly("answer", &Sample::answer)
        .def_readonly("source", &Sample::source);

    py::class_<Corpus>(m, "Corpus")
        .def_readonly("name", &Corpus::name)
        .def_readonly("samples", &Corpus::samples)
        .def_readonly("train_ids", &Corpus::train_ids)
        .def_readonly("test_ids", &Corpus::test_ids)
        .def("__len__", [](const Corpus& c) { return c.samples.size(); })
        .def("stats", [](const Corpus& c) {
            auto st = c.stats();
            py::dict d;
            d["count"] = st.count;
            d["mean_question_tokens"] = st.mean_question_tokens;
            d["mean_answer_tokens"] = st.mean_answer_tokens;
            return d;
        });

    m.def(
        "synthesize_corpus",
        [](uint64_t seed, std::size_t size, double pii_density, const std::string& data_dir) {
            SynthConfig cfg;
            cfg.seed = seed;
            cfg.size = size;
            cfg.pii_density = pii_density;
            cfg.data_dir = data_dir;
            return synthesize_corpus(cfg);
        },
        py::arg("seed"), py::arg("size"), py::arg("pii_density"), py::arg("data_dir") = "");
    m.def("load_jsonl", &load_jsonl, py::arg("path"));
    m.def("save_jsonl", &save_jsonl, py::arg("corpus"), py::arg("path"),
          py::arg("provenance") = "");
    m.def("split_corpus", &split_corpus, py::arg("corpus"), py::arg("train_fraction"),
          py::arg("seed"));

    m.def(
        "annotate",
        [](const std::string& text, const Tokenizer& tok, const std::string& data_dir) {
            Detector det(DetectorConfig::defaults(data_dir));
            return annotation_dict(det.annotate(text, tok), tok);
        },
        py::arg("text"), py::arg("tokenizer"), py::arg("data_dir") = "");

    m.def(
        "substitute_text",
        [](const std::string& text, const Tokenizer& tok, bool generic_x,
           const std::string& data_dir) {
            Detector det(DetectorConfig::defaults(data_dir));
            AnnotatedSequence seq = det.annotate(text, tok);
            return tok.decode(substitute_pii(
                seq, tok, generic_x ? SubstitutionStyle::GenericX : SubstitutionStyle::Category));
        },
        py::arg("text"), py::arg("tokenizer"), py::arg("generic_x") = false,
        py::arg("data_dir") = "");
    m.def(
        "remove_text",
        [](const std::string& text, const Tokenizer& tok, const std::string& data_dir) {
            Detector det(DetectorConfig::defaults(data_dir));
            return tok.decode(remove_pii(det.annotate(text, tok)));
        },
        py::arg("text"), py::arg("tokenizer"), py::arg("data_dir") = "");

    m.def("rouge1", &rouge1);
    m.def("rouge2", &rouge2);
    m.def("rouge_l", &rouge_l);
    m.def(
        "s_priv",
        [](const std::string& text, const Tokenizer& tok, const std::string& data_dir) {
            Detector det(DetectorConfig::defaults(data_dir));
            return s_priv_value(text, det, tok);
        },
        py::arg("text"), py::arg("tokenizer"), py::arg("data_dir") = "");
    m.def("delta", &delta, py::arg("s_priv"), py::arg("baseline"));

    m.def("exact_kl", &exact_kl, py::arg("p"), py::arg("q"));
    m.def(
        "check_dpi",
        [](int trials, int max_alphabet, int max_length, uint64_t seed) {
            DpiReport r = check_dpi(trials, max_alphabet, max_length, seed);
            py::dict d;
            d["trials"] = r.trials;
            d["violations"] = r.violations;
            d["max_violation"] = r.max_violation;
            d["mean_gap"] = r.mean_gap;
            return d;
        },
        py::arg("trials") = 1000, py::arg("max_alphabet") = 4, py::arg("max_length") = 2,
        py::arg("seed") = 7);

    py::enum_<Strategy>(m, "Strategy")
        .value("Vanilla", Strategy::Vanilla)
        .value("Removal", Strategy::Removal)
        .value("Substitution", Strategy::Substitution)
        .value("Penalty", Strategy::Penalty)
        .value("Classifier", Strategy::Classifier)
        .value("DPO", Strategy::Dpo)
        .value("IT", Strategy::It)
        .value("IT_PN1", Strategy::ItPn1)
        .value("IT_PN2", Strategy::ItPn2)
        .value("IT_NP1", Strategy::ItNp1)
        .value("IT_NP2", Strategy::ItNp2);

    py::class_<TemplateLibrary>(m, "TemplateLibrary")
        .def(py::init<const std::string&>(), py::arg("data_dir") = "")
        .def("inference_prompt", &TemplateLibrary::inference_prompt)
        .def(
            "render",
            [](const TemplateLibrary& lib, Strategy strategy, const std::string& question,
               const std::string& answer, const std::string& answer_protected) {
                auto r = lib.instantiate(strategy, question, answer, answer_protected);
                return py::make_tuple(r.prompt, r.completion);
            },
            py::arg("strategy"), py::arg("question"), py::arg("answer"),
            py::arg("answer_protected") = "")
        .def("extract_protected_answer",
             [](const TemplateLibrary& lib, const std::string& generation, Strategy strategy) {
                 ExtractedAnswer e = lib.extract_protected_answer(generation, strategy);
                 return py::make_tuple(e.text, e.used_fallback);
             });

    py::class_<LmParams>(m, "LmParams")
        .def_property_readonly("num_params", &LmParams::num_params)
        .def_property_readonly("checksum", &LmParams::checksum)
        .def_property_readonly("vocab", [](const LmParams& p) { return p.config.vocab; });

    py::class_<ModelConfig>(m, "ModelConfig")
        .def(py::init([](int layers, int heads, int width, int context, int vocab,
                         uint64_t seed) {
                 ModelConfig cfg;
                 cfg.layers = layers;
                 cfg.heads = heads;
                 cfg.width = width;
                 cfg.context = context;
                 cfg.vocab = vocab;
                 cfg.seed = seed;
                 return cfg;
             }),
             py::arg("layers") = 4, py::arg("heads") = 4, py::arg("width") = 128,
             py::arg("context") = 256, py::arg("vocab") = 0, py::arg("seed") = 0);

    m.def("init_model", &LmParams::init, py::arg("config"));
    m.def(
        "generate",
        [](const LmParams& params, const std::vector<int>& prompt, int max_new, int eos_id,
           bool greedy, int top_k, uint64_t seed) {
            GenerateOptions opts;
            opts.max_new = max_new;
            opts.eos_id = eos_id;
            opts.mode = greedy ? DecodeMode::Greedy : DecodeMode::TopK;
            opts.top_k = top_k;
            opts.seed = seed;
            return generate(params, prompt, opts);
        },
        py::arg("params"), py::arg("prompt"), py::arg("max_new") = 32, py::arg("eos_id") = -1,
        py::arg("greedy") = true, py::arg("top_k") = 10, py::arg("seed") = 0);

    m.def(
        "train_lm",
        [](LmParams& params, const std::vector<std::pair<std::string, std::string>>& records,
           const Tokenizer& tok, int epochs, int batch, double lr, double gamma, uint64_t seed,
           int threads) {
            std::vector<TrainItem> items;
            for (const auto& [prompt, completion] : records) {
                items.push_back(make_train_item(prompt, completion, tok, params.config.context));
            }
            TrainConfig cfg;
            cfg.epochs = epochs;
            cfg.batch_size = batch;
            cfg.lr = lr;
            cfg.gamma = gamma;
            cfg.seed = seed;
            cfg.threads = threads;
            TrainLog log = train(params, items, nullptr, cfg);
            return log.rows.empty() ? 0.0 : log.rows.back().l0;
        },
        py::arg("params"), py::arg("records"), py::arg("tokenizer"), py::arg("epochs") = 5,
        py::arg("batch") = 64, py::arg("lr") = 1e-4, py::arg("gamma") = 0.85, py::arg("seed") = 0,
        py::arg("threads") = 2);

    m.def(
        "run_matrix",
        [](const std::string& out_dir, uint64_t seed, std::size_t size, double density,
           int epochs, const std::vector<std::string>& strategies, const std::string& data_dir) {
            RunConfig cfg = RunConfig::defaults();
            cfg.out_dir = out_dir;
            cfg.seed = seed;
            cfg.train.seed = seed;
            cfg.model.seed = seed;
            cfg.size = size;
            cfg.pii_density = density;
            cfg.train.epochs = epochs;
            if (!data_dir.empty()) {
                cfg.data_dir = data_dir;
                cfg.detector.data_dir = data_dir;
            }
            std::vector<Strategy> parsed;
            for (const auto& s : strategies) parsed.push_back(strategy_from_string(s));
            if (parsed.empty()) parsed = all_strategies();
            Pipeline pipeline(cfg);
            pipeline.run_matrix(parsed);
            return pipeline.paths().table_txt();
        },
        py::arg("out_dir"), py::arg("seed") = 7, py::arg("size") = 96, py::arg("density") = 0.08,
        py::arg("epochs") = 4, py::arg("strategies") = std::vector<std::string>{},
        py::arg("data_dir") = "");
}

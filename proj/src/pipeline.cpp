#include "privlm/pipeline.hpp"

#include <algorithm>
#include <thread>

#include <json.hpp>

#include "privlm/common.hpp"
#include "privlm/metrics.hpp"

namespace privlm {

using nlohmann::json;

std::string RunPaths::curated_jsonl(CurationMode mode) const {
    return root + "/curated/" + (mode == CurationMode::Removal ? "removal" : "substitution") +
           ".jsonl";
}
std::string RunPaths::rendered_jsonl(Strategy s) const {
    return root + "/rendered/" + to_string(s) + ".train.jsonl";
}
std::string RunPaths::checkpoint(Strategy s) const {
    return root + "/checkpoints/" + to_string(s) + ".ckpt";
}
std::string RunPaths::train_log_csv(Strategy s) const {
    return root + "/logs/" + to_string(s) + ".train.csv";
}
std::string RunPaths::curve_csv(Strategy s) const {
    return root + "/curves/" + to_string(s) + ".curve.csv";
}
std::string RunPaths::report_json(Strategy s) const {
    return root + "/reports/" + to_string(s) + ".json";
}

Pipeline::Pipeline(const RunConfig& cfg) : cfg_(cfg) {
    paths_.root = cfg.out_dir;
    ensure_dir(paths_.root);
    write_text_file(paths_.config_toml(), cfg_.to_toml());
    note_artifact(paths_.config_toml());
}

void Pipeline::note_artifact(const std::string& path) {
    std::lock_guard<std::mutex> lock(mutex_);
    artifacts_[path] = fnv64_file(path);
}

const Detector& Pipeline::detector() {
    if (!detector_) detector_ = std::make_unique<Detector>(cfg_.detector);
    return *detector_;
}

const TemplateLibrary& Pipeline::templates() {
    if (!templates_) templates_ = std::make_unique<TemplateLibrary>(cfg_.data_dir);
    return *templates_;
}

void Pipeline::build_corpus() {
    if (file_exists(paths_.corpus_jsonl()) && file_exists(paths_.split_json())) {
        Corpus c = load_jsonl(paths_.corpus_jsonl());
        load_split(c, paths_.split_json());
        corpus_ = std::move(c);
        return;
    }
    Corpus c;
    if (cfg_.corpus == "synthetic") {
        SynthConfig sc;
        sc.seed = cfg_.seed;
        sc.size = cfg_.size;
        sc.pii_density = cfg_.pii_density;
        sc.data_dir = cfg_.data_dir;
        c = synthesize_corpus(sc);
    } else {
        require(file_exists(cfg_.corpus), ErrorKind::Prerequisite,
                "corpus file not found: " + cfg_.corpus);
        c = load_jsonl(cfg_.corpus);
    }
    split_corpus(c, cfg_.train_fraction, cfg_.seed);
    save_jsonl(c, paths_.corpus_jsonl());
    save_split(c, paths_.split_json());
    note_artifact(paths_.corpus_jsonl());
    note_artifact(paths_.split_json());
    corpus_ = std::move(c);
}

const Corpus& Pipeline::corpus() {
    if (!corpus_) {
        require(file_exists(paths_.corpus_jsonl()) && file_exists(paths_.split_json()),
                ErrorKind::Prerequisite,
                "corpus artifacts missing under " + paths_.root + "; run synth first");
        Corpus c = load_jsonl(paths_.corpus_jsonl());
        load_split(c, paths_.split_json());
        corpus_ = std::move(c);
    }
    return *corpus_;
}

const Tokenizer& Pipeline::tokenizer() {
    if (!tokenizer_) {
        const Corpus& c = corpus();
        std::vector<std::string> texts;
        for (const Sample* s : c.train_samples()) {
            texts.push_back(s->question);
            texts.push_back(s->answer);
        }
        // template skeleton words must be in-vocabulary as well
        for (Strategy s : {Strategy::Vanilla, Strategy::It, Strategy::ItPn1, Strategy::ItPn2,
                           Strategy::ItNp1, Strategy::ItNp2}) {
            auto rendered = templates().instantiate(s, "", "", "");
            texts.push_back(rendered.prompt);
            texts.push_back(rendered.completion);
        }
        tokenizer_ = Tokenizer::build(texts);
    }
    return *tokenizer_;
}

void Pipeline::annotate() {
    const Corpus& c = corpus();
    AnnotationMap map = detector().annotate_corpus(c, tokenizer());
    save_annotations(map, paths_.annotations_json());
    note_artifact(paths_.annotations_json());
    PiiNGramSet set = extract_pii_ngrams(map, c.train_ids);
    set.save(paths_.ngrams_json());
    note_artifact(paths_.ngrams_json());
    annotations_ = std::move(map);
    ngrams_ = std::move(set);
}

const AnnotationMap& Pipeline::annotations() {
    if (!annotations_) {
        require(file_exists(paths_.annotations_json()), ErrorKind::Prerequisite,
                "annotations missing under " + paths_.root + "; run annotate first");
        annotations_ = load_annotations(paths_.annotations_json());
    }
    return *annotations_;
}

const PiiNGramSet& Pipeline::ngrams() {
    if (!ngrams_) {
        require(file_exists(paths_.ngrams_json()), ErrorKind::Prerequisite,
                "n-gram sets missing under " + paths_.root + "; run annotate first");
        ngrams_ = PiiNGramSet::load(paths_.ngrams_json());
    }
    return *ngrams_;
}

void Pipeline::curate() {
    const Corpus& c = corpus();
    const AnnotationMap& ann = annotations();
    for (CurationMode mode : {CurationMode::Removal, CurationMode::Substitution}) {
        Corpus curated = curate_corpus(c, ann, tokenizer(), mode);
        std::string provenance = std::string("curated:") +
                                 (mode == CurationMode::Removal ? "removal" : "substitution") +
                                 " seed=" + std::to_string(cfg_.seed);
        save_jsonl(curated, paths_.curated_jsonl(mode), provenance);
        note_artifact(paths_.curated_jsonl(mode));
    }
}

std::vector<InstructionRecord> Pipeline::render_split(Strategy s,
                                                      const std::vector<std::string>& ids) {
    const Corpus& c = corpus();
    const AnnotationMap& ann = annotations();
    std::vector<InstructionRecord> records;
    records.reserve(ids.size());
    for (const auto& id : ids) {
        auto it = ann.find(id);
        require(it != ann.end(), ErrorKind::Prerequisite,
                "render: missing annotation for sample " + id);
        records.push_back(templates().render(c.sample(id), it->second.answer, s, tokenizer()));
    }
    return records;
}

void Pipeline::render_strategy(Strategy s) {
    require(s != Strategy::Dpo && s != Strategy::Classifier, ErrorKind::Config,
            "render: " + to_string(s) + " has no rendered training set");
    auto records = render_split(s, corpus().train_ids);
    save_records(records, paths_.rendered_jsonl(s));
    note_artifact(paths_.rendered_jsonl(s));
}

std::vector<TrainItem> Pipeline::items_for(Strategy s) {
    Strategy render_as = s == Strategy::Penalty ? Strategy::Vanilla : s;
    auto records = render_split(render_as, corpus().train_ids);
    std::vector<TrainItem> items;
    items.reserve(records.size());
    std::size_t truncated = 0;
    for (const auto& r : records) {
        bool trunc = false;
        items.push_back(
            make_train_item(r.prompt, r.completion, tokenizer(), cfg_.model.context, &trunc));
        if (trunc) ++truncated;
    }
    if (truncated > 0) {
        fprintf(stderr, "warning: %zu/%zu records truncated to context %d\n", truncated,
                items.size(), cfg_.model.context);
    }
    return items;
}

EvalContext Pipeline::eval_context(const LmParams& embedder, const ClassifierHead* guard) const {
    EvalContext ctx;
    ctx.tokenizer = &*tokenizer_;
    ctx.templates = templates_.get();
    ctx.detector = detector_.get();
    ctx.embedder = &embedder;
    ctx.max_new = cfg_.max_new;
    ctx.use_curated_refs = cfg_.use_curated_refs;
    ctx.annotations = annotations_ ? &*annotations_ : nullptr;
    ctx.guard = guard;
    return ctx;
}

void Pipeline::train_strategy(Strategy s, bool with_curves) {
    require(s != Strategy::Dpo, ErrorKind::Config, "use the dpo stage for DPO");
    require(s != Strategy::Classifier, ErrorKind::Config,
            "use the classify stage for the classifier arm");
    std::vector<TrainItem> items = items_for(s);

    ModelConfig mc = cfg_.model;
    mc.vocab = tokenizer().vocab_size();
    LmParams params = LmParams::init(mc);

    TrainConfig tc = cfg_.train;
    tc.mode = s == Strategy::Penalty ? LossMode::Penalty : LossMode::Vanilla;
    const PiiNGramSet* theta = tc.mode == LossMode::Penalty ? &ngrams() : nullptr;

    TrainLog log;
    if (with_curves || cfg_.eval_every > 0) {
        // evaluation during training needs the shared context pieces
        detector();
        templates();
        annotations();
        std::vector<CurvePoint> points;
        CurveConfig cc;
        std::size_t steps_per_epoch = (items.size() + static_cast<std::size_t>(tc.batch_size) - 1) /
                                      static_cast<std::size_t>(tc.batch_size);
        uint64_t total = static_cast<uint64_t>(steps_per_epoch) * static_cast<uint64_t>(tc.epochs);
        cc.eval_every = cfg_.eval_every > 0 ? cfg_.eval_every
                                            : std::max<int>(1, static_cast<int>(total / 10));
        cc.probe = cfg_.probe;
        // embedding reference frozen at the run start so snapshots compare
        LmParams embed_ref = params;
        EvalContext ctx = eval_context(embed_ref, nullptr);
        log = curve_run(params, items, theta, tc, s, corpus().test_samples(), ctx, cc, points);
        save_curve_csv(points, paths_.curve_csv(s));
        note_artifact(paths_.curve_csv(s));
        save_curve_svgs(points, paths_.curve_dir(), to_string(s));
    } else {
        log = train(params, items, theta, tc);
    }
    log.save_csv(paths_.train_log_csv(s));
    note_artifact(paths_.train_log_csv(s));

    Checkpoint ckpt;
    ckpt.params = std::move(params);
    ckpt.vocab = tokenizer().vocab();
    save_checkpoint(ckpt, paths_.checkpoint(s));
    note_artifact(paths_.checkpoint(s));
}

void Pipeline::train_dpo_strategy() {
    require(file_exists(paths_.checkpoint(Strategy::Vanilla)), ErrorKind::Prerequisite,
            "dpo needs the Vanilla checkpoint; train Vanilla first");
    Checkpoint sft = load_checkpoint(paths_.checkpoint(Strategy::Vanilla));
    LmParams policy = sft.params;
    const LmParams& reference = sft.params;  // frozen

    std::vector<PreferencePair> pairs =
        build_dpo_pairs(corpus(), annotations(), tokenizer(), templates());
    require(!pairs.empty(), ErrorKind::Prerequisite,
            "dpo: no PII-bearing samples in the train split");
    std::vector<DpoItem> items;
    items.reserve(pairs.size());
    for (const auto& p : pairs) items.push_back(make_dpo_item(p, tokenizer(), cfg_.model.context));

    TrainConfig tc = cfg_.train;
    tc.mode = LossMode::Dpo;
    tc.epochs = cfg_.dpo_epochs;
    tc.lr = cfg_.dpo_lr;
    DpoConfig dc;
    dc.beta = cfg_.dpo_beta;
    dc.reference_checkpoint = paths_.checkpoint(Strategy::Vanilla);

    uint64_t ref_before = reference.checksum();
    TrainLog log = train_dpo(policy, reference, items, tc, dc);
    require(reference.checksum() == ref_before, ErrorKind::Precondition,
            "dpo: the frozen reference changed during training");
    log.save_csv(paths_.train_log_csv(Strategy::Dpo));
    note_artifact(paths_.train_log_csv(Strategy::Dpo));

    Checkpoint out;
    out.params = std::move(policy);
    out.vocab = sft.vocab;
    save_checkpoint(out, paths_.checkpoint(Strategy::Dpo));
    note_artifact(paths_.checkpoint(Strategy::Dpo));
}

void Pipeline::train_classifier_head() {
    require(file_exists(paths_.checkpoint(Strategy::Vanilla)), ErrorKind::Prerequisite,
            "classify needs the Vanilla checkpoint; train Vanilla first");
    Checkpoint base = load_checkpoint(paths_.checkpoint(Strategy::Vanilla));
    uint64_t before = base.params.checksum();

    ClassifierTrainConfig cc;
    cc.seed = cfg_.seed;
    cc.tau = cfg_.threshold;
    ClassifierHead head = train_classifier(base.params, annotations(), corpus().train_ids, cc);
    require(base.params.checksum() == before, ErrorKind::Precondition,
            "classify: the frozen base model changed during head training");

    Checkpoint out;
    out.params = std::move(base.params);
    out.vocab = base.vocab;
    out.extra["classifier.w"] = head.w.transpose();
    Mat b(1, 1);
    b(0, 0) = head.b;
    out.extra["classifier.b"] = b;
    out.extra_meta_json = json{{"tau", head.tau}}.dump();
    save_checkpoint(out, paths_.checkpoint(Strategy::Classifier));
    note_artifact(paths_.checkpoint(Strategy::Classifier));
}

Checkpoint Pipeline::load_strategy_checkpoint(Strategy s) {
    require(file_exists(paths_.checkpoint(s)), ErrorKind::Prerequisite,
            "no checkpoint for " + to_string(s) + "; train it first");
    return load_checkpoint(paths_.checkpoint(s));
}

EvalReport Pipeline::eval_strategy(Strategy s, std::optional<double> baseline_s_priv) {
    Checkpoint ckpt = load_strategy_checkpoint(s);
    corpus();
    tokenizer();
    annotations();
    detector();
    templates();

    std::optional<ClassifierHead> guard;
    if (s == Strategy::Classifier) {
        require(ckpt.extra.count("classifier.w") != 0, ErrorKind::Prerequisite,
                "Classifier checkpoint has no head section; run classify first");
        ClassifierHead head;
        head.w = ckpt.extra.at("classifier.w").row(0).transpose();
        head.b = ckpt.extra.at("classifier.b")(0, 0);
        head.tau = json::parse(ckpt.extra_meta_json).value("tau", 0.5);
        guard = head;
    }

    if (!embedder_) {
        // the embedding reference is pinned to the Vanilla checkpoint
        require(file_exists(paths_.checkpoint(Strategy::Vanilla)), ErrorKind::Prerequisite,
                "evaluation needs the Vanilla checkpoint as the embedding reference");
        embedder_ = load_checkpoint(paths_.checkpoint(Strategy::Vanilla)).params;
    }
    EvalContext ctx = eval_context(*embedder_, guard ? &*guard : nullptr);
    EvalReport report = evaluate(ckpt.params, s, corpus().test_samples(), ctx);
    if (baseline_s_priv) {
        report.delta = delta(report.s_priv, *baseline_s_priv);
    }
    write_text_file(paths_.report_json(s), report.to_json());
    note_artifact(paths_.report_json(s));
    return report;
}

void Pipeline::run_matrix(const std::vector<Strategy>& strategies, bool parallel,
                          bool curves_for_vanilla) {
    build_corpus();
    annotate();
    curate();

    auto has = [&](Strategy s) {
        return std::find(strategies.begin(), strategies.end(), s) != strategies.end();
    };

    // Vanilla first: baseline, embedding reference, DPO/classifier base
    if (has(Strategy::Vanilla)) {
        render_strategy(Strategy::Vanilla);
        train_strategy(Strategy::Vanilla, curves_for_vanilla);
    }

    std::vector<Strategy> independent;
    for (Strategy s : strategies) {
        if (s == Strategy::Vanilla || s == Strategy::Dpo || s == Strategy::Classifier) continue;
        independent.push_back(s);
    }
    auto run_one = [&](Strategy s) {
        render_strategy(s);
        train_strategy(s, false);
    };
    if (parallel) {
        RunConfig saved = cfg_;
        cfg_.train.threads = 1;  // strategies already run concurrently
        std::vector<std::thread> pool;
        for (Strategy s : independent) pool.emplace_back([&, s] { run_one(s); });
        for (auto& t : pool) t.join();
        cfg_ = saved;
    } else {
        for (Strategy s : independent) run_one(s);
    }

    if (has(Strategy::Classifier)) train_classifier_head();
    if (has(Strategy::Dpo)) train_dpo_strategy();

    // evaluation: Vanilla defines the baseline leakage
    std::vector<EvalReport> reports;
    std::optional<double> baseline;
    if (has(Strategy::Vanilla)) {
        EvalReport vanilla = eval_strategy(Strategy::Vanilla);
        baseline = vanilla.s_priv;
        reports.push_back(std::move(vanilla));
    }
    for (Strategy s : strategies) {
        if (s == Strategy::Vanilla) continue;
        reports.push_back(eval_strategy(s, baseline));
    }

    write_text_file(paths_.table_txt(), render_report_table(reports));
    note_artifact(paths_.table_txt());
    json combined = json::array();
    for (const auto& r : reports) combined.push_back(json::parse(r.to_json()));
    write_text_file(paths_.combined_json(), combined.dump(2) + "\n");
    note_artifact(paths_.combined_json());
    write_manifest();
}

DpiReport Pipeline::theory_check(int trials, int max_alphabet, int max_length) {
    return check_dpi(trials, max_alphabet, max_length, cfg_.seed);
}

std::vector<CurvePoint> Pipeline::load_curve(Strategy s) {
    require(file_exists(paths_.curve_csv(s)), ErrorKind::Prerequisite,
            "no curve for " + to_string(s));
    std::vector<CurvePoint> points;
    std::map<uint64_t, CurvePoint> by_step;
    for (const auto& line : read_lines(paths_.curve_csv(s))) {
        if (line.empty() || line.rfind("step,", 0) == 0) continue;
        std::size_t c1 = line.find(',');
        std::size_t c2 = line.find(',', c1 + 1);
        uint64_t step = std::stoull(line.substr(0, c1));
        std::string metric = line.substr(c1 + 1, c2 - c1 - 1);
        double value = std::stod(line.substr(c2 + 1));
        CurvePoint& p = by_step[step];
        p.step = step;
        if (metric == "rouge1") p.rouge1 = value;
        else if (metric == "rouge2") p.rouge2 = value;
        else if (metric == "rougeL") p.rouge_l = value;
        else if (metric == "embed_score") p.embed_score = value;
        else if (metric == "s_priv") p.s_priv = value;
    }
    for (auto& [step, p] : by_step) points.push_back(p);
    return points;
}

void Pipeline::write_manifest() {
    json j;
    j["seed"] = cfg_.seed;
    j["config"] = cfg_.to_toml();
    json arts = json::object();
    {
        std::lock_guard<std::mutex> lock(mutex_);
        for (const auto& [path, digest] : artifacts_) {
            std::string rel = path.rfind(paths_.root + "/", 0) == 0
                                  ? path.substr(paths_.root.size() + 1)
                                  : path;
            arts[rel] = digest;
        }
    }
    j["artifacts"] = arts;
    write_text_file(paths_.manifest(), j.dump(2) + "\n");
}

}  // namespace privlm

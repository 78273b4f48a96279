#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "privlm/classifier.hpp"
#include "privlm/config.hpp"
#include "privlm/corpus.hpp"
#include "privlm/curation.hpp"
#include "privlm/detector.hpp"
#include "privlm/evaluate.hpp"
#include "privlm/templates.hpp"
#include "privlm/theory.hpp"
#include "privlm/train.hpp"

namespace privlm {

/// Canonical layout of one run directory.
struct RunPaths {
    std::string root;

    std::string config_toml() const { return root + "/config.toml"; }
    std::string manifest() const { return root + "/manifest.json"; }
    std::string corpus_jsonl() const { return root + "/corpus/full.jsonl"; }
    std::string split_json() const { return root + "/corpus/split.json"; }
    std::string annotations_json() const { return root + "/corpus/annotations.json"; }
    std::string ngrams_json() const { return root + "/corpus/ngrams.json"; }
    std::string curated_jsonl(CurationMode mode) const;
    std::string rendered_jsonl(Strategy s) const;
    std::string checkpoint(Strategy s) const;
    std::string train_log_csv(Strategy s) const;
    std::string curve_csv(Strategy s) const;
    std::string curve_dir() const { return root + "/curves"; }
    std::string report_json(Strategy s) const;
    std::string table_txt() const { return root + "/reports/combined_table.txt"; }
    std::string combined_json() const { return root + "/reports/combined.json"; }
};

/// Stage driver over a run directory. Stages are idempotent: artifacts
/// already on disk are reloaded, missing prerequisites raise Prerequisite
/// errors (CLI exit code 3).
class Pipeline {
public:
    explicit Pipeline(const RunConfig& cfg);

    const RunPaths& paths() const { return paths_; }
    const RunConfig& config() const { return cfg_; }

    // stages
    void build_corpus();                      // synth or load + split
    void annotate();
    void curate();
    void render_strategy(Strategy s);
    void train_strategy(Strategy s, bool with_curves = false);
    void train_dpo_strategy();
    void train_classifier_head();
    EvalReport eval_strategy(Strategy s, std::optional<double> baseline_s_priv = std::nullopt);
    void run_matrix(const std::vector<Strategy>& strategies, bool parallel = false,
                    bool curves_for_vanilla = true);
    DpiReport theory_check(int trials, int max_alphabet, int max_length);

    void write_manifest();

    // loaded state access (for tests and the acceptance suite)
    const Corpus& corpus();
    const Tokenizer& tokenizer();
    const AnnotationMap& annotations();
    const PiiNGramSet& ngrams();
    const Detector& detector();
    const TemplateLibrary& templates();
    Checkpoint load_strategy_checkpoint(Strategy s);
    std::vector<CurvePoint> load_curve(Strategy s);

    std::vector<InstructionRecord> render_split(Strategy s,
                                                const std::vector<std::string>& ids);

private:
    void note_artifact(const std::string& path);
    std::vector<TrainItem> items_for(Strategy s);
    EvalContext eval_context(const LmParams& embedder, const ClassifierHead* guard) const;

    RunConfig cfg_;
    RunPaths paths_;
    std::optional<Corpus> corpus_;
    std::optional<Tokenizer> tokenizer_;
    std::optional<AnnotationMap> annotations_;
    std::optional<PiiNGramSet> ngrams_;
    std::unique_ptr<Detector> detector_;
    std::unique_ptr<TemplateLibrary> templates_;
    std::optional<LmParams> embedder_;
    std::map<std::string, uint64_t> artifacts_;
    std::mutex mutex_;
};

}  // namespace privlm

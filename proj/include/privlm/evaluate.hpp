#pragma once

#include <optional>
#include <string>
#include <vector>

#include "privlm/classifier.hpp"
#include "privlm/detector.hpp"
#include "privlm/metrics.hpp"
#include "privlm/model.hpp"
#include "privlm/templates.hpp"
#include "privlm/train.hpp"

namespace privlm {

struct EvalReport {
    Strategy strategy = Strategy::Vanilla;
    double rouge1 = 0.0, rouge2 = 0.0, rouge_l = 0.0;  // means over samples
    double embed_score = 0.0;                          // mean cosine
    double s_priv = 0.0;                               // pooled P / |G|
    std::optional<double> delta;                       // vs named baseline
    std::string baseline = "Vanilla";
    std::size_t samples = 0;
    std::size_t extraction_fallbacks = 0;
    std::size_t generated_tokens = 0;
    std::size_t pii_tokens = 0;

    std::string to_json() const;
    static EvalReport from_json(const std::string& text);
};

struct CurvePoint {
    uint64_t step = 0;
    double rouge1 = 0.0, rouge2 = 0.0, rouge_l = 0.0;
    double embed_score = 0.0;
    double s_priv = 0.0;
};

/// Sequence embedding: mean-pooled final hidden states of the frozen
/// embedder (bos excluded). Stand-in for an external sentence encoder.
Eigen::VectorXd sequence_embedding(const LmParams& embedder, const std::vector<int>& ids);
double embed_score(const LmParams& embedder, const std::vector<int>& g_ids,
                   const std::vector<int>& r_ids);

struct EvalContext {
    const Tokenizer* tokenizer = nullptr;
    const TemplateLibrary* templates = nullptr;
    const Detector* detector = nullptr;
    const LmParams* embedder = nullptr;  // fixed for the whole suite
    int max_new = 48;
    bool use_curated_refs = false;       // compare against substituted answers
    const AnnotationMap* annotations = nullptr;  // needed for curated refs
    const ClassifierHead* guard = nullptr;       // drives the Classifier arm
};

/// Greedy generation per test question, protected-case extraction for the
/// case strategies, metrics against the reference answers. Deterministic.
EvalReport evaluate(const LmParams& params, Strategy strategy,
                    const std::vector<const Sample*>& test_samples, const EvalContext& ctx);

struct CurveConfig {
    int eval_every = 0;       // 0: final point only
    std::size_t probe = 16;   // fixed probe subset size
};

/// Training with periodic evaluation on a probe subset of the test split.
TrainLog curve_run(LmParams& params, const std::vector<TrainItem>& items,
                   const PiiNGramSet* theta, const TrainConfig& cfg, Strategy strategy,
                   const std::vector<const Sample*>& test_samples, const EvalContext& ctx,
                   const CurveConfig& curve_cfg, std::vector<CurvePoint>& points);

void save_curve_csv(const std::vector<CurvePoint>& points, const std::string& path);
void save_curve_svgs(const std::vector<CurvePoint>& points, const std::string& dir,
                     const std::string& prefix);

/// One row per strategy, column order ROUGE-1/2/L, S_embed, S_Priv, Delta.
std::string render_report_table(const std::vector<EvalReport>& reports);

void svg_line_plot(const std::string& path, const std::string& title,
                   const std::vector<double>& xs, const std::vector<double>& ys);

}  // namespace privlm

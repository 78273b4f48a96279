#pragma once

#include <vector>

#include "privlm/detector.hpp"
#include "privlm/model.hpp"

namespace privlm {

/// Linear probe on final-layer hidden states: P(token i is PII | h_i).
struct ClassifierHead {
    Eigen::VectorXd w;
    double b = 0.0;
    double tau = 0.5;  // decision threshold

    double probability(const Eigen::RowVectorXd& hidden) const;
    bool fires(const Eigen::RowVectorXd& hidden) const;
};

struct ClassifierTrainConfig {
    int epochs = 200;
    double lr = 0.05;
    double weight_decay = 1e-4;
    uint64_t seed = 0;
    double tau = 0.5;
};

/// Logistic regression on (hidden state, label) rows. Gradient descent on
/// the full batch; deterministic.
ClassifierHead fit_head(const Mat& hidden, const std::vector<uint8_t>& labels,
                        const ClassifierTrainConfig& cfg);

/// Runs the frozen LM over every annotated train sequence (question and
/// answer) and fits the head on per-token labels. The base model is never
/// touched: its checksum is identical before and after.
ClassifierHead train_classifier(const LmParams& frozen, const AnnotationMap& annotations,
                                const std::vector<std::string>& train_ids,
                                const ClassifierTrainConfig& cfg);

struct F1Score {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t tp = 0, fp = 0, fn = 0;
};

F1Score evaluate_head(const LmParams& frozen, const ClassifierHead& head,
                      const AnnotationMap& annotations, const std::vector<std::string>& ids);

/// generate() with the head screening each emitted token: flagged tokens
/// are replaced by <X> in the output stream while the original token keeps
/// conditioning the model. Output length always equals the unguarded one.
std::vector<int> guarded_generate(const LmParams& params, const ClassifierHead& head,
                                  const std::vector<int>& prompt_ids, int anon_id,
                                  const GenerateOptions& options);

}  // namespace privlm

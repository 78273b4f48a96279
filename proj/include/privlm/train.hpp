#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "privlm/detector.hpp"
#include "privlm/model.hpp"
#include "privlm/templates.hpp"
#include "privlm/tokenizer.hpp"

namespace privlm {

enum class LossMode { Vanilla, Penalty, Dpo };

struct TrainConfig {
    int epochs = 5;
    int batch_size = 64;
    double lr = 1e-4;
    double gamma = 0.85;  // per-epoch step decay factor
    double weight_decay = 0.0;
    uint64_t seed = 0;
    LossMode mode = LossMode::Vanilla;
    bool loss_on_prompt = false;
    bool penalty_on_prompt = false;
    double lambda_penalty = 1.0;
    int threads = 2;  // deterministic wave width

    void validate() const;
};

struct DpoConfig {
    double beta = 0.1;
    std::string reference_checkpoint;  // frozen pi_ref

    void validate() const;
};

/// A tokenized training record: <bos> prompt completion <eos>.
struct TrainItem {
    std::vector<int> ids;
    int completion_begin = 0;  // index of the first completion token in ids
};

TrainItem make_train_item(const std::string& prompt, const std::string& completion,
                          const Tokenizer& tokenizer, int context, bool* truncated = nullptr);

struct DpoItem {
    std::vector<int> prompt_ids;  // without bos
    std::vector<int> w_ids;       // preferred completion
    std::vector<int> l_ids;       // dispreferred completion
};

DpoItem make_dpo_item(const PreferencePair& pair, const Tokenizer& tokenizer, int context);

// --- losses -----------------------------------------------------------------
// Each returns the scalar loss; when grads is non-null the parameter
// gradients are accumulated into it.

/// Mean negative log-likelihood over the completion positions (all
/// positions when loss_on_prompt).
double cross_entropy_loss(const LmParams& params, const TrainItem& item, bool loss_on_prompt,
                          LmParams* grads = nullptr);

/// Sum over every position k of the total model probability assigned to
/// the PII unigram set at that position.
double penalty_unigram(const LmParams& params, const std::vector<int>& seq,
                       const PiiNGramSet& theta, LmParams* grads = nullptr);

/// Sum over adjacent position pairs of sum over PII bigrams (a,b) of
/// P(a | prefix_k) * P(b | prefix_k plus the actual token at k).
double penalty_bigram(const LmParams& params, const std::vector<int>& seq,
                      const PiiNGramSet& theta, LmParams* grads = nullptr);

struct LossBreakdown {
    double l0 = 0.0;
    double penalty1 = 0.0;
    double penalty2 = 0.0;
    double dpo = 0.0;
    double total() const { return l0 + penalty1 + penalty2 + dpo; }
};

/// L = L_0 + lambda * (sum l_1gram + sum l_2gram), penalties over the
/// completion region (or everywhere with penalty_on_prompt).
LossBreakdown total_penalty_loss(const LmParams& params, const TrainItem& item,
                                 const PiiNGramSet& theta, const TrainConfig& cfg,
                                 LmParams* grads = nullptr);

/// -log sigmoid(beta * ((log pi - log ref)(w) - (log pi - log ref)(l))),
/// sequence log-probs summed over completion tokens (eos included).
double dpo_loss(const LmParams& policy, const LmParams& reference, const DpoItem& item,
                double beta, LmParams* grads = nullptr);

// --- training loop ----------------------------------------------------------

struct TrainLogRow {
    uint64_t step = 0;
    int epoch = 0;
    double lr = 0.0;
    double l0 = 0.0, penalty1 = 0.0, penalty2 = 0.0, dpo = 0.0, total = 0.0;
};

struct TrainLog {
    std::vector<TrainLogRow> rows;
    std::size_t truncated_records = 0;
    void save_csv(const std::string& path) const;
};

using StepCallback = std::function<void(uint64_t step, const LmParams& params)>;

/// Deterministic given the seed: fixed shuffle, fixed wave-merge order.
/// AdamW with per-epoch step decay. Aborts with a Divergence error when a
/// loss turns non-finite.
TrainLog train(LmParams& params, const std::vector<TrainItem>& items, const PiiNGramSet* theta,
               const TrainConfig& cfg, const StepCallback& callback = nullptr);

TrainLog train_dpo(LmParams& params, const LmParams& reference, const std::vector<DpoItem>& items,
                   const TrainConfig& cfg, const DpoConfig& dpo,
                   const StepCallback& callback = nullptr);

// --- gradient verification ---------------------------------------------------

/// loss_fn(params, grads): returns the loss, accumulating gradients when
/// grads is non-null.
using LossFn = std::function<double(const LmParams&, LmParams*)>;

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst_tensor;
    std::size_t checked = 0;
};

/// Central finite differences over every parameter (or every stride-th).
GradCheckResult grad_check(const LmParams& params, const LossFn& loss_fn, double epsilon,
                           int stride = 1);

}  // namespace privlm

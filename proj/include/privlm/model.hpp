#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "privlm/tokenizer.hpp"

namespace privlm {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ModelConfig {
    int layers = 4;
    int heads = 4;
    int width = 128;
    int context = 256;
    int vocab = 0;
    int mlp_mult = 4;
    uint64_t seed = 0;

    int head_dim() const { return width / heads; }
    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

struct LayerParams {
    Mat ln1_g, ln1_b;
    Mat wq, wk, wv, wo;
    Mat bq, bk, bv, bo;
    Mat ln2_g, ln2_b;
    Mat w1, b1, w2, b2;
};

/// All weights of the decoder-only transformer. Values are kept exactly
/// representable in float32 (the checkpoint precision): init and every
/// optimizer step round through f32.
struct LmParams {
    ModelConfig config;
    Mat tok_emb;   // vocab x width
    Mat pos_emb;   // context x width
    std::vector<LayerParams> layers;
    Mat lnf_g, lnf_b;
    Mat w_head, b_head;
    uint64_t step = 0;

    static LmParams init(const ModelConfig& config);
    static LmParams zeros_like(const LmParams& other);

    template <typename F>
    void for_each_tensor(F&& f) {
        f("tok_emb", tok_emb);
        f("pos_emb", pos_emb);
        for (std::size_t l = 0; l < layers.size(); ++l) {
            std::string p = "layer" + std::to_string(l) + ".";
            LayerParams& lp = layers[l];
            f(p + "ln1_g", lp.ln1_g); f(p + "ln1_b", lp.ln1_b);
            f(p + "wq", lp.wq); f(p + "bq", lp.bq);
            f(p + "wk", lp.wk); f(p + "bk", lp.bk);
            f(p + "wv", lp.wv); f(p + "bv", lp.bv);
            f(p + "wo", lp.wo); f(p + "bo", lp.bo);
            f(p + "ln2_g", lp.ln2_g); f(p + "ln2_b", lp.ln2_b);
            f(p + "w1", lp.w1); f(p + "b1", lp.b1);
            f(p + "w2", lp.w2); f(p + "b2", lp.b2);
        }
        f("lnf_g", lnf_g); f("lnf_b", lnf_b);
        f("head.w", w_head); f("head.b", b_head);
    }

    template <typename F>
    void for_each_tensor(F&& f) const {
        const_cast<LmParams*>(this)->for_each_tensor(
            [&](const std::string& name, Mat& m) { f(name, static_cast<const Mat&>(m)); });
    }

    std::size_t num_params() const;
    void zero();
    void scale(double alpha);
    void add_scaled(const LmParams& other, double alpha);
    void quantize_f32();
    uint64_t checksum() const;
    bool all_finite() const;
};

struct LayerCache {
    Mat x_in;
    Mat ln1_xhat;
    Eigen::VectorXd ln1_rstd;
    Mat q, k, v;
    std::vector<Mat> att;  // per head, len x len row-softmax
    Mat att_mix;
    Mat x_mid;
    Mat ln2_xhat;
    Eigen::VectorXd ln2_rstd;
    Mat h_pre, h_act;
};

struct ForwardCache {
    std::vector<int> ids;
    std::vector<LayerCache> layers;
    Mat lnf_xhat;
    Eigen::VectorXd lnf_rstd;
    Mat hidden;  // final normalized states, len x width
    Mat logits;  // len x vocab; row t scores the token at position t+1
};

/// Full forward pass with activation caching for backward().
void forward_cached(const LmParams& params, const std::vector<int>& ids, ForwardCache& cache);

struct ForwardResult {
    Mat log_probs;  // len x vocab, each row normalized (logsumexp == 0)
    Mat hidden;     // len x width
};
ForwardResult forward(const LmParams& params, const std::vector<int>& ids);

/// Accumulates parameter gradients for dLoss/dlogits into grads.
void backward(const LmParams& params, const ForwardCache& cache, const Mat& dlogits,
              LmParams& grads);

Mat log_softmax_rows(const Mat& logits);
Eigen::RowVectorXd softmax_row(const Eigen::RowVectorXd& logits);

/// Incremental decoding state (per-layer key/value history).
class GenState {
public:
    GenState(const LmParams& params);

    /// Feeds one token; returns the logits row for the next position and
    /// exposes the hidden state of the fed token.
    Eigen::RowVectorXd step(int token_id);
    const Eigen::RowVectorXd& last_hidden() const { return last_hidden_; }
    int length() const { return len_; }

private:
    const LmParams& params_;
    std::vector<Mat> k_, v_;
    int len_ = 0;
    Eigen::RowVectorXd last_hidden_;
};

enum class DecodeMode { Greedy, TopK };

struct GenerateOptions {
    int max_new = 32;
    DecodeMode mode = DecodeMode::Greedy;
    int top_k = 10;
    uint64_t seed = 0;
    int eos_id = -1;  // stop when sampled
};

std::vector<int> generate(const LmParams& params, const std::vector<int>& prompt_ids,
                          const GenerateOptions& options);

// --- checkpoint container ---

struct Checkpoint {
    LmParams params;
    std::vector<std::string> vocab;
    std::map<std::string, Mat> extra;  // optional sections (classifier head)
    std::string extra_meta_json = "{}";
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace privlm

#include "privlm/classifier.hpp"

#include <cmath>

#include "privlm/common.hpp"

namespace privlm {

using Eigen::RowVectorXd;
using Eigen::VectorXd;

double ClassifierHead::probability(const RowVectorXd& hidden) const {
    double z = hidden * w + b;
    return 1.0 / (1.0 + std::exp(-z));
}

bool ClassifierHead::fires(const RowVectorXd& hidden) const {
    return probability(hidden) > tau;
}

ClassifierHead fit_head(const Mat& hidden, const std::vector<uint8_t>& labels,
                        const ClassifierTrainConfig& cfg) {
    require(hidden.rows() == static_cast<Eigen::Index>(labels.size()), ErrorKind::Precondition,
            "fit_head: rows and labels disagree");
    require(hidden.rows() > 0, ErrorKind::Precondition, "fit_head: no training rows");
    std::size_t positives = 0;
    for (uint8_t l : labels) positives += l;
    require(positives > 0, ErrorKind::Precondition,
            "fit_head: training data has no positive labels");
    require(positives < labels.size(), ErrorKind::Precondition,
            "fit_head: training data has no negative labels");

    const auto n = hidden.rows();
    const auto d = hidden.cols();

    // standardize features; folded back into (w, b) below so the head
    // applies to raw hidden states
    RowVectorXd mu = hidden.colwise().mean();
    RowVectorXd sigma(d);
    for (Eigen::Index j = 0; j < d; ++j) {
        double var = (hidden.col(j).array() - mu(j)).square().mean();
        sigma(j) = std::sqrt(var) + 1e-8;
    }
    Mat x(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        x.row(i) = (hidden.row(i) - mu).cwiseQuotient(sigma);
    }

    VectorXd y(n);
    VectorXd sample_w(n);
    const double pos_weight =
        static_cast<double>(n - static_cast<Eigen::Index>(positives)) /
        static_cast<double>(positives);
    for (Eigen::Index i = 0; i < n; ++i) {
        y(i) = labels[static_cast<std::size_t>(i)];
        sample_w(i) = labels[static_cast<std::size_t>(i)] ? pos_weight : 1.0;
    }
    const double weight_sum = sample_w.sum();

    // full-batch Adam on the weighted binary cross entropy
    VectorXd w = VectorXd::Zero(d);
    double b = 0.0;
    VectorXd mw = VectorXd::Zero(d), vw = VectorXd::Zero(d);
    double mb = 0.0, vb = 0.0;
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    for (int t = 1; t <= cfg.epochs; ++t) {
        VectorXd z = x * w;
        z.array() += b;
        VectorXd p = (1.0 + (-z.array()).exp()).inverse();
        VectorXd err = (p - y).cwiseProduct(sample_w) / weight_sum;
        VectorXd gw = x.transpose() * err + cfg.weight_decay * w;
        double gb = err.sum();

        mw = b1 * mw + (1 - b1) * gw;
        vw = b2 * vw + (1 - b2) * gw.cwiseProduct(gw);
        mb = b1 * mb + (1 - b1) * gb;
        vb = b2 * vb + (1 - b2) * gb * gb;
        double bc1 = 1.0 - std::pow(b1, t);
        double bc2 = 1.0 - std::pow(b2, t);
        w -= cfg.lr * ((mw / bc1).array() / ((vw / bc2).array().sqrt() + eps)).matrix();
        b -= cfg.lr * (mb / bc1) / (std::sqrt(vb / bc2) + eps);
    }

    ClassifierHead head;
    head.tau = cfg.tau;
    head.w = w.cwiseQuotient(sigma.transpose());
    head.b = b - mu.cwiseQuotient(sigma).dot(w.transpose());
    return head;
}

namespace {

void collect_rows(const LmParams& frozen, const AnnotatedSequence& seq,
                  std::vector<RowVectorXd>& rows, std::vector<uint8_t>& labels) {
    if (seq.tokens.empty()) return;
    std::vector<int> ids;
    ids.reserve(seq.tokens.size() + 1);
    ids.push_back(1 /* bos */);
    ids.insert(ids.end(), seq.tokens.begin(), seq.tokens.end());
    if (static_cast<int>(ids.size()) > frozen.config.context) {
        ids.resize(static_cast<std::size_t>(frozen.config.context));
    }
    ForwardResult out = forward(frozen, ids);
    // hidden row t+1 is the contextual state of token t
    for (std::size_t t = 0; t + 1 < ids.size(); ++t) {
        rows.push_back(out.hidden.row(static_cast<Eigen::Index>(t) + 1));
        labels.push_back(seq.labels[t]);
    }
}

}  // namespace

ClassifierHead train_classifier(const LmParams& frozen, const AnnotationMap& annotations,
                                const std::vector<std::string>& train_ids,
                                const ClassifierTrainConfig& cfg) {
    std::vector<RowVectorXd> rows;
    std::vector<uint8_t> labels;
    for (const auto& id : train_ids) {
        auto it = annotations.find(id);
        require(it != annotations.end(), ErrorKind::Precondition,
                "train_classifier: missing annotation for sample " + id);
        collect_rows(frozen, it->second.question, rows, labels);
        collect_rows(frozen, it->second.answer, rows, labels);
    }
    require(!rows.empty(), ErrorKind::Precondition, "train_classifier: no training tokens");
    Mat hidden(static_cast<Eigen::Index>(rows.size()), frozen.config.width);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        hidden.row(static_cast<Eigen::Index>(i)) = rows[i];
    }
    return fit_head(hidden, labels, cfg);
}

F1Score evaluate_head(const LmParams& frozen, const ClassifierHead& head,
                      const AnnotationMap& annotations, const std::vector<std::string>& ids) {
    F1Score score;
    for (const auto& id : ids) {
        auto it = annotations.find(id);
        require(it != annotations.end(), ErrorKind::Precondition,
                "evaluate_head: missing annotation for sample " + id);
        for (const AnnotatedSequence* seq : {&it->second.question, &it->second.answer}) {
            std::vector<RowVectorXd> rows;
            std::vector<uint8_t> labels;
            collect_rows(frozen, *seq, rows, labels);
            for (std::size_t i = 0; i < rows.size(); ++i) {
                bool predicted = head.fires(rows[i]);
                bool actual = labels[i] == 1;
                if (predicted && actual) score.tp++;
                else if (predicted && !actual) score.fp++;
                else if (!predicted && actual) score.fn++;
            }
        }
    }
    double tp = static_cast<double>(score.tp);
    score.precision =
        score.tp + score.fp == 0 ? 0.0 : tp / static_cast<double>(score.tp + score.fp);
    score.recall = score.tp + score.fn == 0 ? 0.0 : tp / static_cast<double>(score.tp + score.fn);
    score.f1 = score.precision + score.recall == 0.0
                   ? 0.0
                   : 2.0 * score.precision * score.recall / (score.precision + score.recall);
    return score;
}

std::vector<int> guarded_generate(const LmParams& params, const ClassifierHead& head,
                                  const std::vector<int>& prompt_ids, int anon_id,
                                  const GenerateOptions& options) {
    require(!prompt_ids.empty(), ErrorKind::Precondition, "guarded_generate: empty prompt");
    GenState state(params);
    RowVectorXd logits;
    for (int id : prompt_ids) logits = state.step(id);

    Rng rng(options.seed ^ 0x67656eull);  // same stream as generate()
    std::vector<int> out;
    for (int i = 0; i < options.max_new; ++i) {
        if (state.length() >= params.config.context) break;
        int next = 0;
        if (options.mode == DecodeMode::Greedy) {
            logits.maxCoeff(&next);
        } else {
            int k = std::min<int>(options.top_k, static_cast<int>(logits.size()));
            std::vector<int> order(static_cast<std::size_t>(logits.size()));
            for (std::size_t j = 0; j < order.size(); ++j) order[j] = static_cast<int>(j);
            std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](int a, int b) {
                if (logits(a) != logits(b)) return logits(a) > logits(b);
                return a < b;
            });
            RowVectorXd top(k);
            for (int j = 0; j < k; ++j) top(j) = logits(order[static_cast<std::size_t>(j)]);
            RowVectorXd probs = softmax_row(top);
            double u = rng.next_unit();
            double acc = 0.0;
            int pick = k - 1;
            for (int j = 0; j < k; ++j) {
                acc += probs(j);
                if (u < acc) {
                    pick = j;
                    break;
                }
            }
            next = order[static_cast<std::size_t>(pick)];
        }
        if (next == options.eos_id) break;
        // the original token conditions the model; only the emitted stream
        // is screened, so length and downstream context are unchanged
        logits = state.step(next);
        bool flagged = head.fires(state.last_hidden());
        out.push_back(flagged ? anon_id : next);
    }
    return out;
}

}  // namespace privlm

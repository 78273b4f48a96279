#include "privlm/train.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <thread>

#include "privlm/common.hpp"

namespace privlm {

using Eigen::RowVectorXd;

void TrainConfig::validate() const {
    require(epochs >= 1, ErrorKind::Config, "train config: epochs must be positive");
    require(batch_size >= 1, ErrorKind::Config, "train config: batch size must be positive");
    require(lr > 0.0, ErrorKind::Config, "train config: learning rate must be positive");
    require(gamma > 0.0 && gamma <= 1.0, ErrorKind::Config,
            "train config: gamma must lie in (0,1]");
    require(lambda_penalty >= 0.0, ErrorKind::Config, "train config: lambda must be >= 0");
    require(threads >= 1, ErrorKind::Config, "train config: threads must be >= 1");
}

void DpoConfig::validate() const {
    require(beta > 0.0, ErrorKind::Config, "dpo config: beta must be positive");
}

TrainItem make_train_item(const std::string& prompt, const std::string& completion,
                          const Tokenizer& tokenizer, int context, bool* truncated) {
    TrainItem item;
    std::vector<int> prompt_ids = tokenizer.encode(prompt);
    std::vector<int> completion_ids = tokenizer.encode(completion);
    require(!completion_ids.empty(), ErrorKind::Precondition,
            "train item: empty completion");
    item.ids.push_back(tokenizer.bos_id());
    item.ids.insert(item.ids.end(), prompt_ids.begin(), prompt_ids.end());
    item.completion_begin = static_cast<int>(item.ids.size());
    item.ids.insert(item.ids.end(), completion_ids.begin(), completion_ids.end());
    item.ids.push_back(tokenizer.eos_id());
    bool was_truncated = false;
    if (static_cast<int>(item.ids.size()) > context) {
        item.ids.resize(static_cast<std::size_t>(context));
        was_truncated = true;
    }
    if (truncated) *truncated = was_truncated;
    require(item.completion_begin < static_cast<int>(item.ids.size()), ErrorKind::Precondition,
            "train item: prompt alone exceeds the context window");
    return item;
}

DpoItem make_dpo_item(const PreferencePair& pair, const Tokenizer& tokenizer, int context) {
    DpoItem item;
    item.prompt_ids = tokenizer.encode(pair.prompt);
    item.w_ids = tokenizer.encode(pair.preferred);
    item.l_ids = tokenizer.encode(pair.dispreferred);
    require(!item.w_ids.empty() && !item.l_ids.empty(), ErrorKind::Precondition,
            "dpo item: empty completion");
    std::size_t longest = 2 + item.prompt_ids.size() + std::max(item.w_ids.size(), item.l_ids.size());
    require(longest <= static_cast<std::size_t>(context), ErrorKind::Precondition,
            "dpo item: pair exceeds the context window");
    return item;
}

namespace {

struct Region {
    // logits rows [first, last] carry loss; row t scores ids[t + 1]
    Eigen::Index first = 0;
    Eigen::Index last = -1;
    Eigen::Index count() const { return last - first + 1; }
};

Region loss_region(const TrainItem& item, bool on_prompt) {
    Region r;
    const auto len = static_cast<Eigen::Index>(item.ids.size());
    r.first = on_prompt ? 0 : static_cast<Eigen::Index>(item.completion_begin) - 1;
    r.last = len - 2;
    return r;
}

double ce_from_cache(const ForwardCache& cache, const TrainItem& item, const Region& region,
                     Mat* dlogits) {
    require(region.count() >= 1, ErrorKind::Precondition,
            "cross entropy: empty loss region");
    double total = 0.0;
    const double inv_n = 1.0 / static_cast<double>(region.count());
    for (Eigen::Index t = region.first; t <= region.last; ++t) {
        int target = item.ids[static_cast<std::size_t>(t) + 1];
        RowVectorXd row = cache.logits.row(t);
        double mx = row.maxCoeff();
        RowVectorXd e = (row.array() - mx).exp();
        double z = e.sum();
        total += -(row(target) - mx - std::log(z));
        if (dlogits) {
            RowVectorXd p = e / z;
            p(target) -= 1.0;
            dlogits->row(t) += inv_n * p;
        }
    }
    return total * inv_n;
}

// sum over the theta-set probability mass at each region row; softmax
// jacobian applied directly to the logits gradient
double penalty1_from_cache(const ForwardCache& cache, const PiiNGramSet& theta,
                           const Region& region, double lambda, Mat* dlogits) {
    if (theta.unigrams.empty() || region.count() <= 0) return 0.0;
    double total = 0.0;
    for (Eigen::Index t = region.first; t <= region.last; ++t) {
        RowVectorXd p = softmax_row(cache.logits.row(t));
        double mass = 0.0;
        for (int id : theta.unigrams) mass += p(id);
        total += mass;
        if (dlogits) {
            // softmax jacobian: d(sum_theta p)/dz_j = p_j([j in theta] - mass)
            RowVectorXd d = (-mass) * p;
            for (int id : theta.unigrams) d(id) += p(id);
            dlogits->row(t) += lambda * d;
        }
    }
    return total;
}

double penalty2_from_cache(const ForwardCache& cache, const PiiNGramSet& theta,
                           const Region& region, double lambda, Mat* dlogits) {
    if (theta.bigrams.empty() || region.count() <= 1) return 0.0;
    double total = 0.0;
    for (Eigen::Index t = region.first; t < region.last; ++t) {
        RowVectorXd pa = softmax_row(cache.logits.row(t));
        RowVectorXd pb = softmax_row(cache.logits.row(t + 1));
        // g[a] = sum_b pb[b] over bigrams starting at a; h[b] symmetric
        double c = 0.0;
        RowVectorXd g = RowVectorXd::Zero(pa.size());
        RowVectorXd h = RowVectorXd::Zero(pb.size());
        for (const auto& [a, b] : theta.bigrams) {
            g(a) += pb(b);
            h(b) += pa(a);
        }
        c = pa.cwiseProduct(g).sum();
        total += c;
        if (dlogits) {
            dlogits->row(t) += lambda * pa.cwiseProduct((g.array() - c).matrix());
            dlogits->row(t + 1) += lambda * pb.cwiseProduct((h.array() - c).matrix());
        }
    }
    return total;
}

double sequence_logprob(const ForwardCache& cache, const std::vector<int>& ids,
                        Eigen::Index first_row, Mat* dlogits, double coeff) {
    double total = 0.0;
    const auto len = static_cast<Eigen::Index>(ids.size());
    for (Eigen::Index t = first_row; t <= len - 2; ++t) {
        int target = ids[static_cast<std::size_t>(t) + 1];
        RowVectorXd row = cache.logits.row(t);
        double mx = row.maxCoeff();
        RowVectorXd e = (row.array() - mx).exp();
        double z = e.sum();
        total += row(target) - mx - std::log(z);
        if (dlogits) {
            RowVectorXd p = e / z;
            dlogits->row(t) -= coeff * p;
            (*dlogits)(t, target) += coeff;
        }
    }
    return total;
}

}  // namespace

double cross_entropy_loss(const LmParams& params, const TrainItem& item, bool loss_on_prompt,
                          LmParams* grads) {
    ForwardCache cache;
    forward_cached(params, item.ids, cache);
    Region region = loss_region(item, loss_on_prompt);
    if (!grads) return ce_from_cache(cache, item, region, nullptr);
    Mat dlogits = Mat::Zero(cache.logits.rows(), cache.logits.cols());
    double loss = ce_from_cache(cache, item, region, &dlogits);
    backward(params, cache, dlogits, *grads);
    return loss;
}

double penalty_unigram(const LmParams& params, const std::vector<int>& seq,
                       const PiiNGramSet& theta, LmParams* grads) {
    std::vector<int> ids;
    ids.push_back(1 /* bos */);
    ids.insert(ids.end(), seq.begin(), seq.end());
    ForwardCache cache;
    forward_cached(params, ids, cache);
    Region region{0, static_cast<Eigen::Index>(seq.size()) - 1};
    if (!grads) return penalty1_from_cache(cache, theta, region, 1.0, nullptr);
    Mat dlogits = Mat::Zero(cache.logits.rows(), cache.logits.cols());
    double loss = penalty1_from_cache(cache, theta, region, 1.0, &dlogits);
    backward(params, cache, dlogits, *grads);
    return loss;
}

double penalty_bigram(const LmParams& params, const std::vector<int>& seq,
                      const PiiNGramSet& theta, LmParams* grads) {
    std::vector<int> ids;
    ids.push_back(1 /* bos */);
    ids.insert(ids.end(), seq.begin(), seq.end());
    ForwardCache cache;
    forward_cached(params, ids, cache);
    Region region{0, static_cast<Eigen::Index>(seq.size()) - 1};
    if (!grads) return penalty2_from_cache(cache, theta, region, 1.0, nullptr);
    Mat dlogits = Mat::Zero(cache.logits.rows(), cache.logits.cols());
    double loss = penalty2_from_cache(cache, theta, region, 1.0, &dlogits);
    backward(params, cache, dlogits, *grads);
    return loss;
}

LossBreakdown total_penalty_loss(const LmParams& params, const TrainItem& item,
                                 const PiiNGramSet& theta, const TrainConfig& cfg,
                                 LmParams* grads) {
    ForwardCache cache;
    forward_cached(params, item.ids, cache);
    Region ce_region = loss_region(item, cfg.loss_on_prompt);
    Region pen_region = loss_region(item, cfg.penalty_on_prompt);
    LossBreakdown out;
    Mat dlogits;
    Mat* dl = nullptr;
    if (grads) {
        dlogits = Mat::Zero(cache.logits.rows(), cache.logits.cols());
        dl = &dlogits;
    }
    out.l0 = ce_from_cache(cache, item, ce_region, dl);
    out.penalty1 = cfg.lambda_penalty *
                   penalty1_from_cache(cache, theta, pen_region, cfg.lambda_penalty, dl);
    out.penalty2 = cfg.lambda_penalty *
                   penalty2_from_cache(cache, theta, pen_region, cfg.lambda_penalty, dl);
    if (grads) backward(params, cache, dlogits, *grads);
    return out;
}

double dpo_loss(const LmParams& policy, const LmParams& reference, const DpoItem& item,
                double beta, LmParams* grads) {
    require(beta > 0.0, ErrorKind::Precondition, "dpo_loss: beta must be positive");
    auto build = [&](const std::vector<int>& completion) {
        std::vector<int> ids;
        ids.push_back(1 /* bos */);
        ids.insert(ids.end(), item.prompt_ids.begin(), item.prompt_ids.end());
        ids.insert(ids.end(), completion.begin(), completion.end());
        ids.push_back(2 /* eos */);
        return ids;
    };
    std::vector<int> w_ids = build(item.w_ids);
    std::vector<int> l_ids = build(item.l_ids);
    Eigen::Index first_row = static_cast<Eigen::Index>(item.prompt_ids.size());

    ForwardCache w_cache, l_cache;
    forward_cached(policy, w_ids, w_cache);
    forward_cached(policy, l_ids, l_cache);
    double lw_pi = sequence_logprob(w_cache, w_ids, first_row, nullptr, 0.0);
    double ll_pi = sequence_logprob(l_cache, l_ids, first_row, nullptr, 0.0);

    ForwardCache ref_cache;
    forward_cached(reference, w_ids, ref_cache);
    double lw_ref = sequence_logprob(ref_cache, w_ids, first_row, nullptr, 0.0);
    forward_cached(reference, l_ids, ref_cache);
    double ll_ref = sequence_logprob(ref_cache, l_ids, first_row, nullptr, 0.0);

    double u = beta * ((lw_pi - lw_ref) - (ll_pi - ll_ref));
    // -log sigmoid(u), stable form
    double loss = u >= 0.0 ? std::log1p(std::exp(-u)) : -u + std::log1p(std::exp(u));
    if (grads) {
        double sigma = 1.0 / (1.0 + std::exp(-u));
        double cw = beta * (sigma - 1.0);
        Mat dw = Mat::Zero(w_cache.logits.rows(), w_cache.logits.cols());
        sequence_logprob(w_cache, w_ids, first_row, &dw, cw);
        backward(policy, w_cache, dw, *grads);
        Mat dl = Mat::Zero(l_cache.logits.rows(), l_cache.logits.cols());
        sequence_logprob(l_cache, l_ids, first_row, &dl, -cw);
        backward(policy, l_cache, dl, *grads);
    }
    return loss;
}

// ---------------------------------------------------------------------------
// optimizer + loop

namespace {

class AdamW {
public:
    AdamW(const LmParams& params, double weight_decay)
        : m_(LmParams::zeros_like(params)), v_(LmParams::zeros_like(params)), wd_(weight_decay) {}

    void step(LmParams& params, const LmParams& grads, double lr) {
        ++t_;
        const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        double bc1 = 1.0 - std::pow(b1, static_cast<double>(t_));
        double bc2 = 1.0 - std::pow(b2, static_cast<double>(t_));

        std::vector<Mat*> ps, ms, vs;
        std::vector<const Mat*> gs;
        params.for_each_tensor([&](const std::string&, Mat& m) { ps.push_back(&m); });
        m_.for_each_tensor([&](const std::string&, Mat& m) { ms.push_back(&m); });
        v_.for_each_tensor([&](const std::string&, Mat& m) { vs.push_back(&m); });
        grads.for_each_tensor([&](const std::string&, const Mat& m) { gs.push_back(&m); });
        for (std::size_t i = 0; i < ps.size(); ++i) {
            Mat& p = *ps[i];
            Mat& m = *ms[i];
            Mat& v = *vs[i];
            const Mat& g = *gs[i];
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
            Mat mhat = m / bc1;
            Mat vhat = v / bc2;
            p -= lr * (mhat.array() / (vhat.array().sqrt() + eps)).matrix();
            if (wd_ > 0.0) p -= lr * wd_ * p;
        }
        params.quantize_f32();
        params.step = t_;
    }

private:
    LmParams m_, v_;
    double wd_;
    uint64_t t_ = 0;
};

// runs fn(i) for a wave of indices on cfg.threads workers; the caller
// merges the per-slot results in slot order so reductions stay fixed
template <typename Fn>
void run_wave(std::size_t begin, std::size_t end, int threads, Fn&& fn) {
    const std::size_t n = end - begin;
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = begin; i < end; ++i) fn(i, i - begin);
        return;
    }
    std::vector<std::thread> pool;
    std::size_t per = (n + static_cast<std::size_t>(threads) - 1) / static_cast<std::size_t>(threads);
    for (int w = 0; w < threads; ++w) {
        std::size_t lo = begin + static_cast<std::size_t>(w) * per;
        std::size_t hi = std::min(end, lo + per);
        if (lo >= hi) break;
        pool.emplace_back([&, lo, hi, begin] {
            for (std::size_t i = lo; i < hi; ++i) fn(i, i - begin);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace

void TrainLog::save_csv(const std::string& path) const {
    std::ostringstream out;
    out << "step,epoch,lr,l0,penalty1,penalty2,dpo,total\n";
    for (const auto& r : rows) {
        out << r.step << ',' << r.epoch << ',' << r.lr << ',' << r.l0 << ',' << r.penalty1
            << ',' << r.penalty2 << ',' << r.dpo << ',' << r.total << '\n';
    }
    write_text_file(path, out.str());
}

TrainLog train(LmParams& params, const std::vector<TrainItem>& items, const PiiNGramSet* theta,
               const TrainConfig& cfg, const StepCallback& callback) {
    cfg.validate();
    require(!items.empty(), ErrorKind::Precondition, "train: dataset is empty");
    require(cfg.mode != LossMode::Dpo, ErrorKind::Precondition,
            "train: use train_dpo for preference pairs");
    if (cfg.mode == LossMode::Penalty) {
        require(theta != nullptr, ErrorKind::Precondition,
                "train: penalty mode needs the PII n-gram sets");
    }

    AdamW opt(params, cfg.weight_decay);
    TrainLog log;
    Rng shuffle_rng(cfg.seed ^ 0x747261696eull);
    std::vector<std::size_t> order(items.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    // per-slot gradient buffers reused across waves
    const int wave = cfg.threads;
    std::vector<LmParams> slot_grads;
    for (int i = 0; i < wave; ++i) slot_grads.push_back(LmParams::zeros_like(params));
    std::vector<LossBreakdown> slot_losses(static_cast<std::size_t>(wave));

    LmParams batch_grads = LmParams::zeros_like(params);
    uint64_t step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double lr = cfg.lr * std::pow(cfg.gamma, static_cast<double>(epoch));
        shuffle_rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            batch_grads.zero();
            LossBreakdown batch_loss;
            for (std::size_t wave_begin = start; wave_begin < stop;
                 wave_begin += static_cast<std::size_t>(wave)) {
                std::size_t wave_end = std::min(stop, wave_begin + static_cast<std::size_t>(wave));
                for (std::size_t s = 0; s < wave_end - wave_begin; ++s) {
                    slot_grads[s].zero();
                    slot_losses[s] = LossBreakdown{};
                }
                run_wave(wave_begin, wave_end, cfg.threads, [&](std::size_t i, std::size_t slot) {
                    const TrainItem& item = items[order[i]];
                    if (cfg.mode == LossMode::Penalty) {
                        slot_losses[slot] =
                            total_penalty_loss(params, item, *theta, cfg, &slot_grads[slot]);
                    } else {
                        slot_losses[slot].l0 = cross_entropy_loss(params, item, cfg.loss_on_prompt,
                                                                  &slot_grads[slot]);
                    }
                });
                for (std::size_t s = 0; s < wave_end - wave_begin; ++s) {
                    batch_grads.add_scaled(slot_grads[s], 1.0);
                    batch_loss.l0 += slot_losses[s].l0;
                    batch_loss.penalty1 += slot_losses[s].penalty1;
                    batch_loss.penalty2 += slot_losses[s].penalty2;
                }
            }
            const double inv_b = 1.0 / static_cast<double>(stop - start);
            batch_grads.scale(inv_b);
            batch_loss.l0 *= inv_b;
            batch_loss.penalty1 *= inv_b;
            batch_loss.penalty2 *= inv_b;

            if (!std::isfinite(batch_loss.total())) {
                fail(ErrorKind::Divergence,
                     "training diverged (non-finite loss) at step " + std::to_string(step + 1));
            }
            opt.step(params, batch_grads, lr);
            ++step;
            if (!params.all_finite()) {
                fail(ErrorKind::Divergence,
                     "training diverged (non-finite parameters) at step " + std::to_string(step));
            }
            log.rows.push_back({step, epoch, lr, batch_loss.l0, batch_loss.penalty1,
                                batch_loss.penalty2, 0.0, batch_loss.total()});
            if (callback) callback(step, params);
        }
    }
    return log;
}

TrainLog train_dpo(LmParams& params, const LmParams& reference, const std::vector<DpoItem>& items,
                   const TrainConfig& cfg, const DpoConfig& dpo, const StepCallback& callback) {
    cfg.validate();
    dpo.validate();
    require(!items.empty(), ErrorKind::Precondition, "train_dpo: no preference pairs");

    AdamW opt(params, cfg.weight_decay);
    TrainLog log;
    Rng shuffle_rng(cfg.seed ^ 0x64706full);
    std::vector<std::size_t> order(items.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    const int wave = cfg.threads;
    std::vector<LmParams> slot_grads;
    for (int i = 0; i < wave; ++i) slot_grads.push_back(LmParams::zeros_like(params));
    std::vector<double> slot_losses(static_cast<std::size_t>(wave));
    LmParams batch_grads = LmParams::zeros_like(params);

    uint64_t step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double lr = cfg.lr * std::pow(cfg.gamma, static_cast<double>(epoch));
        shuffle_rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            batch_grads.zero();
            double loss_sum = 0.0;
            for (std::size_t wave_begin = start; wave_begin < stop;
                 wave_begin += static_cast<std::size_t>(wave)) {
                std::size_t wave_end = std::min(stop, wave_begin + static_cast<std::size_t>(wave));
                for (std::size_t s = 0; s < wave_end - wave_begin; ++s) {
                    slot_grads[s].zero();
                    slot_losses[s] = 0.0;
                }
                run_wave(wave_begin, wave_end, cfg.threads, [&](std::size_t i, std::size_t slot) {
                    slot_losses[slot] =
                        dpo_loss(params, reference, items[order[i]], dpo.beta, &slot_grads[slot]);
                });
                for (std::size_t s = 0; s < wave_end - wave_begin; ++s) {
                    batch_grads.add_scaled(slot_grads[s], 1.0);
                    loss_sum += slot_losses[s];
                }
            }
            const double inv_b = 1.0 / static_cast<double>(stop - start);
            batch_grads.scale(inv_b);
            double loss = loss_sum * inv_b;
            if (!std::isfinite(loss)) {
                fail(ErrorKind::Divergence,
                     "dpo training diverged (non-finite loss) at step " + std::to_string(step + 1));
            }
            opt.step(params, batch_grads, lr);
            ++step;
            if (!params.all_finite()) {
                fail(ErrorKind::Divergence,
                     "dpo training diverged (non-finite parameters) at step " + std::to_string(step));
            }
            log.rows.push_back({step, epoch, lr, 0.0, 0.0, 0.0, loss, loss});
            if (callback) callback(step, params);
        }
    }
    return log;
}

GradCheckResult grad_check(const LmParams& params, const LossFn& loss_fn, double epsilon,
                           int stride) {
    require(epsilon > 0.0, ErrorKind::Precondition, "grad_check: epsilon must be positive");
    require(stride >= 1, ErrorKind::Precondition, "grad_check: stride must be >= 1");
    LmParams grads = LmParams::zeros_like(params);
    loss_fn(params, &grads);

    GradCheckResult result;
    LmParams work = params;

    std::vector<std::pair<std::string, Mat*>> work_tensors;
    work.for_each_tensor([&](const std::string& name, Mat& m) {
        work_tensors.emplace_back(name, &m);
    });
    std::vector<const Mat*> grad_tensors;
    grads.for_each_tensor([&](const std::string&, const Mat& m) { grad_tensors.push_back(&m); });

    for (std::size_t ti = 0; ti < work_tensors.size(); ++ti) {
        Mat& tensor = *work_tensors[ti].second;
        const Mat& analytic = *grad_tensors[ti];
        for (Eigen::Index i = 0; i < tensor.size(); i += stride) {
            double saved = tensor.data()[i];
            double h = epsilon * std::max(1.0, std::abs(saved));
            tensor.data()[i] = saved + h;
            double up = loss_fn(work, nullptr);
            tensor.data()[i] = saved - h;
            double down = loss_fn(work, nullptr);
            tensor.data()[i] = saved;
            double fd = (up - down) / (2.0 * h);
            double an = analytic.data()[i];
            double err = std::abs(fd - an) / std::max(1e-6, std::abs(fd) + std::abs(an));
            if (err > result.max_rel_error) {
                result.max_rel_error = err;
                result.worst_tensor = work_tensors[ti].first;
            }
            ++result.checked;
        }
    }
    return result;
}

}  // namespace privlm

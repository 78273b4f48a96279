#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "privlm/common.hpp"
#include "privlm/model.hpp"
#include "privlm/train.hpp"

using namespace privlm;

namespace {

ModelConfig tiny_config(int vocab, uint64_t seed = 3, int width = 16) {
    ModelConfig cfg;
    cfg.layers = 2;
    cfg.heads = 2;
    cfg.width = width;
    cfg.context = 48;
    cfg.vocab = vocab;
    cfg.seed = seed;
    return cfg;
}

TrainItem item_from_ids(std::vector<int> ids, int completion_begin) {
    TrainItem item;
    item.ids = std::move(ids);
    item.completion_begin = completion_begin;
    return item;
}

// independent per-position summation over the same logits, long double
double ce_oracle(const LmParams& params, const TrainItem& item, bool on_prompt) {
    ForwardCache cache;
    forward_cached(params, item.ids, cache);
    long double total = 0.0;
    Eigen::Index first = on_prompt ? 0 : item.completion_begin - 1;
    Eigen::Index last = static_cast<Eigen::Index>(item.ids.size()) - 2;
    for (Eigen::Index t = first; t <= last; ++t) {
        long double z = 0.0;
        for (Eigen::Index j = 0; j < cache.logits.cols(); ++j) {
            z += std::exp(static_cast<long double>(cache.logits(t, j)));
        }
        int target = item.ids[static_cast<std::size_t>(t) + 1];
        long double p = std::exp(static_cast<long double>(cache.logits(t, target))) / z;
        total += -std::log(p);
    }
    return static_cast<double>(total / static_cast<long double>(last - first + 1));
}

std::vector<long double> probs_at(const Mat& logits, Eigen::Index row) {
    std::vector<long double> p(static_cast<std::size_t>(logits.cols()));
    long double z = 0.0;
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
        p[static_cast<std::size_t>(j)] = std::exp(static_cast<long double>(logits(row, j)));
        z += p[static_cast<std::size_t>(j)];
    }
    for (auto& v : p) v /= z;
    return p;
}

}  // namespace

TEST_CASE("a model that is certain of every target has zero loss") {
    ModelConfig cfg = tiny_config(4);
    LmParams params = LmParams::init(cfg);
    // rig the head bias so token 3 always gets probability ~1
    params.b_head.setZero();
    params.b_head(0, 3) = 200.0;
    params.w_head.setZero();
    TrainItem item = item_from_ids({1, 3, 3, 3, 3}, 1);
    double loss = cross_entropy_loss(params, item, false);
    CHECK(loss <= 1e-12);
}

TEST_CASE("the uniform model scores ln V elementwise") {
    ModelConfig cfg = tiny_config(11);
    LmParams params = LmParams::init(cfg);
    params.zero();
    TrainItem item = item_from_ids({1, 4, 7, 2, 9, 5}, 1);
    double loss = cross_entropy_loss(params, item, false);
    CHECK(loss == doctest::Approx(std::log(11.0)).epsilon(1e-12));
}

TEST_CASE("cross entropy matches the independent summation oracle") {
    ModelConfig cfg = tiny_config(11);
    LmParams params = LmParams::init(cfg);
    TrainItem item = item_from_ids({1, 4, 7, 2, 9, 5}, 2);
    CHECK(cross_entropy_loss(params, item, false) ==
          doctest::Approx(ce_oracle(params, item, false)).epsilon(1e-9));
    CHECK(cross_entropy_loss(params, item, true) ==
          doctest::Approx(ce_oracle(params, item, true)).epsilon(1e-9));
}

TEST_CASE("empty completion is rejected") {
    Tokenizer tok = Tokenizer::build({"alpha"});
    CHECK_THROWS_AS(make_train_item("prompt text", "", tok, 48), Error);
}

TEST_CASE("unigram penalty: empty set and full-vocabulary anchors") {
    ModelConfig cfg = tiny_config(6);
    LmParams params = LmParams::init(cfg);
    std::vector<int> seq = {3, 4, 5};
    PiiNGramSet empty;
    CHECK(penalty_unigram(params, seq, empty) == 0.0);

    PiiNGramSet full;
    for (int v = 0; v < 6; ++v) full.unigrams.insert(v);
    CHECK(penalty_unigram(params, seq, full) ==
          doctest::Approx(static_cast<double>(seq.size())).epsilon(1e-9));
}

TEST_CASE("unigram penalty matches direct probability summation") {
    ModelConfig cfg = tiny_config(6);
    LmParams params = LmParams::init(cfg);
    std::vector<int> seq = {3, 4, 5};
    PiiNGramSet theta;
    theta.unigrams = {2, 5};

    std::vector<int> ids = {1, 3, 4, 5};
    ForwardCache cache;
    forward_cached(params, ids, cache);
    long double expected = 0.0;
    for (Eigen::Index t = 0; t < 3; ++t) {
        auto p = probs_at(cache.logits, t);
        expected += p[2] + p[5];
    }
    CHECK(penalty_unigram(params, seq, theta) ==
          doctest::Approx(static_cast<double>(expected)).epsilon(1e-9));
}

TEST_CASE("bigram penalty: empty set and single-token sequences give zero") {
    ModelConfig cfg = tiny_config(6);
    LmParams params = LmParams::init(cfg);
    PiiNGramSet empty;
    CHECK(penalty_bigram(params, {3, 4}, empty) == 0.0);

    PiiNGramSet theta;
    theta.bigrams = {{2, 3}};
    CHECK(penalty_bigram(params, {3}, theta) == 0.0);
}

TEST_CASE("bigram penalty matches the brute-force product-sum oracle") {
    ModelConfig cfg = tiny_config(6);
    LmParams params = LmParams::init(cfg);
    std::vector<int> seq = {3, 1, 4, 2};
    PiiNGramSet theta;
    theta.bigrams = {{2, 3}, {5, 5}, {0, 4}};

    std::vector<int> ids = {1, 3, 1, 4, 2};
    ForwardCache cache;
    forward_cached(params, ids, cache);
    long double expected = 0.0;
    for (Eigen::Index t = 0; t + 1 < 4; ++t) {
        auto pa = probs_at(cache.logits, t);
        auto pb = probs_at(cache.logits, t + 1);
        for (const auto& [a, b] : theta.bigrams) {
            expected += pa[static_cast<std::size_t>(a)] * pb[static_cast<std::size_t>(b)];
        }
    }
    CHECK(penalty_bigram(params, seq, theta) ==
          doctest::Approx(static_cast<double>(expected)).epsilon(1e-9));
}

TEST_CASE("the cumulative loss is the exact sum of its parts") {
    ModelConfig cfg = tiny_config(8);
    LmParams params = LmParams::init(cfg);
    TrainItem item = item_from_ids({1, 4, 6, 3, 7, 2}, 2);
    TrainConfig tc;
    tc.mode = LossMode::Penalty;

    PiiNGramSet empty;
    LossBreakdown no_theta = total_penalty_loss(params, item, empty, tc);
    CHECK(no_theta.penalty1 == 0.0);
    CHECK(no_theta.penalty2 == 0.0);
    CHECK(no_theta.total() == cross_entropy_loss(params, item, false));

    PiiNGramSet theta;
    theta.unigrams = {4, 7};
    theta.bigrams = {{4, 7}, {6, 3}};
    LossBreakdown full = total_penalty_loss(params, item, theta, tc);
    CHECK(full.total() == doctest::Approx(full.l0 + full.penalty1 + full.penalty2).epsilon(1e-15));
    CHECK(full.l0 == doctest::Approx(no_theta.l0).epsilon(1e-12));
    CHECK(full.penalty1 > 0.0);
    CHECK(full.penalty2 > 0.0);

    // direct oracle over the completion rows
    ForwardCache cache;
    forward_cached(params, item.ids, cache);
    long double p1 = 0.0, p2 = 0.0;
    for (Eigen::Index t = 1; t <= 4; ++t) {  // rows scoring positions 2..5
        auto p = probs_at(cache.logits, t);
        p1 += p[4] + p[7];
    }
    for (Eigen::Index t = 1; t < 4; ++t) {
        auto pa = probs_at(cache.logits, t);
        auto pb = probs_at(cache.logits, t + 1);
        p2 += pa[4] * pb[7] + pa[6] * pb[3];
    }
    CHECK(full.penalty1 == doctest::Approx(static_cast<double>(p1)).epsilon(1e-9));
    CHECK(full.penalty2 == doctest::Approx(static_cast<double>(p2)).epsilon(1e-9));
}

TEST_CASE("penalties ignore the targets they are paired with") {
    ModelConfig cfg = tiny_config(8);
    LmParams params = LmParams::init(cfg);
    TrainConfig tc;
    tc.mode = LossMode::Penalty;
    PiiNGramSet theta;
    theta.unigrams = {4, 7};
    theta.bigrams = {{4, 7}};

    TrainItem a = item_from_ids({1, 4, 6, 3, 7, 2}, 2);
    TrainItem b = a;
    b.ids.back() = 5;  // the final target conditions nothing
    LossBreakdown la = total_penalty_loss(params, a, theta, tc);
    LossBreakdown lb = total_penalty_loss(params, b, theta, tc);
    CHECK(la.penalty1 == lb.penalty1);
    CHECK(la.penalty2 == lb.penalty2);
    CHECK(la.l0 != lb.l0);
}

TEST_CASE("losses are finite and non-negative") {
    ModelConfig cfg = tiny_config(9);
    LmParams params = LmParams::init(cfg);
    TrainItem item = item_from_ids({1, 3, 5, 7, 2}, 1);
    PiiNGramSet theta;
    theta.unigrams = {3, 8};
    theta.bigrams = {{3, 8}};
    TrainConfig tc;
    tc.mode = LossMode::Penalty;
    LossBreakdown l = total_penalty_loss(params, item, theta, tc);
    CHECK(std::isfinite(l.total()));
    CHECK(l.l0 >= 0.0);
    CHECK(l.penalty1 >= 0.0);
    CHECK(l.penalty2 >= 0.0);
}

TEST_CASE("dpo at the reference point is ln 2") {
    ModelConfig cfg = tiny_config(12);
    LmParams params = LmParams::init(cfg);
    DpoItem item;
    item.prompt_ids = {4, 5};
    item.w_ids = {6, 7};
    item.l_ids = {8};
    double loss = dpo_loss(params, params, item, 0.1);
    CHECK(loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("dpo tends to ln 2 as beta vanishes") {
    ModelConfig cfg = tiny_config(12);
    LmParams policy = LmParams::init(cfg);
    ModelConfig cfg2 = tiny_config(12, 99);
    LmParams reference = LmParams::init(cfg2);
    DpoItem item;
    item.prompt_ids = {4};
    item.w_ids = {6, 7};
    item.l_ids = {8, 9};
    double loss = dpo_loss(policy, reference, item, 1e-9);
    CHECK(loss == doctest::Approx(std::log(2.0)).epsilon(1e-6));
}

TEST_CASE("dpo matches the scalar oracle from summed token log-probs") {
    ModelConfig cfg = tiny_config(12);
    LmParams policy = LmParams::init(cfg);
    LmParams reference = LmParams::init(tiny_config(12, 99));
    DpoItem item;
    item.prompt_ids = {4, 10};
    item.w_ids = {6, 7, 3};
    item.l_ids = {8, 9};
    const double beta = 0.1;

    auto seq_logprob = [](const LmParams& model, const std::vector<int>& prompt,
                          const std::vector<int>& completion) {
        std::vector<int> ids = {1};
        ids.insert(ids.end(), prompt.begin(), prompt.end());
        ids.insert(ids.end(), completion.begin(), completion.end());
        ids.push_back(2);
        ForwardResult out = forward(model, ids);
        long double total = 0.0;
        for (std::size_t t = prompt.size(); t + 1 < ids.size(); ++t) {
            total += out.log_probs(static_cast<Eigen::Index>(t), ids[t + 1]);
        }
        return static_cast<double>(total);
    };
    double dw = seq_logprob(policy, item.prompt_ids, item.w_ids) -
                seq_logprob(reference, item.prompt_ids, item.w_ids);
    double dl = seq_logprob(policy, item.prompt_ids, item.l_ids) -
                seq_logprob(reference, item.prompt_ids, item.l_ids);
    double u = beta * (dw - dl);
    double expected = -std::log(1.0 / (1.0 + std::exp(-u)));
    CHECK(dpo_loss(policy, reference, item, beta) == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("dpo strictly decreases when the preferred completion gains mass") {
    ModelConfig cfg = tiny_config(12);
    LmParams policy = LmParams::init(cfg);
    LmParams reference = policy;
    DpoItem item;
    item.prompt_ids = {4};
    item.w_ids = {6};
    item.l_ids = {8};
    double before = dpo_loss(policy, reference, item, 0.5);
    policy.b_head(0, 6) += 0.5;  // nudge the preferred token's logit
    double after = dpo_loss(policy, reference, item, 0.5);
    CHECK(after < before);
}

TEST_CASE("five epochs over 64 records with batch 64 is five steps") {
    ModelConfig cfg = tiny_config(10);
    LmParams params = LmParams::init(cfg);
    std::vector<TrainItem> items;
    Rng rng(1);
    for (int i = 0; i < 64; ++i) {
        items.push_back(item_from_ids({1, rng.uniform_int(3, 9), rng.uniform_int(3, 9), 2}, 1));
    }
    TrainConfig tc;  // reference defaults: 5 epochs, batch 64, lr 1e-4, gamma 0.85
    tc.threads = 2;
    TrainLog log = train(params, items, nullptr, tc);
    REQUIRE(log.rows.size() == 5);
    for (int e = 0; e < 5; ++e) {
        CHECK(log.rows[static_cast<std::size_t>(e)].lr ==
              doctest::Approx(1e-4 * std::pow(0.85, e)).epsilon(1e-12));
        CHECK(log.rows[static_cast<std::size_t>(e)].epoch == e);
    }
}

TEST_CASE("training is deterministic and thread-count independent") {
    auto run = [&](int threads) {
        ModelConfig cfg = tiny_config(10);
        LmParams params = LmParams::init(cfg);
        std::vector<TrainItem> items;
        Rng rng(5);
        for (int i = 0; i < 12; ++i) {
            items.push_back(
                item_from_ids({1, rng.uniform_int(3, 9), rng.uniform_int(3, 9), 2}, 1));
        }
        TrainConfig tc;
        tc.epochs = 3;
        tc.batch_size = 4;
        tc.lr = 1e-3;
        tc.seed = 11;
        tc.threads = threads;
        train(params, items, nullptr, tc);
        return params.checksum();
    };
    uint64_t one = run(1);
    uint64_t two = run(2);
    CHECK(one == two);
    CHECK(one == run(1));
}

TEST_CASE("eight records overfit to near-zero loss in 300 steps") {
    ModelConfig cfg = tiny_config(40, 17, 32);
    LmParams params = LmParams::init(cfg);
    std::vector<TrainItem> items;
    Rng rng(2);
    for (int i = 0; i < 8; ++i) {
        std::vector<int> ids = {1};
        for (int t = 0; t < 8; ++t) ids.push_back(10 + rng.uniform_int(0, 25));
        ids.push_back(2);
        items.push_back(item_from_ids(std::move(ids), 3));
    }
    TrainConfig tc;
    tc.epochs = 300;  // batch of 8 -> one step per epoch
    tc.batch_size = 8;
    tc.lr = 3e-3;
    tc.gamma = 1.0;
    tc.seed = 4;
    tc.threads = 2;
    TrainLog log = train(params, items, nullptr, tc);
    REQUIRE(log.rows.size() == 300);
    CHECK(log.rows.back().l0 <= 0.05);
}

TEST_CASE("divergence aborts with the step number") {
    ModelConfig cfg = tiny_config(10);
    LmParams params = LmParams::init(cfg);
    std::vector<TrainItem> items = {item_from_ids({1, 5, 6, 2}, 1)};
    TrainConfig tc;
    tc.epochs = 30;
    tc.batch_size = 1;
    tc.lr = 1e300;  // parameters overflow f32 on the first update
    tc.gamma = 1.0;
    try {
        train(params, items, nullptr, tc);
        FAIL("expected divergence");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Divergence);
        CHECK(std::string(e.what()).find("step") != std::string::npos);
    }
}

TEST_CASE("the frozen dpo reference never changes") {
    ModelConfig cfg = tiny_config(12);
    LmParams policy = LmParams::init(cfg);
    LmParams reference = policy;
    uint64_t before = reference.checksum();
    std::vector<DpoItem> items;
    for (int i = 0; i < 4; ++i) {
        DpoItem item;
        item.prompt_ids = {4, static_cast<int>(5 + i)};
        item.w_ids = {6, 7};
        item.l_ids = {8, 9};
        items.push_back(item);
    }
    TrainConfig tc;
    tc.epochs = 3;
    tc.batch_size = 2;
    tc.lr = 1e-3;
    DpoConfig dc;
    dc.beta = 0.1;
    TrainLog log = train_dpo(policy, reference, items, tc, dc);
    CHECK(reference.checksum() == before);
    CHECK(policy.checksum() != before);
    CHECK(log.rows.size() == 6);
}

TEST_CASE("gradient check: linear loss is exact to 1e-7") {
    ModelConfig cfg = tiny_config(6);
    LmParams params = LmParams::init(cfg);
    LossFn linear = [](const LmParams& p, LmParams* grads) {
        double total = 0.0;
        double coeff = 0.5;
        p.for_each_tensor([&](const std::string&, const Mat& m) {
            total += coeff * m.sum();
            coeff += 0.25;
        });
        if (grads) {
            double c = 0.5;
            grads->for_each_tensor([&](const std::string&, Mat& g) {
                g.array() += c;
                c += 0.25;
            });
        }
        return total;
    };
    GradCheckResult r = grad_check(params, linear, 1e-5, 7);
    CHECK(r.max_rel_error <= 1e-7);
}

TEST_CASE("gradient check: cross entropy on a width-16 model") {
    ModelConfig cfg = tiny_config(13);
    LmParams params = LmParams::init(cfg);
    TrainItem item = item_from_ids({1, 4, 7, 2, 9, 5, 11}, 2);
    LossFn ce = [&](const LmParams& p, LmParams* grads) {
        return cross_entropy_loss(p, item, false, grads);
    };
    GradCheckResult r = grad_check(params, ce, 1e-5, 5);
    CAPTURE(r.worst_tensor);
    CHECK(r.max_rel_error <= 1e-3);
}

TEST_CASE("gradient check: penalty and dpo losses") {
    ModelConfig cfg = tiny_config(13);
    LmParams params = LmParams::init(cfg);
    TrainItem item = item_from_ids({1, 4, 7, 2, 9, 5}, 2);
    PiiNGramSet theta;
    theta.unigrams = {4, 9, 11};
    theta.bigrams = {{4, 9}, {11, 4}};
    TrainConfig tc;
    tc.mode = LossMode::Penalty;
    tc.lambda_penalty = 1.0;
    LossFn penalty = [&](const LmParams& p, LmParams* grads) {
        return total_penalty_loss(p, item, theta, tc, grads).total();
    };
    GradCheckResult rp = grad_check(params, penalty, 1e-5, 5);
    CAPTURE(rp.worst_tensor);
    CHECK(rp.max_rel_error <= 1e-3);

    LmParams reference = LmParams::init(tiny_config(13, 123));
    DpoItem pair;
    pair.prompt_ids = {4, 10};
    pair.w_ids = {6, 7};
    pair.l_ids = {8, 9, 3};
    LossFn dpo = [&](const LmParams& p, LmParams* grads) {
        return dpo_loss(p, reference, pair, 0.1, grads);
    };
    GradCheckResult rd = grad_check(params, dpo, 1e-5, 5);
    CAPTURE(rd.worst_tensor);
    CHECK(rd.max_rel_error <= 1e-3);
}

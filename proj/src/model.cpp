#include "privlm/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "privlm/common.hpp"

namespace privlm {

using nlohmann::json;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

namespace {
constexpr double kLnEps = 1e-5;
constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }
double gelu_grad(double x) {
    return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

// y = xhat * g + b per row; caches xhat and rstd
void layernorm_forward(const Mat& x, const Mat& g, const Mat& b, Mat& y, Mat& xhat,
                       VectorXd& rstd) {
    const auto rows = x.rows();
    const auto cols = x.cols();
    y.resize(rows, cols);
    xhat.resize(rows, cols);
    rstd.resize(rows);
    for (Eigen::Index r = 0; r < rows; ++r) {
        double mu = x.row(r).mean();
        double var = (x.row(r).array() - mu).square().mean();
        double rs = 1.0 / std::sqrt(var + kLnEps);
        rstd(r) = rs;
        xhat.row(r) = (x.row(r).array() - mu) * rs;
        y.row(r) = xhat.row(r).cwiseProduct(g.row(0)) + b.row(0);
    }
}

void layernorm_backward(const Mat& dy, const Mat& xhat, const VectorXd& rstd, const Mat& g,
                        Mat& dx, Mat& dg, Mat& db) {
    const auto rows = dy.rows();
    const auto cols = dy.cols();
    dx.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        RowVectorXd dxhat = dy.row(r).cwiseProduct(g.row(0));
        double m1 = dxhat.mean();
        double m2 = dxhat.cwiseProduct(xhat.row(r)).mean();
        dx.row(r) =
            rstd(r) * (dxhat.array() - m1 - xhat.row(r).array() * m2).matrix();
        dg.row(0) += dy.row(r).cwiseProduct(xhat.row(r));
        db.row(0) += dy.row(r);
    }
}

}  // namespace

void ModelConfig::validate() const {
    require(layers >= 1 && heads >= 1 && width >= heads, ErrorKind::Config,
            "model config: layers/heads/width must be positive");
    require(width % heads == 0, ErrorKind::Config, "model config: width must divide by heads");
    require(context >= 1, ErrorKind::Config, "model config: context must be positive");
    require(vocab >= 1, ErrorKind::Config, "model config: vocab must be set");
    require(mlp_mult >= 1, ErrorKind::Config, "model config: mlp_mult must be positive");
}

LmParams LmParams::init(const ModelConfig& config) {
    config.validate();
    LmParams p;
    p.config = config;
    const int d = config.width;
    const int h = config.mlp_mult * d;
    Rng rng(config.seed ^ 0x6d6f64656cull);
    auto randn = [&](Eigen::Index rows, Eigen::Index cols) {
        Mat m(rows, cols);
        for (Eigen::Index i = 0; i < rows; ++i) {
            for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal(0.0, 0.02);
        }
        return m;
    };
    p.tok_emb = randn(config.vocab, d);
    p.pos_emb = randn(config.context, d);
    p.layers.resize(static_cast<std::size_t>(config.layers));
    for (auto& lp : p.layers) {
        lp.ln1_g = Mat::Ones(1, d);
        lp.ln1_b = Mat::Zero(1, d);
        lp.wq = randn(d, d); lp.bq = Mat::Zero(1, d);
        lp.wk = randn(d, d); lp.bk = Mat::Zero(1, d);
        lp.wv = randn(d, d); lp.bv = Mat::Zero(1, d);
        lp.wo = randn(d, d); lp.bo = Mat::Zero(1, d);
        lp.ln2_g = Mat::Ones(1, d);
        lp.ln2_b = Mat::Zero(1, d);
        lp.w1 = randn(d, h); lp.b1 = Mat::Zero(1, h);
        lp.w2 = randn(h, d); lp.b2 = Mat::Zero(1, d);
    }
    p.lnf_g = Mat::Ones(1, d);
    p.lnf_b = Mat::Zero(1, d);
    p.w_head = randn(d, config.vocab);
    p.b_head = Mat::Zero(1, config.vocab);
    p.quantize_f32();
    return p;
}

LmParams LmParams::zeros_like(const LmParams& other) {
    LmParams p;
    p.config = other.config;
    p.tok_emb = Mat::Zero(other.tok_emb.rows(), other.tok_emb.cols());
    p.pos_emb = Mat::Zero(other.pos_emb.rows(), other.pos_emb.cols());
    p.layers.resize(other.layers.size());
    for (std::size_t l = 0; l < other.layers.size(); ++l) {
        const LayerParams& o = other.layers[l];
        LayerParams& n = p.layers[l];
        auto z = [](const Mat& m) { return Mat::Zero(m.rows(), m.cols()).eval(); };
        n.ln1_g = z(o.ln1_g); n.ln1_b = z(o.ln1_b);
        n.wq = z(o.wq); n.bq = z(o.bq);
        n.wk = z(o.wk); n.bk = z(o.bk);
        n.wv = z(o.wv); n.bv = z(o.bv);
        n.wo = z(o.wo); n.bo = z(o.bo);
        n.ln2_g = z(o.ln2_g); n.ln2_b = z(o.ln2_b);
        n.w1 = z(o.w1); n.b1 = z(o.b1);
        n.w2 = z(o.w2); n.b2 = z(o.b2);
    }
    p.lnf_g = Mat::Zero(1, other.config.width);
    p.lnf_b = Mat::Zero(1, other.config.width);
    p.w_head = Mat::Zero(other.w_head.rows(), other.w_head.cols());
    p.b_head = Mat::Zero(1, other.b_head.cols());
    return p;
}

std::size_t LmParams::num_params() const {
    std::size_t n = 0;
    for_each_tensor([&](const std::string&, const Mat& m) {
        n += static_cast<std::size_t>(m.size());
    });
    return n;
}

void LmParams::zero() {
    for_each_tensor([](const std::string&, Mat& m) { m.setZero(); });
}

void LmParams::scale(double alpha) {
    for_each_tensor([&](const std::string&, Mat& m) { m *= alpha; });
}

void LmParams::add_scaled(const LmParams& other, double alpha) {
    std::vector<Mat*> mine;
    for_each_tensor([&](const std::string&, Mat& m) { mine.push_back(&m); });
    std::vector<const Mat*> theirs;
    other.for_each_tensor([&](const std::string&, const Mat& m) { theirs.push_back(&m); });
    require(mine.size() == theirs.size(), ErrorKind::Precondition,
            "add_scaled: parameter shape mismatch");
    for (std::size_t i = 0; i < mine.size(); ++i) {
        *mine[i] += alpha * (*theirs[i]);
    }
}

void LmParams::quantize_f32() {
    for_each_tensor([](const std::string&, Mat& m) {
        double* data = m.data();
        for (Eigen::Index i = 0; i < m.size(); ++i) {
            data[i] = static_cast<double>(static_cast<float>(data[i]));
        }
    });
}

uint64_t LmParams::checksum() const {
    Fnv64 h;
    for_each_tensor([&](const std::string& name, const Mat& m) {
        h.update_str(name);
        for (Eigen::Index i = 0; i < m.size(); ++i) {
            float f = static_cast<float>(m.data()[i]);
            h.update(&f, sizeof f);
        }
    });
    return h.digest();
}

bool LmParams::all_finite() const {
    bool ok = true;
    for_each_tensor([&](const std::string&, const Mat& m) {
        if (!m.allFinite()) ok = false;
    });
    return ok;
}

Mat log_softmax_rows(const Mat& logits) {
    Mat out(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        double mx = logits.row(r).maxCoeff();
        RowVectorXd shifted = logits.row(r).array() - mx;
        double lse = std::log(shifted.array().exp().sum());
        out.row(r) = shifted.array() - lse;
    }
    return out;
}

RowVectorXd softmax_row(const RowVectorXd& logits) {
    double mx = logits.maxCoeff();
    RowVectorXd e = (logits.array() - mx).exp();
    return e / e.sum();
}

void forward_cached(const LmParams& params, const std::vector<int>& ids, ForwardCache& cache) {
    const ModelConfig& cfg = params.config;
    const auto len = static_cast<Eigen::Index>(ids.size());
    require(len >= 1, ErrorKind::Precondition, "forward: empty input");
    require(len <= cfg.context, ErrorKind::Precondition,
            "forward: input of length " + std::to_string(ids.size()) +
                " exceeds context " + std::to_string(cfg.context));
    const int d = cfg.width;
    const int nh = cfg.heads;
    const int dh = cfg.head_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    cache.ids = ids;
    cache.layers.assign(static_cast<std::size_t>(cfg.layers), LayerCache{});

    Mat x(len, d);
    for (Eigen::Index t = 0; t < len; ++t) {
        int id = ids[static_cast<std::size_t>(t)];
        require(id >= 0 && id < cfg.vocab, ErrorKind::Precondition,
                "forward: token id out of vocabulary");
        x.row(t) = params.tok_emb.row(id) + params.pos_emb.row(t);
    }

    for (int l = 0; l < cfg.layers; ++l) {
        const LayerParams& lp = params.layers[static_cast<std::size_t>(l)];
        LayerCache& lc = cache.layers[static_cast<std::size_t>(l)];
        lc.x_in = x;

        Mat ln1;
        layernorm_forward(lc.x_in, lp.ln1_g, lp.ln1_b, ln1, lc.ln1_xhat, lc.ln1_rstd);
        lc.q = (ln1 * lp.wq).rowwise() + lp.bq.row(0);
        lc.k = (ln1 * lp.wk).rowwise() + lp.bk.row(0);
        lc.v = (ln1 * lp.wv).rowwise() + lp.bv.row(0);

        lc.att.assign(static_cast<std::size_t>(nh), Mat());
        lc.att_mix.resize(len, d);
        for (int h = 0; h < nh; ++h) {
            auto qh = lc.q.middleCols(h * dh, dh);
            auto kh = lc.k.middleCols(h * dh, dh);
            auto vh = lc.v.middleCols(h * dh, dh);
            Mat scores = (qh * kh.transpose()) * scale;
            Mat& a = lc.att[static_cast<std::size_t>(h)];
            a = Mat::Zero(len, len);
            for (Eigen::Index r = 0; r < len; ++r) {
                // causal: row r attends to columns 0..r
                RowVectorXd row = scores.row(r).head(r + 1);
                double mx = row.maxCoeff();
                RowVectorXd e = (row.array() - mx).exp();
                a.row(r).head(r + 1) = e / e.sum();
            }
            lc.att_mix.middleCols(h * dh, dh) = a * vh;
        }
        Mat att_out = (lc.att_mix * lp.wo).rowwise() + lp.bo.row(0);
        lc.x_mid = lc.x_in + att_out;

        Mat ln2;
        layernorm_forward(lc.x_mid, lp.ln2_g, lp.ln2_b, ln2, lc.ln2_xhat, lc.ln2_rstd);
        lc.h_pre = (ln2 * lp.w1).rowwise() + lp.b1.row(0);
        lc.h_act = lc.h_pre.unaryExpr([](double v) { return gelu(v); });
        Mat mlp_out = (lc.h_act * lp.w2).rowwise() + lp.b2.row(0);
        x = lc.x_mid + mlp_out;
    }

    Mat lnf;
    layernorm_forward(x, params.lnf_g, params.lnf_b, lnf, cache.lnf_xhat, cache.lnf_rstd);
    cache.hidden = lnf;
    cache.logits = (lnf * params.w_head).rowwise() + params.b_head.row(0);
}

ForwardResult forward(const LmParams& params, const std::vector<int>& ids) {
    ForwardCache cache;
    forward_cached(params, ids, cache);
    return {log_softmax_rows(cache.logits), cache.hidden};
}

void backward(const LmParams& params, const ForwardCache& cache, const Mat& dlogits,
              LmParams& grads) {
    const ModelConfig& cfg = params.config;
    const auto len = static_cast<Eigen::Index>(cache.ids.size());
    const int nh = cfg.heads;
    const int dh = cfg.head_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    // head
    grads.w_head += cache.hidden.transpose() * dlogits;
    grads.b_head.row(0) += dlogits.colwise().sum();
    Mat d_hidden = dlogits * params.w_head.transpose();

    // final layernorm
    Mat dx;
    layernorm_backward(d_hidden, cache.lnf_xhat, cache.lnf_rstd, params.lnf_g, dx, grads.lnf_g,
                       grads.lnf_b);

    for (int l = cfg.layers - 1; l >= 0; --l) {
        const LayerParams& lp = params.layers[static_cast<std::size_t>(l)];
        const LayerCache& lc = cache.layers[static_cast<std::size_t>(l)];
        LayerParams& gl = grads.layers[static_cast<std::size_t>(l)];

        // mlp branch: x = x_mid + gelu(ln2(x_mid) w1 + b1) w2 + b2
        Mat d_mlp_out = dx;  // residual passthrough handled below
        Mat d_h_act = d_mlp_out * lp.w2.transpose();
        gl.w2 += lc.h_act.transpose() * d_mlp_out;
        gl.b2.row(0) += d_mlp_out.colwise().sum();
        Mat d_h_pre =
            d_h_act.cwiseProduct(lc.h_pre.unaryExpr([](double v) { return gelu_grad(v); }));
        Mat ln2 = lc.ln2_xhat.cwiseProduct(lp.ln2_g.row(0).replicate(len, 1));
        ln2.rowwise() += lp.ln2_b.row(0);
        gl.w1 += ln2.transpose() * d_h_pre;
        gl.b1.row(0) += d_h_pre.colwise().sum();
        Mat d_ln2 = d_h_pre * lp.w1.transpose();
        Mat d_x_mid;
        layernorm_backward(d_ln2, lc.ln2_xhat, lc.ln2_rstd, lp.ln2_g, d_x_mid, gl.ln2_g,
                           gl.ln2_b);
        d_x_mid += dx;  // residual

        // attention branch: x_mid = x_in + (att_mix wo + bo)
        Mat d_att_out = d_x_mid;
        gl.wo += lc.att_mix.transpose() * d_att_out;
        gl.bo.row(0) += d_att_out.colwise().sum();
        Mat d_mix = d_att_out * lp.wo.transpose();

        Mat dq(len, cfg.width), dk(len, cfg.width), dv(len, cfg.width);
        dq.setZero();
        dk.setZero();
        dv.setZero();
        for (int h = 0; h < nh; ++h) {
            const Mat& a = lc.att[static_cast<std::size_t>(h)];
            auto qh = lc.q.middleCols(h * dh, dh);
            auto kh = lc.k.middleCols(h * dh, dh);
            auto vh = lc.v.middleCols(h * dh, dh);
            auto d_zh = d_mix.middleCols(h * dh, dh);
            Mat da = d_zh * vh.transpose();
            dv.middleCols(h * dh, dh) += a.transpose() * d_zh;
            Mat ds = Mat::Zero(len, len);
            for (Eigen::Index r = 0; r < len; ++r) {
                RowVectorXd arow = a.row(r).head(r + 1);
                RowVectorXd darow = da.row(r).head(r + 1);
                double inner = arow.dot(darow);
                ds.row(r).head(r + 1) = (arow.array() * (darow.array() - inner)).matrix();
            }
            dq.middleCols(h * dh, dh) += (ds * kh) * scale;
            dk.middleCols(h * dh, dh) += (ds.transpose() * qh) * scale;
        }

        Mat ln1 = lc.ln1_xhat.cwiseProduct(lp.ln1_g.row(0).replicate(len, 1));
        ln1.rowwise() += lp.ln1_b.row(0);
        gl.wq += ln1.transpose() * dq;
        gl.bq.row(0) += dq.colwise().sum();
        gl.wk += ln1.transpose() * dk;
        gl.bk.row(0) += dk.colwise().sum();
        gl.wv += ln1.transpose() * dv;
        gl.bv.row(0) += dv.colwise().sum();
        Mat d_ln1 = dq * lp.wq.transpose() + dk * lp.wk.transpose() + dv * lp.wv.transpose();
        Mat d_x_in;
        layernorm_backward(d_ln1, lc.ln1_xhat, lc.ln1_rstd, lp.ln1_g, d_x_in, gl.ln1_g,
                           gl.ln1_b);
        dx = d_x_mid + d_x_in;
    }

    for (Eigen::Index t = 0; t < len; ++t) {
        grads.tok_emb.row(cache.ids[static_cast<std::size_t>(t)]) += dx.row(t);
        grads.pos_emb.row(t) += dx.row(t);
    }
}

// ---------------------------------------------------------------------------
// incremental decoding

GenState::GenState(const LmParams& params) : params_(params) {
    const int L = params.config.layers;
    k_.assign(static_cast<std::size_t>(L), Mat(params.config.context, params.config.width));
    v_.assign(static_cast<std::size_t>(L), Mat(params.config.context, params.config.width));
}

RowVectorXd GenState::step(int token_id) {
    const ModelConfig& cfg = params_.config;
    require(len_ < cfg.context, ErrorKind::Precondition, "generate: context window exhausted");
    require(token_id >= 0 && token_id < cfg.vocab, ErrorKind::Precondition,
            "generate: token id out of vocabulary");
    const int d = cfg.width;
    const int nh = cfg.heads;
    const int dh = cfg.head_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const int pos = len_;

    RowVectorXd x = params_.tok_emb.row(token_id) + params_.pos_emb.row(pos);
    auto ln_row = [](const RowVectorXd& in, const Mat& g, const Mat& b) {
        double mu = in.mean();
        double var = (in.array() - mu).square().mean();
        double rs = 1.0 / std::sqrt(var + kLnEps);
        RowVectorXd xhat = (in.array() - mu) * rs;
        return RowVectorXd(xhat.cwiseProduct(g.row(0)) + b.row(0));
    };

    for (int l = 0; l < cfg.layers; ++l) {
        const LayerParams& lp = params_.layers[static_cast<std::size_t>(l)];
        RowVectorXd ln1 = ln_row(x, lp.ln1_g, lp.ln1_b);
        RowVectorXd q = ln1 * lp.wq + lp.bq.row(0);
        k_[static_cast<std::size_t>(l)].row(pos) = ln1 * lp.wk + lp.bk.row(0);
        v_[static_cast<std::size_t>(l)].row(pos) = ln1 * lp.wv + lp.bv.row(0);

        RowVectorXd mixed(d);
        for (int h = 0; h < nh; ++h) {
            auto kh = k_[static_cast<std::size_t>(l)].topRows(pos + 1).middleCols(h * dh, dh);
            auto vh = v_[static_cast<std::size_t>(l)].topRows(pos + 1).middleCols(h * dh, dh);
            RowVectorXd scores = (q.middleCols(h * dh, dh) * kh.transpose()) * scale;
            RowVectorXd a = softmax_row(scores);
            mixed.middleCols(h * dh, dh) = a * vh;
        }
        x += mixed * lp.wo + lp.bo.row(0);

        RowVectorXd ln2 = ln_row(x, lp.ln2_g, lp.ln2_b);
        RowVectorXd h_pre = ln2 * lp.w1 + lp.b1.row(0);
        RowVectorXd h_act = h_pre.unaryExpr([](double vv) { return gelu(vv); });
        x += h_act * lp.w2 + lp.b2.row(0);
    }
    last_hidden_ = ln_row(x, params_.lnf_g, params_.lnf_b);
    ++len_;
    return last_hidden_ * params_.w_head + params_.b_head.row(0);
}

std::vector<int> generate(const LmParams& params, const std::vector<int>& prompt_ids,
                          const GenerateOptions& options) {
    require(!prompt_ids.empty(), ErrorKind::Precondition, "generate: empty prompt");
    require(static_cast<int>(prompt_ids.size()) <= params.config.context,
            ErrorKind::Precondition, "generate: prompt exceeds context");
    GenState state(params);
    RowVectorXd logits;
    for (int id : prompt_ids) logits = state.step(id);

    Rng rng(options.seed ^ 0x67656eull);
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
            std::partial_sort(order.begin(), order.begin() + k, order.end(),
                              [&](int a, int b) {
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
        out.push_back(next);
        logits = state.step(next);
    }
    return out;
}

// ---------------------------------------------------------------------------
// checkpoint io

namespace {

void put_u16(std::string& buf, uint16_t v) { buf.append(reinterpret_cast<const char*>(&v), 2); }
void put_u32(std::string& buf, uint32_t v) { buf.append(reinterpret_cast<const char*>(&v), 4); }

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;
    void need(std::size_t n) const {
        require(pos + n <= buf.size(), ErrorKind::Schema, "checkpoint: truncated file");
    }
    uint16_t u16() { need(2); uint16_t v; std::memcpy(&v, buf.data() + pos, 2); pos += 2; return v; }
    uint32_t u32() { need(4); uint32_t v; std::memcpy(&v, buf.data() + pos, 4); pos += 4; return v; }
    uint64_t u64() { need(8); uint64_t v; std::memcpy(&v, buf.data() + pos, 8); pos += 8; return v; }
    std::string str(std::size_t n) { need(n); std::string s = buf.substr(pos, n); pos += n; return s; }
};

constexpr char kMagic[4] = {'P', 'V', 'L', 'M'};
constexpr uint32_t kVersion = 1;

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::string buf;
    buf.append(kMagic, 4);
    put_u32(buf, kVersion);

    json meta;
    meta["config"] = {{"layers", ckpt.params.config.layers}, {"heads", ckpt.params.config.heads},
                      {"width", ckpt.params.config.width},   {"context", ckpt.params.config.context},
                      {"vocab", ckpt.params.config.vocab},   {"mlp_mult", ckpt.params.config.mlp_mult},
                      {"seed", ckpt.params.config.seed}};
    meta["step"] = ckpt.params.step;
    meta["vocab_tokens"] = ckpt.vocab;
    meta["extra"] = json::parse(ckpt.extra_meta_json);
    std::string meta_str = meta.dump();
    put_u32(buf, static_cast<uint32_t>(meta_str.size()));
    buf += meta_str;

    std::vector<std::pair<std::string, const Mat*>> tensors;
    ckpt.params.for_each_tensor([&](const std::string& name, const Mat& m) {
        tensors.emplace_back(name, &m);
    });
    for (const auto& [name, m] : ckpt.extra) tensors.emplace_back("extra." + name, &m);

    put_u32(buf, static_cast<uint32_t>(tensors.size()));
    for (const auto& [name, m] : tensors) {
        put_u16(buf, static_cast<uint16_t>(name.size()));
        buf += name;
        put_u32(buf, static_cast<uint32_t>(m->rows()));
        put_u32(buf, static_cast<uint32_t>(m->cols()));
    }
    for (const auto& [name, m] : tensors) {
        for (Eigen::Index i = 0; i < m->size(); ++i) {
            float f = static_cast<float>(m->data()[i]);
            buf.append(reinterpret_cast<const char*>(&f), sizeof f);
        }
    }
    uint64_t digest = fnv64_bytes(buf.data(), buf.size());
    buf.append(reinterpret_cast<const char*>(&digest), sizeof digest);
    write_text_file(path, buf);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::string buf = read_text_file(path);
    require(buf.size() > 16, ErrorKind::Schema, "checkpoint: file too small");
    uint64_t stored;
    std::memcpy(&stored, buf.data() + buf.size() - 8, 8);
    uint64_t actual = fnv64_bytes(buf.data(), buf.size() - 8);
    require(stored == actual, ErrorKind::Schema, "checkpoint: checksum mismatch in " + path);

    Reader r{buf};
    require(r.str(4) == std::string(kMagic, 4), ErrorKind::Schema, "checkpoint: bad magic");
    require(r.u32() == kVersion, ErrorKind::Schema, "checkpoint: unsupported version");
    std::string meta_str = r.str(r.u32());
    json meta = json::parse(meta_str);

    Checkpoint ckpt;
    const auto& jc = meta.at("config");
    ckpt.params.config.layers = jc.at("layers").get<int>();
    ckpt.params.config.heads = jc.at("heads").get<int>();
    ckpt.params.config.width = jc.at("width").get<int>();
    ckpt.params.config.context = jc.at("context").get<int>();
    ckpt.params.config.vocab = jc.at("vocab").get<int>();
    ckpt.params.config.mlp_mult = jc.at("mlp_mult").get<int>();
    ckpt.params.config.seed = jc.at("seed").get<uint64_t>();
    ckpt.params.step = meta.at("step").get<uint64_t>();
    ckpt.vocab = meta.at("vocab_tokens").get<std::vector<std::string>>();
    ckpt.extra_meta_json = meta.at("extra").dump();

    LmParams shape = LmParams::init(ckpt.params.config);
    shape.step = ckpt.params.step;
    shape.zero();
    ckpt.params = std::move(shape);

    struct Entry {
        std::string name;
        uint32_t rows, cols;
    };
    uint32_t count = r.u32();
    std::vector<Entry> entries;
    for (uint32_t i = 0; i < count; ++i) {
        Entry e;
        e.name = r.str(r.u16());
        e.rows = r.u32();
        e.cols = r.u32();
        entries.push_back(std::move(e));
    }
    std::map<std::string, Mat*> by_name;
    ckpt.params.for_each_tensor([&](const std::string& name, Mat& m) { by_name[name] = &m; });

    for (const auto& e : entries) {
        Mat* target = nullptr;
        if (e.name.rfind("extra.", 0) == 0) {
            ckpt.extra[e.name.substr(6)] = Mat(e.rows, e.cols);
            target = &ckpt.extra[e.name.substr(6)];
        } else {
            auto it = by_name.find(e.name);
            require(it != by_name.end(), ErrorKind::Schema,
                    "checkpoint: unknown tensor " + e.name);
            target = it->second;
            require(target->rows() == static_cast<Eigen::Index>(e.rows) &&
                        target->cols() == static_cast<Eigen::Index>(e.cols),
                    ErrorKind::Schema, "checkpoint: shape mismatch for tensor " + e.name);
        }
        for (uint32_t i = 0; i < e.rows * e.cols; ++i) {
            float f;
            r.need(4);
            std::memcpy(&f, r.buf.data() + r.pos, 4);
            r.pos += 4;
            target->data()[i] = static_cast<double>(f);
        }
    }
    return ckpt;
}

}  // namespace privlm

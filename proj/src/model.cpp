#include "persona/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace persona {

namespace {

// y = W u (+ y0), W is out x in, u has `in` entries.
void matvec(const Tensor& w, const double* u, double* y) {
    for (int i = 0; i < w.rows; ++i) {
        double acc = 0.0;
        const double* row = &w.v[static_cast<std::size_t>(i) * w.cols];
        for (int j = 0; j < w.cols; ++j) acc += row[j] * u[j];
        y[i] += acc;
    }
}

// u_grad += W^T y_grad; W_grad += y_grad (outer) u.
void matvec_backward(const Tensor& w, const double* u, const double* y_grad, Tensor& w_grad,
                     double* u_grad) {
    for (int i = 0; i < w.rows; ++i) {
        double g = y_grad[i];
        if (g == 0.0) continue;
        const double* row = &w.v[static_cast<std::size_t>(i) * w.cols];
        double* grow = &w_grad.v[static_cast<std::size_t>(i) * w.cols];
        for (int j = 0; j < w.cols; ++j) {
            grow[j] += g * u[j];
            if (u_grad) u_grad[j] += row[j] * g;
        }
    }
}

void add_bias(const Tensor& b, double* y) {
    for (int i = 0; i < b.rows; ++i) y[i] += b.v[i];
}

constexpr double kLnEps = 1e-5;

// Post-norm layer normalization over the feature dimension of each position.
void layer_norm_forward(const std::vector<double>& input, int len, int d, const Tensor& gain,
                        const Tensor& bias, LayerNormCache* cache, std::vector<double>* out) {
    out->assign(static_cast<std::size_t>(len) * d, 0.0);
    if (cache) {
        cache->rstd.assign(len, 0.0);
        cache->xhat.assign(static_cast<std::size_t>(len) * d, 0.0);
    }
    for (int t = 0; t < len; ++t) {
        const double* row = &input[static_cast<std::size_t>(t) * d];
        double mean = 0.0;
        for (int i = 0; i < d; ++i) mean += row[i];
        mean /= d;
        double var = 0.0;
        for (int i = 0; i < d; ++i) var += (row[i] - mean) * (row[i] - mean);
        var /= d;
        double rstd = 1.0 / std::sqrt(var + kLnEps);
        if (cache) cache->rstd[t] = rstd;
        for (int i = 0; i < d; ++i) {
            double xhat = (row[i] - mean) * rstd;
            if (cache) cache->xhat[static_cast<std::size_t>(t) * d + i] = xhat;
            (*out)[static_cast<std::size_t>(t) * d + i] = gain.v[i] * xhat + bias.v[i];
        }
    }
}

void layer_norm_backward(const std::vector<double>& dout, int len, int d, const Tensor& gain,
                         const LayerNormCache& cache, Tensor& gain_grad, Tensor& bias_grad,
                         std::vector<double>* dinput) {
    dinput->assign(static_cast<std::size_t>(len) * d, 0.0);
    for (int t = 0; t < len; ++t) {
        const double* dy = &dout[static_cast<std::size_t>(t) * d];
        const double* xhat = &cache.xhat[static_cast<std::size_t>(t) * d];
        double rstd = cache.rstd[t];
        double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
        for (int i = 0; i < d; ++i) {
            gain_grad.v[i] += dy[i] * xhat[i];
            bias_grad.v[i] += dy[i];
            double dxhat = dy[i] * gain.v[i];
            mean_dxhat += dxhat;
            mean_dxhat_xhat += dxhat * xhat[i];
        }
        mean_dxhat /= d;
        mean_dxhat_xhat /= d;
        double* dx = &(*dinput)[static_cast<std::size_t>(t) * d];
        for (int i = 0; i < d; ++i) {
            double dxhat = dy[i] * gain.v[i];
            dx[i] = rstd * (dxhat - mean_dxhat - xhat[i] * mean_dxhat_xhat);
        }
    }
}

// Inverted-dropout multipliers; empty result means "keep everything".
std::vector<double> draw_mask(std::size_t n, double rate, DropoutCtx* dropout) {
    if (!dropout || !dropout->enabled() || rate <= 0.0) return {};
    std::vector<double> mask(n);
    double keep_scale = 1.0 / (1.0 - rate);
    for (std::size_t i = 0; i < n; ++i) {
        mask[i] = dropout->rng->uniform() >= rate ? keep_scale : 0.0;
    }
    return mask;
}

void apply_mask(const std::vector<double>& mask, std::vector<double>* values) {
    if (mask.empty()) return;
    for (std::size_t i = 0; i < values->size(); ++i) (*values)[i] *= mask[i];
}

double leaky_relu(double z, double slope) { return z > 0.0 ? z : slope * z; }
double leaky_relu_grad(double z, double slope) { return z > 0.0 ? 1.0 : slope; }

std::array<double, 3> softmax3(const std::array<double, 3>& s) {
    double mx = std::max({s[0], s[1], s[2]});
    std::array<double, 3> e{std::exp(s[0] - mx), std::exp(s[1] - mx), std::exp(s[2] - mx)};
    double sum = e[0] + e[1] + e[2];
    return {e[0] / sum, e[1] / sum, e[2] / sum};
}

void check_finite(const std::vector<double>& v, const char* what) {
    for (double x : v) {
        if (!std::isfinite(x)) throw Error(std::string("non-finite value in ") + what);
    }
}

}  // namespace

void ModelConfig::check() const {
    if (encoder.d_model <= 0 || encoder.n_heads <= 0 || encoder.n_layers <= 0)
        throw Error("encoder dimensions must be positive");
    if (encoder.d_model % encoder.n_heads != 0)
        throw Error("d_model must be divisible by n_heads");
    if (encoder.ffn_multiplier < 1) throw Error("ffn_multiplier must be >= 1");
    if (encoder.dropout < 0.0 || encoder.dropout >= 1.0)
        throw Error("encoder dropout must be in [0,1)");
    if (mlp_dropout < 0.0 || mlp_dropout >= 1.0) throw Error("mlp_dropout must be in [0,1)");
    if (encoder.capacity < 1) throw Error("sequence capacity must be >= 1");
    if (vocab_size < 2) throw Error("vocab_size must be >= 2");
    if (d_f < 1) throw Error("d_f must be >= 1");
    if (cat_dim < 0 || num_dim < 0) throw Error("tabular dims must be >= 0");
    if (mlp_division < 1) throw Error("mlp_division must be >= 1");
}

CombineMode combine_mode_from_string(const std::string& s) {
    if (s == "text_only") return CombineMode::text_only;
    if (s == "attention_fusion" || s == "attention_on_cat_and_numerical_feats")
        return CombineMode::attention_fusion;
    throw Error("unknown combine mode: " + s);
}

std::string to_string(CombineMode mode) {
    return mode == CombineMode::text_only ? "text_only" : "attention_fusion";
}

ModelParams ModelParams::zeros(const ModelConfig& cfg) {
    cfg.check();
    ModelParams p;
    p.cfg = cfg;
    int d = cfg.encoder.d_model;
    int f = d * cfg.encoder.ffn_multiplier;
    int hidden = cfg.mlp_hidden();
    p.token_embed = Tensor(cfg.vocab_size, d);
    p.pos_embed = Tensor(cfg.encoder.capacity, d);
    p.layers.resize(cfg.encoder.n_layers);
    for (auto& layer : p.layers) {
        layer.wq = Tensor(d, d);
        layer.wk = Tensor(d, d);
        layer.wv = Tensor(d, d);
        layer.wo = Tensor(d, d);
        layer.bq = Tensor(d, 1);
        layer.bk = Tensor(d, 1);
        layer.bv = Tensor(d, 1);
        layer.bo = Tensor(d, 1);
        layer.ln1_g = Tensor(d, 1);
        layer.ln1_b = Tensor(d, 1);
        layer.ffn_w1 = Tensor(f, d);
        layer.ffn_b1 = Tensor(f, 1);
        layer.ffn_w2 = Tensor(d, f);
        layer.ffn_b2 = Tensor(d, 1);
        layer.ln2_g = Tensor(d, 1);
        layer.ln2_b = Tensor(d, 1);
    }
    p.cat_mlp.w1 = Tensor(hidden, cfg.cat_dim);
    p.cat_mlp.b1 = Tensor(hidden, 1);
    p.cat_mlp.w2 = Tensor(cfg.d_f, hidden);
    p.cat_mlp.b2 = Tensor(cfg.d_f, 1);
    p.num_mlp.w1 = Tensor(hidden, cfg.num_dim);
    p.num_mlp.b1 = Tensor(hidden, 1);
    p.num_mlp.w2 = Tensor(cfg.d_f, hidden);
    p.num_mlp.b2 = Tensor(cfg.d_f, 1);
    p.w_x = Tensor(cfg.d_f, d);
    p.w_c = Tensor(cfg.d_f, cfg.d_f);
    p.w_n = Tensor(cfg.d_f, cfg.d_f);
    p.attn_vec = Tensor(2 * cfg.d_f, 1);
    p.head_w = Tensor(2, cfg.d_f);
    p.head_b = Tensor(2, 1);
    return p;
}

namespace {

void fill_normal(Tensor& t, double scale, Rng& rng) {
    for (double& x : t.v) x = rng.normal() * scale;
}

void fill_value(Tensor& t, double value) { std::fill(t.v.begin(), t.v.end(), value); }

}  // namespace

ModelParams ModelParams::init(const ModelConfig& cfg, std::uint64_t seed) {
    ModelParams p = zeros(cfg);
    Rng rng(seed);
    int d = cfg.encoder.d_model;
    int f = d * cfg.encoder.ffn_multiplier;
    int hidden = cfg.mlp_hidden();
    auto xavier = [](int fan_in, int fan_out) {
        return std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
    };

    fill_normal(p.token_embed, 1.0 / std::sqrt(static_cast<double>(d)), rng);
    fill_normal(p.pos_embed, 0.02, rng);
    for (auto& layer : p.layers) {
        fill_normal(layer.wq, xavier(d, d), rng);
        fill_normal(layer.wk, xavier(d, d), rng);
        fill_normal(layer.wv, xavier(d, d), rng);
        fill_normal(layer.wo, xavier(d, d), rng);
        fill_value(layer.ln1_g, 1.0);
        fill_value(layer.ln2_g, 1.0);
        fill_normal(layer.ffn_w1, xavier(d, f), rng);
        fill_normal(layer.ffn_w2, xavier(f, d), rng);
    }
    fill_normal(p.cat_mlp.w1, xavier(std::max(1, cfg.cat_dim), hidden), rng);
    fill_normal(p.cat_mlp.w2, xavier(hidden, cfg.d_f), rng);
    fill_normal(p.num_mlp.w1, xavier(std::max(1, cfg.num_dim), hidden), rng);
    fill_normal(p.num_mlp.w2, xavier(hidden, cfg.d_f), rng);
    // Small positive bias keeps the ReLU embedders away from dead units (and
    // away from exact kinks, which matters for finite-difference checks).
    fill_value(p.cat_mlp.b1, 0.01);
    fill_value(p.cat_mlp.b2, 0.01);
    fill_value(p.num_mlp.b1, 0.01);
    fill_value(p.num_mlp.b2, 0.01);
    fill_normal(p.w_x, xavier(d, cfg.d_f), rng);
    fill_normal(p.w_c, xavier(cfg.d_f, cfg.d_f), rng);
    fill_normal(p.w_n, xavier(cfg.d_f, cfg.d_f), rng);
    fill_normal(p.attn_vec, 1.0 / std::sqrt(2.0 * cfg.d_f), rng);
    fill_normal(p.head_w, xavier(cfg.d_f, 2), rng);
    return p;
}

std::vector<std::pair<std::string, Tensor*>> ModelParams::named_tensors() {
    std::vector<std::pair<std::string, Tensor*>> out;
    out.push_back({"token_embed", &token_embed});
    out.push_back({"pos_embed", &pos_embed});
    for (std::size_t l = 0; l < layers.size(); ++l) {
        std::string prefix = "layer" + std::to_string(l) + ".";
        LayerParams& lp = layers[l];
        out.push_back({prefix + "wq", &lp.wq});
        out.push_back({prefix + "bq", &lp.bq});
        out.push_back({prefix + "wk", &lp.wk});
        out.push_back({prefix + "bk", &lp.bk});
        out.push_back({prefix + "wv", &lp.wv});
        out.push_back({prefix + "bv", &lp.bv});
        out.push_back({prefix + "wo", &lp.wo});
        out.push_back({prefix + "bo", &lp.bo});
        out.push_back({prefix + "ln1_g", &lp.ln1_g});
        out.push_back({prefix + "ln1_b", &lp.ln1_b});
        out.push_back({prefix + "ffn_w1", &lp.ffn_w1});
        out.push_back({prefix + "ffn_b1", &lp.ffn_b1});
        out.push_back({prefix + "ffn_w2", &lp.ffn_w2});
        out.push_back({prefix + "ffn_b2", &lp.ffn_b2});
        out.push_back({prefix + "ln2_g", &lp.ln2_g});
        out.push_back({prefix + "ln2_b", &lp.ln2_b});
    }
    out.push_back({"cat_mlp.w1", &cat_mlp.w1});
    out.push_back({"cat_mlp.b1", &cat_mlp.b1});
    out.push_back({"cat_mlp.w2", &cat_mlp.w2});
    out.push_back({"cat_mlp.b2", &cat_mlp.b2});
    out.push_back({"num_mlp.w1", &num_mlp.w1});
    out.push_back({"num_mlp.b1", &num_mlp.b1});
    out.push_back({"num_mlp.w2", &num_mlp.w2});
    out.push_back({"num_mlp.b2", &num_mlp.b2});
    out.push_back({"fusion.w_x", &w_x});
    out.push_back({"fusion.w_c", &w_c});
    out.push_back({"fusion.w_n", &w_n});
    out.push_back({"fusion.a", &attn_vec});
    out.push_back({"head.w", &head_w});
    out.push_back({"head.b", &head_b});
    return out;
}

std::vector<std::pair<std::string, const Tensor*>> ModelParams::named_tensors() const {
    auto mutable_view = const_cast<ModelParams*>(this)->named_tensors();
    std::vector<std::pair<std::string, const Tensor*>> out;
    out.reserve(mutable_view.size());
    for (auto& [name, t] : mutable_view) out.push_back({name, t});
    return out;
}

// ---------------------------------------------------------------------------
// Forward components

std::vector<double> encode_text(const TokenSequence& seq, const ModelParams& params,
                                EncoderCache* cache, DropoutCtx* dropout) {
    const ModelConfig& cfg = params.cfg;
    int d = cfg.encoder.d_model;
    auto len = static_cast<int>(std::min<std::size_t>(seq.length, seq.ids.size()));
    if (len > cfg.encoder.capacity)
        throw Error("token sequence longer than encoder capacity");
    if (cache) {
        cache->len = static_cast<std::size_t>(len);
        cache->layers.clear();
    }
    if (len == 0) {
        std::vector<double> x(d, 0.0);
        if (cache) cache->x = x;
        return x;
    }

    // Pad positions are dropped here; with post-padding this is identical to
    // masking pads out of attention and pooling over non-pad positions only.
    std::vector<double> h(static_cast<std::size_t>(len) * d, 0.0);
    for (int t = 0; t < len; ++t) {
        int id = seq.ids[t];
        if (id < 0 || id >= cfg.vocab_size) throw Error("token id out of range");
        for (int i = 0; i < d; ++i) {
            h[static_cast<std::size_t>(t) * d + i] =
                params.token_embed.at(id, i) + params.pos_embed.at(t, i);
        }
    }
    if (cache) {
        cache->ids.assign(seq.ids.begin(), seq.ids.begin() + len);
        cache->h0 = h;
        cache->layers.resize(params.layers.size());
    }

    int heads = cfg.encoder.n_heads;
    int dh = d / heads;
    double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    int fwidth = d * cfg.encoder.ffn_multiplier;

    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        const LayerParams& lp = params.layers[l];
        LayerCache* lc = cache ? &cache->layers[l] : nullptr;
        if (lc) lc->h_in = h;

        std::vector<double> q(static_cast<std::size_t>(len) * d, 0.0);
        std::vector<double> k(q.size(), 0.0);
        std::vector<double> v(q.size(), 0.0);
        for (int t = 0; t < len; ++t) {
            const double* row = &h[static_cast<std::size_t>(t) * d];
            matvec(lp.wq, row, &q[static_cast<std::size_t>(t) * d]);
            matvec(lp.wk, row, &k[static_cast<std::size_t>(t) * d]);
            matvec(lp.wv, row, &v[static_cast<std::size_t>(t) * d]);
            add_bias(lp.bq, &q[static_cast<std::size_t>(t) * d]);
            add_bias(lp.bk, &k[static_cast<std::size_t>(t) * d]);
            add_bias(lp.bv, &v[static_cast<std::size_t>(t) * d]);
        }

        std::vector<double> attn(static_cast<std::size_t>(heads) * len * len, 0.0);
        std::vector<double> ctx(static_cast<std::size_t>(len) * d, 0.0);
        std::vector<double> scores(len);
        for (int hd = 0; hd < heads; ++hd) {
            int off = hd * dh;
            for (int i = 0; i < len; ++i) {
                double mx = -std::numeric_limits<double>::infinity();
                for (int j = 0; j < len; ++j) {
                    double s = 0.0;
                    for (int e = 0; e < dh; ++e)
                        s += q[static_cast<std::size_t>(i) * d + off + e] *
                             k[static_cast<std::size_t>(j) * d + off + e];
                    scores[j] = s * scale;
                    mx = std::max(mx, scores[j]);
                }
                double sum = 0.0;
                for (int j = 0; j < len; ++j) {
                    scores[j] = std::exp(scores[j] - mx);
                    sum += scores[j];
                }
                double* arow = &attn[(static_cast<std::size_t>(hd) * len + i) * len];
                for (int j = 0; j < len; ++j) {
                    arow[j] = scores[j] / sum;
                    for (int e = 0; e < dh; ++e) {
                        ctx[static_cast<std::size_t>(i) * d + off + e] +=
                            arow[j] * v[static_cast<std::size_t>(j) * d + off + e];
                    }
                }
            }
        }

        std::vector<double> attn_out(static_cast<std::size_t>(len) * d, 0.0);
        for (int t = 0; t < len; ++t) {
            matvec(lp.wo, &ctx[static_cast<std::size_t>(t) * d],
                   &attn_out[static_cast<std::size_t>(t) * d]);
            add_bias(lp.bo, &attn_out[static_cast<std::size_t>(t) * d]);
        }
        std::vector<double> attn_mask = draw_mask(attn_out.size(), cfg.encoder.dropout, dropout);
        apply_mask(attn_mask, &attn_out);

        std::vector<double> res1(h);
        for (std::size_t i = 0; i < res1.size(); ++i) res1[i] += attn_out[i];

        std::vector<double> h_mid;
        layer_norm_forward(res1, len, d, lp.ln1_g, lp.ln1_b, lc ? &lc->ln1 : nullptr, &h_mid);

        std::vector<double> z1(static_cast<std::size_t>(len) * fwidth, 0.0);
        std::vector<double> ffn_out(static_cast<std::size_t>(len) * d, 0.0);
        for (int t = 0; t < len; ++t) {
            matvec(lp.ffn_w1, &h_mid[static_cast<std::size_t>(t) * d],
                   &z1[static_cast<std::size_t>(t) * fwidth]);
            add_bias(lp.ffn_b1, &z1[static_cast<std::size_t>(t) * fwidth]);
            std::vector<double> a1(fwidth);
            for (int i = 0; i < fwidth; ++i)
                a1[i] = std::max(0.0, z1[static_cast<std::size_t>(t) * fwidth + i]);
            matvec(lp.ffn_w2, a1.data(), &ffn_out[static_cast<std::size_t>(t) * d]);
            add_bias(lp.ffn_b2, &ffn_out[static_cast<std::size_t>(t) * d]);
        }
        std::vector<double> ffn_mask = draw_mask(ffn_out.size(), cfg.encoder.dropout, dropout);
        apply_mask(ffn_mask, &ffn_out);

        std::vector<double> res2(h_mid);
        for (std::size_t i = 0; i < res2.size(); ++i) res2[i] += ffn_out[i];

        std::vector<double> h_out;
        layer_norm_forward(res2, len, d, lp.ln2_g, lp.ln2_b, lc ? &lc->ln2 : nullptr, &h_out);

        if (lc) {
            lc->q = std::move(q);
            lc->k = std::move(k);
            lc->v = std::move(v);
            lc->attn = std::move(attn);
            lc->ctx = std::move(ctx);
            lc->attn_out = std::move(attn_out);
            lc->attn_mask = std::move(attn_mask);
            lc->h_mid = h_mid;
            lc->ffn_z1 = std::move(z1);
            lc->ffn_out = std::move(ffn_out);
            lc->ffn_mask = std::move(ffn_mask);
            lc->h_out = h_out;
        }
        h = std::move(h_out);
    }

    std::vector<double> x(d, 0.0);
    for (int t = 0; t < len; ++t) {
        for (int i = 0; i < d; ++i) x[i] += h[static_cast<std::size_t>(t) * d + i];
    }
    for (int i = 0; i < d; ++i) x[i] /= len;
    check_finite(x, "text encoding");
    if (cache) cache->x = x;
    return x;
}

namespace {

std::vector<double> mlp_forward(const MlpParams& mlp, const std::vector<double>& input,
                                double dropout_rate, DropoutCtx* dropout, MlpCache* cache) {
    if (static_cast<int>(input.size()) != mlp.w1.cols)
        throw Error("tabular embedding input has wrong width");
    std::vector<double> z1(mlp.w1.rows, 0.0);
    matvec(mlp.w1, input.data(), z1.data());
    add_bias(mlp.b1, z1.data());
    std::vector<double> a1(z1.size());
    for (std::size_t i = 0; i < z1.size(); ++i) a1[i] = std::max(0.0, z1[i]);
    std::vector<double> mask = draw_mask(a1.size(), dropout_rate, dropout);
    apply_mask(mask, &a1);
    std::vector<double> z2(mlp.w2.rows, 0.0);
    matvec(mlp.w2, a1.data(), z2.data());
    add_bias(mlp.b2, z2.data());
    std::vector<double> out(z2.size());
    for (std::size_t i = 0; i < z2.size(); ++i) out[i] = std::max(0.0, z2[i]);
    if (cache) {
        cache->in = input;
        cache->z1 = std::move(z1);
        cache->a1 = std::move(a1);
        cache->mask = std::move(mask);
        cache->z2 = std::move(z2);
        cache->out = out;
    }
    return out;
}

void mlp_backward(const MlpParams& mlp, const MlpCache& cache, const std::vector<double>& dout,
                  MlpParams& grads) {
    std::vector<double> dz2(dout.size());
    for (std::size_t i = 0; i < dout.size(); ++i) dz2[i] = cache.z2[i] > 0.0 ? dout[i] : 0.0;
    std::vector<double> da1(cache.a1.size(), 0.0);
    matvec_backward(mlp.w2, cache.a1.data(), dz2.data(), grads.w2, da1.data());
    for (std::size_t i = 0; i < dz2.size(); ++i) grads.b2.v[i] += dz2[i];
    if (!cache.mask.empty()) {
        for (std::size_t i = 0; i < da1.size(); ++i) da1[i] *= cache.mask[i];
    }
    std::vector<double> dz1(da1.size());
    for (std::size_t i = 0; i < da1.size(); ++i) dz1[i] = cache.z1[i] > 0.0 ? da1[i] : 0.0;
    matvec_backward(mlp.w1, cache.in.data(), dz1.data(), grads.w1, nullptr);
    for (std::size_t i = 0; i < dz1.size(); ++i) grads.b1.v[i] += dz1[i];
}

}  // namespace

std::pair<std::vector<double>, std::vector<double>> embed_tabular(
    const std::vector<double>& c, const std::vector<double>& n, const ModelParams& params,
    MlpCache* cat_cache, MlpCache* num_cache, DropoutCtx* dropout) {
    auto c_emb = mlp_forward(params.cat_mlp, c, params.cfg.mlp_dropout, dropout, cat_cache);
    auto n_emb = mlp_forward(params.num_mlp, n, params.cfg.mlp_dropout, dropout, num_cache);
    return {std::move(c_emb), std::move(n_emb)};
}

std::pair<std::vector<double>, FusionTrace> attention_combine(const std::vector<double>& x,
                                                              const std::vector<double>& c_emb,
                                                              const std::vector<double>& n_emb,
                                                              const ModelParams& params,
                                                              FusionCache* cache) {
    int d_f = params.cfg.d_f;
    if (static_cast<int>(c_emb.size()) != d_f || static_cast<int>(n_emb.size()) != d_f)
        throw Error("fusion branch width mismatch");
    std::vector<double> px(d_f, 0.0), pc(d_f, 0.0), pn(d_f, 0.0);
    matvec(params.w_x, x.data(), px.data());
    matvec(params.w_c, c_emb.data(), pc.data());
    matvec(params.w_n, n_emb.data(), pn.data());

    // z_k = a^T [Wx x || Wk u_k]; the text branch is always the query.
    const double* a1 = params.attn_vec.v.data();
    const double* a2 = a1 + d_f;
    double a1_px = 0.0;
    for (int i = 0; i < d_f; ++i) a1_px += a1[i] * px[i];
    std::array<double, 3> z{};
    for (int i = 0; i < d_f; ++i) {
        z[0] += a2[i] * px[i];
        z[1] += a2[i] * pc[i];
        z[2] += a2[i] * pn[i];
    }
    for (auto& zi : z) zi += a1_px;

    double slope = params.cfg.leaky_slope;
    std::array<double, 3> scores{leaky_relu(z[0], slope), leaky_relu(z[1], slope),
                                 leaky_relu(z[2], slope)};
    std::array<double, 3> coef = softmax3(scores);

    std::vector<double> m(d_f, 0.0);
    for (int i = 0; i < d_f; ++i) m[i] = coef[0] * px[i] + coef[1] * pc[i] + coef[2] * pn[i];
    check_finite(m, "fusion output");

    if (cache) {
        cache->px = px;
        cache->pc = pc;
        cache->pn = pn;
        cache->z = z;
        cache->coef = coef;
    }
    FusionTrace trace;
    trace.coefficients = coef;
    trace.scores = scores;
    trace.m = m;
    return {std::move(m), std::move(trace)};
}

std::array<double, 2> classify(const std::vector<double>& m, const ModelParams& params,
                               std::array<double, 2>* logits_out) {
    std::array<double, 2> logits{0.0, 0.0};
    std::vector<double> tmp(2, 0.0);
    matvec(params.head_w, m.data(), tmp.data());
    logits[0] = tmp[0] + params.head_b.v[0];
    logits[1] = tmp[1] + params.head_b.v[1];
    if (logits_out) *logits_out = logits;
    double mx = std::max(logits[0], logits[1]);
    double e0 = std::exp(logits[0] - mx);
    double e1 = std::exp(logits[1] - mx);
    return {e0 / (e0 + e1), e1 / (e0 + e1)};
}

ForwardResult forward(const TokenSequence& seq, const TabularVector& tab,
                      const ModelParams& params, CombineMode mode, ForwardCache* cache,
                      DropoutCtx* dropout) {
    ForwardResult result;
    if (cache) cache->mode = mode;
    std::vector<double> x =
        encode_text(seq, params, cache ? &cache->enc : nullptr, dropout);

    std::vector<double> m;
    if (mode == CombineMode::text_only) {
        m.assign(params.cfg.d_f, 0.0);
        matvec(params.w_x, x.data(), m.data());
        result.trace.coefficients = {1.0, 0.0, 0.0};
        result.trace.scores = {0.0, 0.0, 0.0};
    } else {
        auto [c_emb, n_emb] = embed_tabular(tab.c, tab.n, params,
                                            cache ? &cache->cat_mlp : nullptr,
                                            cache ? &cache->num_mlp : nullptr, dropout);
        auto [fused, trace] = attention_combine(x, c_emb, n_emb, params,
                                                cache ? &cache->fusion : nullptr);
        m = std::move(fused);
        result.trace = std::move(trace);
    }
    result.trace.m = m;

    std::array<double, 2> logits{};
    result.probs = classify(m, params, &logits);
    if (cache) {
        cache->m = std::move(m);
        cache->logits = logits;
        cache->probs = result.probs;
    }
    return result;
}

ForwardResult forward_from_encoded(const std::vector<double>& x, const TabularVector& tab,
                                   const ModelParams& params, CombineMode mode) {
    ForwardResult result;
    std::vector<double> m;
    if (mode == CombineMode::text_only) {
        m.assign(params.cfg.d_f, 0.0);
        matvec(params.w_x, x.data(), m.data());
        result.trace.coefficients = {1.0, 0.0, 0.0};
    } else {
        auto [c_emb, n_emb] = embed_tabular(tab.c, tab.n, params);
        auto [fused, trace] = attention_combine(x, c_emb, n_emb, params);
        m = std::move(fused);
        result.trace = std::move(trace);
    }
    result.trace.m = m;
    result.probs = classify(m, params);
    return result;
}

// ---------------------------------------------------------------------------
// Backward

namespace {

void encoder_backward(const ModelParams& params, const EncoderCache& cache,
                      const std::vector<double>& dx, ModelParams& grads) {
    const ModelConfig& cfg = params.cfg;
    int d = cfg.encoder.d_model;
    auto len = static_cast<int>(cache.len);
    if (len == 0) return;
    int heads = cfg.encoder.n_heads;
    int dh = d / heads;
    double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    int fwidth = d * cfg.encoder.ffn_multiplier;

    // Pooling: x = mean of final rows.
    std::vector<double> dh_out(static_cast<std::size_t>(len) * d, 0.0);
    for (int t = 0; t < len; ++t) {
        for (int i = 0; i < d; ++i)
            dh_out[static_cast<std::size_t>(t) * d + i] = dx[i] / len;
    }

    for (int l = static_cast<int>(params.layers.size()) - 1; l >= 0; --l) {
        const LayerParams& lp = params.layers[l];
        const LayerCache& lc = cache.layers[l];
        LayerParams& lg = grads.layers[l];

        // h_out = LN2(res2), res2 = h_mid + ffn_out(masked)
        std::vector<double> dres2;
        layer_norm_backward(dh_out, len, d, lp.ln2_g, lc.ln2, lg.ln2_g, lg.ln2_b, &dres2);

        std::vector<double> dffn_out(dres2);
        if (!lc.ffn_mask.empty()) {
            for (std::size_t i = 0; i < dffn_out.size(); ++i) dffn_out[i] *= lc.ffn_mask[i];
        }
        std::vector<double> dh_mid(dres2);  // residual branch

        std::vector<double> a1(fwidth), dz1(fwidth), da1(fwidth);
        for (int t = 0; t < len; ++t) {
            const double* z1 = &lc.ffn_z1[static_cast<std::size_t>(t) * fwidth];
            for (int i = 0; i < fwidth; ++i) a1[i] = std::max(0.0, z1[i]);
            const double* dff = &dffn_out[static_cast<std::size_t>(t) * d];
            std::fill(da1.begin(), da1.end(), 0.0);
            matvec_backward(lp.ffn_w2, a1.data(), dff, lg.ffn_w2, da1.data());
            for (int i = 0; i < d; ++i) lg.ffn_b2.v[i] += dff[i];
            for (int i = 0; i < fwidth; ++i) dz1[i] = z1[i] > 0.0 ? da1[i] : 0.0;
            matvec_backward(lp.ffn_w1, &lc.h_mid[static_cast<std::size_t>(t) * d], dz1.data(),
                            lg.ffn_w1, &dh_mid[static_cast<std::size_t>(t) * d]);
            for (int i = 0; i < fwidth; ++i) lg.ffn_b1.v[i] += dz1[i];
        }

        // h_mid = LN1(res1), res1 = h_in + attn_out(masked)
        std::vector<double> dres1;
        layer_norm_backward(dh_mid, len, d, lp.ln1_g, lc.ln1, lg.ln1_g, lg.ln1_b, &dres1);

        std::vector<double> dattn_out(dres1);
        if (!lc.attn_mask.empty()) {
            for (std::size_t i = 0; i < dattn_out.size(); ++i) dattn_out[i] *= lc.attn_mask[i];
        }
        std::vector<double> dh_in(dres1);  // residual branch

        // attn_out = Wo ctx + bo
        std::vector<double> dctx(static_cast<std::size_t>(len) * d, 0.0);
        for (int t = 0; t < len; ++t) {
            const double* dao = &dattn_out[static_cast<std::size_t>(t) * d];
            matvec_backward(lp.wo, &lc.ctx[static_cast<std::size_t>(t) * d], dao, lg.wo,
                            &dctx[static_cast<std::size_t>(t) * d]);
            for (int i = 0; i < d; ++i) lg.bo.v[i] += dao[i];
        }

        // Attention core.
        std::vector<double> dq(static_cast<std::size_t>(len) * d, 0.0);
        std::vector<double> dk(dq.size(), 0.0);
        std::vector<double> dv(dq.size(), 0.0);
        std::vector<double> dattn_row(len), ds_row(len);
        for (int hd = 0; hd < heads; ++hd) {
            int off = hd * dh;
            for (int i = 0; i < len; ++i) {
                const double* arow = &lc.attn[(static_cast<std::size_t>(hd) * len + i) * len];
                double dot = 0.0;
                for (int j = 0; j < len; ++j) {
                    double g = 0.0;
                    for (int e = 0; e < dh; ++e)
                        g += dctx[static_cast<std::size_t>(i) * d + off + e] *
                             lc.v[static_cast<std::size_t>(j) * d + off + e];
                    dattn_row[j] = g;
                    dot += arow[j] * g;
                    for (int e = 0; e < dh; ++e)
                        dv[static_cast<std::size_t>(j) * d + off + e] +=
                            arow[j] * dctx[static_cast<std::size_t>(i) * d + off + e];
                }
                for (int j = 0; j < len; ++j) {
                    ds_row[j] = arow[j] * (dattn_row[j] - dot) * scale;
                    for (int e = 0; e < dh; ++e) {
                        dq[static_cast<std::size_t>(i) * d + off + e] +=
                            ds_row[j] * lc.k[static_cast<std::size_t>(j) * d + off + e];
                        dk[static_cast<std::size_t>(j) * d + off + e] +=
                            ds_row[j] * lc.q[static_cast<std::size_t>(i) * d + off + e];
                    }
                }
            }
        }

        // Projections back to the layer input.
        for (int t = 0; t < len; ++t) {
            const double* hrow = &lc.h_in[static_cast<std::size_t>(t) * d];
            double* dh_row = &dh_in[static_cast<std::size_t>(t) * d];
            matvec_backward(lp.wq, hrow, &dq[static_cast<std::size_t>(t) * d], lg.wq, dh_row);
            matvec_backward(lp.wk, hrow, &dk[static_cast<std::size_t>(t) * d], lg.wk, dh_row);
            matvec_backward(lp.wv, hrow, &dv[static_cast<std::size_t>(t) * d], lg.wv, dh_row);
            for (int i = 0; i < d; ++i) {
                lg.bq.v[i] += dq[static_cast<std::size_t>(t) * d + i];
                lg.bk.v[i] += dk[static_cast<std::size_t>(t) * d + i];
                lg.bv.v[i] += dv[static_cast<std::size_t>(t) * d + i];
            }
        }
        dh_out = std::move(dh_in);
    }

    // Embedding scatter.
    for (int t = 0; t < len; ++t) {
        int id = cache.ids[t];
        for (int i = 0; i < d; ++i) {
            double g = dh_out[static_cast<std::size_t>(t) * d + i];
            grads.token_embed.at(id, i) += g;
            grads.pos_embed.at(t, i) += g;
        }
    }
}

}  // namespace

void backward(const ModelParams& params, const TokenSequence& seq, const TabularVector& tab,
              const ForwardCache& cache, const std::array<double, 2>& dlogits,
              ModelParams& grads) {
    (void)seq;
    (void)tab;
    int d_f = params.cfg.d_f;

    // Head.
    std::vector<double> dm(d_f, 0.0);
    for (int k = 0; k < 2; ++k) {
        grads.head_b.v[k] += dlogits[k];
        for (int j = 0; j < d_f; ++j) {
            grads.head_w.at(k, j) += dlogits[k] * cache.m[j];
            dm[j] += params.head_w.at(k, j) * dlogits[k];
        }
    }

    std::vector<double> dx(params.cfg.encoder.d_model, 0.0);
    if (cache.mode == CombineMode::text_only) {
        matvec_backward(params.w_x, cache.enc.x.data(), dm.data(), grads.w_x, dx.data());
    } else {
        const FusionCache& fc = cache.fusion;
        const double* a1 = params.attn_vec.v.data();
        const double* a2 = a1 + d_f;
        double slope = params.cfg.leaky_slope;

        std::array<double, 3> dcoef{};
        std::vector<double> dpx(d_f, 0.0), dpc(d_f, 0.0), dpn(d_f, 0.0);
        for (int i = 0; i < d_f; ++i) {
            dcoef[0] += dm[i] * fc.px[i];
            dcoef[1] += dm[i] * fc.pc[i];
            dcoef[2] += dm[i] * fc.pn[i];
            dpx[i] += fc.coef[0] * dm[i];
            dpc[i] += fc.coef[1] * dm[i];
            dpn[i] += fc.coef[2] * dm[i];
        }
        double dot = fc.coef[0] * dcoef[0] + fc.coef[1] * dcoef[1] + fc.coef[2] * dcoef[2];
        std::array<double, 3> dz{};
        for (int k = 0; k < 3; ++k) {
            double dscore = fc.coef[k] * (dcoef[k] - dot);
            dz[k] = dscore * leaky_relu_grad(fc.z[k], slope);
        }
        double dz_sum = dz[0] + dz[1] + dz[2];
        for (int i = 0; i < d_f; ++i) {
            // First half of a sees px in every score; second half sees the
            // branch-specific projection.
            grads.attn_vec.v[i] += dz_sum * fc.px[i];
            grads.attn_vec.v[d_f + i] +=
                dz[0] * fc.px[i] + dz[1] * fc.pc[i] + dz[2] * fc.pn[i];
            dpx[i] += dz_sum * a1[i] + dz[0] * a2[i];
            dpc[i] += dz[1] * a2[i];
            dpn[i] += dz[2] * a2[i];
        }

        std::vector<double> dc_emb(d_f, 0.0), dn_emb(d_f, 0.0);
        matvec_backward(params.w_x, cache.enc.x.data(), dpx.data(), grads.w_x, dx.data());
        matvec_backward(params.w_c, cache.cat_mlp.out.data(), dpc.data(), grads.w_c,
                        dc_emb.data());
        matvec_backward(params.w_n, cache.num_mlp.out.data(), dpn.data(), grads.w_n,
                        dn_emb.data());
        mlp_backward(params.cat_mlp, cache.cat_mlp, dc_emb, grads.cat_mlp);
        mlp_backward(params.num_mlp, cache.num_mlp, dn_emb, grads.num_mlp);
    }

    encoder_backward(params, cache.enc, dx, grads);
}

// ---------------------------------------------------------------------------
// Checkpoint IO

void ModelParams::save(const std::string& path, const std::string& header_extras) const {
    std::ostringstream out;
    out << "# persona-checkpoint v1";
    if (!header_extras.empty()) out << ' ' << header_extras;
    out << '\n';
    out << "cfg\td_model\t" << cfg.encoder.d_model << '\n';
    out << "cfg\tn_heads\t" << cfg.encoder.n_heads << '\n';
    out << "cfg\tn_layers\t" << cfg.encoder.n_layers << '\n';
    out << "cfg\tffn_multiplier\t" << cfg.encoder.ffn_multiplier << '\n';
    out << "cfg\tdropout\t" << fmt_g17(cfg.encoder.dropout) << '\n';
    out << "cfg\tcapacity\t" << cfg.encoder.capacity << '\n';
    out << "cfg\tvocab_size\t" << cfg.vocab_size << '\n';
    out << "cfg\td_f\t" << cfg.d_f << '\n';
    out << "cfg\tcat_dim\t" << cfg.cat_dim << '\n';
    out << "cfg\tnum_dim\t" << cfg.num_dim << '\n';
    out << "cfg\tmlp_division\t" << cfg.mlp_division << '\n';
    out << "cfg\tmlp_dropout\t" << fmt_g17(cfg.mlp_dropout) << '\n';
    out << "cfg\tleaky_slope\t" << fmt_g17(cfg.leaky_slope) << '\n';
    for (const auto& [name, tensor] : named_tensors()) {
        out << "tensor\t" << name << '\t' << tensor->rows << '\t' << tensor->cols << '\n';
        for (int r = 0; r < tensor->rows; ++r) {
            for (int c = 0; c < tensor->cols; ++c) {
                if (c) out << ' ';
                out << fmt_g17(tensor->at(r, c));
            }
            out << '\n';
        }
    }
    write_text_file(path, out.str());
}

ModelParams ModelParams::load(const std::string& path,
                              std::map<std::string, std::string>* header_kv) {
    if (!file_exists(path)) throw MissingArtifactError("missing checkpoint: " + path);
    std::ifstream in(path);
    if (!in) throw Error("cannot open checkpoint: " + path);
    std::string line;
    if (!std::getline(in, line) || !starts_with(line, "# persona-checkpoint v1"))
        throw Error("not a checkpoint file: " + path);
    if (header_kv) *header_kv = parse_header_kv(line);

    std::map<std::string, std::string> cfg_kv;
    std::streampos tensors_start = in.tellg();
    while (std::getline(in, line)) {
        if (!starts_with(line, "cfg\t")) break;
        auto fields = split(line, '\t');
        if (fields.size() != 3) throw Error("bad cfg line in checkpoint");
        cfg_kv[fields[1]] = fields[2];
        tensors_start = in.tellg();
    }

    ModelConfig cfg;
    auto geti = [&](const char* key) {
        if (!cfg_kv.count(key)) throw Error(std::string("checkpoint missing cfg key ") + key);
        return static_cast<int>(parse_int(cfg_kv[key], key));
    };
    auto getd = [&](const char* key) {
        if (!cfg_kv.count(key)) throw Error(std::string("checkpoint missing cfg key ") + key);
        return parse_double(cfg_kv[key], key);
    };
    cfg.encoder.d_model = geti("d_model");
    cfg.encoder.n_heads = geti("n_heads");
    cfg.encoder.n_layers = geti("n_layers");
    cfg.encoder.ffn_multiplier = geti("ffn_multiplier");
    cfg.encoder.dropout = getd("dropout");
    cfg.encoder.capacity = geti("capacity");
    cfg.vocab_size = geti("vocab_size");
    cfg.d_f = geti("d_f");
    cfg.cat_dim = geti("cat_dim");
    cfg.num_dim = geti("num_dim");
    cfg.mlp_division = geti("mlp_division");
    cfg.mlp_dropout = getd("mlp_dropout");
    cfg.leaky_slope = getd("leaky_slope");

    ModelParams params = zeros(cfg);
    std::map<std::string, Tensor*> by_name;
    for (auto& [name, tensor] : params.named_tensors()) by_name[name] = tensor;
    std::size_t loaded = 0;

    in.clear();
    in.seekg(tensors_start);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto fields = split(line, '\t');
        if (fields[0] != "tensor" || fields.size() != 4)
            throw Error("bad tensor header in checkpoint: " + line);
        auto it = by_name.find(fields[1]);
        if (it == by_name.end()) throw Error("unknown tensor in checkpoint: " + fields[1]);
        Tensor* t = it->second;
        if (t->rows != parse_int(fields[2], "rows") || t->cols != parse_int(fields[3], "cols"))
            throw Error("tensor shape mismatch for " + fields[1]);
        for (int r = 0; r < t->rows; ++r) {
            if (!std::getline(in, line))
                throw Error("checkpoint truncated in tensor " + fields[1]);
            auto values = split_ws(line);
            if (static_cast<int>(values.size()) != t->cols)
                throw Error("bad row width in tensor " + fields[1]);
            for (int c = 0; c < t->cols; ++c) t->at(r, c) = parse_double(values[c], "weight");
        }
        ++loaded;
    }
    if (loaded != by_name.size())
        throw Error("checkpoint missing tensors: expected " + std::to_string(by_name.size()) +
                    ", found " + std::to_string(loaded));
    return params;
}

}  // namespace persona

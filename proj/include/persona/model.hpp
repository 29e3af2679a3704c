#pragma once
// The hybrid classifier: a small trainable text encoder producing x, dense
// embeddings of the categorical vector c and numerical vector n, an
// attention combiner mixing the three projected branches
//   m = a_xx * Wx x + a_xc * Wc c~ + a_xn * Wn n~
// with coefficients softmaxed over LeakyReLU-scored concatenations, and a
// softmax classification head. Forward passes record caches so training can
// run exact analytic backprop.

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "persona/common.hpp"
#include "persona/tabular.hpp"
#include "persona/textprep.hpp"

namespace persona {

// Dense row-major matrix; bias vectors use cols == 1.
struct Tensor {
    int rows = 0;
    int cols = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, 0.0) {}

    double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }
    std::size_t size() const { return v.size(); }
    void zero() { std::fill(v.begin(), v.end(), 0.0); }
};

struct EncoderConfig {
    int d_model = 64;
    int n_heads = 2;
    int n_layers = 2;
    int ffn_multiplier = 2;
    double dropout = 0.0;
    int capacity = 300;
};

struct ModelConfig {
    EncoderConfig encoder;
    int vocab_size = 0;
    int d_f = 64;       // fusion dimension
    int cat_dim = 0;    // one-hot width of c
    int num_dim = 0;    // width of n
    int mlp_division = 4;
    double mlp_dropout = 0.1;
    double leaky_slope = 0.01;

    int mlp_hidden() const { return std::max(1, d_f / std::max(1, mlp_division)); }
    void check() const;
};

enum class CombineMode { text_only, attention_fusion };

CombineMode combine_mode_from_string(const std::string& s);
std::string to_string(CombineMode mode);

struct LayerParams {
    Tensor wq, wk, wv, wo;          // d_model x d_model
    Tensor bq, bk, bv, bo;          // d_model
    Tensor ln1_g, ln1_b;            // d_model
    Tensor ffn_w1, ffn_b1;          // (ffn x d_model), ffn
    Tensor ffn_w2, ffn_b2;          // (d_model x ffn), d_model
    Tensor ln2_g, ln2_b;            // d_model
};

struct MlpParams {
    Tensor w1, b1;  // hidden x in, hidden
    Tensor w2, b2;  // d_f x hidden, d_f
};

struct ModelParams {
    ModelConfig cfg;
    Tensor token_embed;   // vocab x d_model
    Tensor pos_embed;     // capacity x d_model
    std::vector<LayerParams> layers;
    MlpParams cat_mlp;    // c -> c~
    MlpParams num_mlp;    // n -> n~
    Tensor w_x;           // d_f x d_model
    Tensor w_c;           // d_f x d_f
    Tensor w_n;           // d_f x d_f
    Tensor attn_vec;      // 2*d_f  (the fusion attention vector a)
    Tensor head_w;        // 2 x d_f
    Tensor head_b;        // 2

    static ModelParams init(const ModelConfig& cfg, std::uint64_t seed);
    static ModelParams zeros(const ModelConfig& cfg);

    // Stable enumeration of every learnable tensor (gradients, optimizers,
    // checkpoints, and finite-difference checks all iterate this).
    std::vector<std::pair<std::string, Tensor*>> named_tensors();
    std::vector<std::pair<std::string, const Tensor*>> named_tensors() const;

    void save(const std::string& path, const std::string& header_extras) const;
    static ModelParams load(const std::string& path,
                            std::map<std::string, std::string>* header_kv = nullptr);
};

// Dropout masks are drawn from this during training; pass nullptr (or leave
// rates at zero) for deterministic inference.
struct DropoutCtx {
    Rng* rng = nullptr;
    bool enabled() const { return rng != nullptr; }
};

struct LayerNormCache {
    std::vector<double> rstd;  // per position
    std::vector<double> xhat;  // L x d
};

struct LayerCache {
    std::vector<double> h_in;   // L x d
    std::vector<double> q, k, v;
    std::vector<double> attn;   // heads x L x L softmax rows
    std::vector<double> ctx;    // L x d (heads concatenated)
    std::vector<double> attn_out;
    std::vector<double> attn_mask;  // dropout multipliers, empty if unused
    LayerNormCache ln1;
    std::vector<double> h_mid;  // L x d after first add&norm
    std::vector<double> ffn_z1; // L x ffn pre-activation
    std::vector<double> ffn_out;
    std::vector<double> ffn_mask;
    LayerNormCache ln2;
    std::vector<double> h_out;  // L x d
};

struct EncoderCache {
    std::size_t len = 0;        // non-pad length
    std::vector<int> ids;       // first len token ids
    std::vector<double> h0;     // len x d embedded input
    std::vector<LayerCache> layers;
    std::vector<double> x;      // pooled output, d_model
};

struct MlpCache {
    std::vector<double> in;
    std::vector<double> z1, a1;  // hidden pre/post activation
    std::vector<double> mask;    // dropout multipliers on a1
    std::vector<double> z2;      // d_f pre-activation
    std::vector<double> out;     // d_f
};

struct FusionTrace {
    std::array<double, 3> coefficients{};   // a_xx, a_xc, a_xn
    std::array<double, 3> scores{};         // pre-softmax
    std::vector<double> m;
};

struct FusionCache {
    std::vector<double> px, pc, pn;  // projected branches, d_f each
    std::array<double, 3> z{};       // LeakyReLU pre-activations
    std::array<double, 3> coef{};
};

struct ForwardCache {
    CombineMode mode = CombineMode::attention_fusion;
    EncoderCache enc;
    MlpCache cat_mlp, num_mlp;
    FusionCache fusion;
    std::vector<double> m;
    std::array<double, 2> logits{};
    std::array<double, 2> probs{};
};

struct ForwardResult {
    std::array<double, 2> probs{};
    FusionTrace trace;
};

// --- forward components -----------------------------------------------------

// Token embedding + learned positions, n_layers of post-norm transformer
// blocks, mean-pooled over non-pad positions. All-pad input yields the zero
// vector. Pad positions are dropped up front, which is equivalent to key
// masking plus non-pad pooling.
std::vector<double> encode_text(const TokenSequence& seq, const ModelParams& params,
                                EncoderCache* cache = nullptr, DropoutCtx* dropout = nullptr);

// Two-layer ReLU MLPs embedding c and n into the fusion dimension.
std::pair<std::vector<double>, std::vector<double>> embed_tabular(
    const std::vector<double>& c, const std::vector<double>& n, const ModelParams& params,
    MlpCache* cat_cache = nullptr, MlpCache* num_cache = nullptr, DropoutCtx* dropout = nullptr);

// Attention-based summation of the three projected branches; the text branch
// anchors every score.
std::pair<std::vector<double>, FusionTrace> attention_combine(const std::vector<double>& x,
                                                              const std::vector<double>& c_emb,
                                                              const std::vector<double>& n_emb,
                                                              const ModelParams& params,
                                                              FusionCache* cache = nullptr);

std::array<double, 2> classify(const std::vector<double>& m, const ModelParams& params,
                               std::array<double, 2>* logits = nullptr);

ForwardResult forward(const TokenSequence& seq, const TabularVector& tab,
                      const ModelParams& params, CombineMode mode,
                      ForwardCache* cache = nullptr, DropoutCtx* dropout = nullptr);

// Fast path for the explainer: reuses a precomputed text encoding x.
ForwardResult forward_from_encoded(const std::vector<double>& x, const TabularVector& tab,
                                   const ModelParams& params, CombineMode mode);

// Accumulates d(loss)/d(params) into `grads` for one example, given
// d(loss)/d(logits). The cache must come from a forward() call on `params`
// with the same dropout draw (or none).
void backward(const ModelParams& params, const TokenSequence& seq, const TabularVector& tab,
              const ForwardCache& cache, const std::array<double, 2>& dlogits,
              ModelParams& grads);

}  // namespace persona

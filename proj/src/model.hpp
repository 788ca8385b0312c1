#pragma once

// Transformer encoder over slot grids: nine per-channel embedding tables
// summed vertically, pre-activation attention/feed-forward blocks, and the
// three output heads (MLM over the diagnosis vocabulary, CLS classifier,
// PLOS classifier).

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "autograd.hpp"
#include "slotgrid.hpp"
#include "tensor.hpp"
#include "vocab.hpp"

namespace exbehrt {

struct ModelConfig {
    int d_model = 32;
    int n_layers = 2;
    int n_heads = 4;
    int d_ff = 0;        // 0 selects the conventional 4*d_model
    int m = 64;
    int n_proc = 1;
    int n_lab = 1;
    double dropout = 0.0;
    double ln_eps = 1e-12;
    std::array<int, kNumChannels> vocab_sizes{};

    int ff_width() const { return d_ff > 0 ? d_ff : 4 * d_model; }
    void validate() const; // throws on inconsistent dimensions

    bool operator==(const ModelConfig&) const = default;
};

struct LayerParams {
    Param ln1_g, ln1_b;
    Param wq, bq, wk, bk, wv, bv, wo, bo;
    Param ln2_g, ln2_b;
    Param w1, b1, w2, b2;
};

struct ModelParams {
    ModelConfig config;
    std::array<Param, kNumChannels> embed; // vocab_sizes[ch] x d_model each
    Param emb_ln_g, emb_ln_b;
    std::vector<LayerParams> layers;
    Param final_ln_g, final_ln_b;
    Param mlm_w, mlm_b;   // d_model x diag vocab
    Param cls_w, cls_b;   // d_model x 1
    Param plos_w, plos_b; // d_model x 1

    // Visits every parameter in a fixed declared order; checkpoints and
    // optimizer state both index by this order.
    template <class F>
    void for_each(F&& f) {
        for (auto& e : embed) f(e);
        f(emb_ln_g);
        f(emb_ln_b);
        for (auto& l : layers) {
            f(l.ln1_g); f(l.ln1_b);
            f(l.wq); f(l.bq); f(l.wk); f(l.bk); f(l.wv); f(l.bv); f(l.wo); f(l.bo);
            f(l.ln2_g); f(l.ln2_b);
            f(l.w1); f(l.b1); f(l.w2); f(l.b2);
        }
        f(final_ln_g);
        f(final_ln_b);
        f(mlm_w); f(mlm_b);
        f(cls_w); f(cls_b);
        f(plos_w); f(plos_b);
    }
};

// Truncated-normal init (std 0.02, resample beyond two sigma), zero biases,
// unit layer-norm gains. PAD embedding rows are zero and frozen.
ModelParams init_model(const ModelConfig& config, uint64_t seed);

void zero_grads(ModelParams& params);

// Deep copy (Params are move-only by default through the unique arrays).
ModelParams clone_params(const ModelParams& params);

struct EncodeResult {
    int input = -1;  // m x d summed embeddings, before the embedding layer-norm
    int hidden = -1; // m x d output of the final layer-norm
    std::vector<std::vector<int>> attn; // [layer][head] softmax probability nodes
};

// Forward pass from a token grid; embedding tables receive gradients.
EncodeResult encode_grid(Graph& g, ModelParams& params, const SlotGrid& grid, Rng* dropout_rng = nullptr);

// Forward pass from an externally built summed-embedding matrix (used by
// expected gradients, which differentiates w.r.t. this input).
EncodeResult encode_input(Graph& g, ModelParams& params, Mat summed, const std::vector<uint8_t>& mask,
                          Rng* dropout_rng = nullptr);

int mlm_logits_node(Graph& g, ModelParams& params, int hidden);  // m x diag vocab
int cls_logit_node(Graph& g, ModelParams& params, int hidden);   // 1 x 1, column 0 only
int plos_logit_node(Graph& g, ModelParams& params, int hidden);  // 1 x 1

// The per-cell embedding lookup the encoder would sum: row order matches
// channel_rows(grid). PAD cells are zero vectors.
std::vector<Mat> cell_embeddings(const ModelParams& params, const SlotGrid& grid);

// Column-wise sum of cell_embeddings, identical to the encode_grid input.
Mat summed_embedding(const ModelParams& params, const SlotGrid& grid);

// Checkpointing: magic + version + model config + encoder config + vocabulary
// + raw little-endian parameter arrays in for_each order.
struct Checkpoint {
    ModelParams params;
    Vocabulary vocab;
    EncoderConfig encoder;
};

void save_checkpoint(const std::string& path, ModelParams& params, const Vocabulary& vocab,
                     const EncoderConfig& encoder);
Checkpoint load_checkpoint(const std::string& path);
// Loads and rejects checkpoints whose model config differs from expected.
Checkpoint load_checkpoint(const std::string& path, const ModelConfig& expected);

} // namespace exbehrt

#include "model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "error.hpp"

namespace exbehrt {

void ModelConfig::validate() const {
    if (d_model <= 0 || n_layers <= 0 || n_heads <= 0) throw usage_error("model dimensions must be positive");
    if (d_model % n_heads != 0) throw usage_error("d_model must be divisible by n_heads");
    if (m < 4 || n_proc < 1 || n_lab < 1) throw usage_error("grid dimensions too small");
    if (dropout < 0.0 || dropout >= 1.0) throw usage_error("dropout must lie in [0,1)");
    for (int vs : vocab_sizes)
        if (vs < Vocabulary::kReserved) throw usage_error("vocab sizes must include the reserved ids");
}

namespace {

double truncated_normal(Rng& rng) {
    for (;;) {
        const double z = rng.gauss(0.0, 1.0);
        if (std::abs(z) <= 2.0) return z;
    }
}

void init_weight(Param& p, int rows, int cols, Rng& rng, double std_dev) {
    p = Param(rows, cols);
    for (double& v : p.value.a) v = std_dev * truncated_normal(rng);
}

void init_zeros(Param& p, int rows, int cols) { p = Param(rows, cols); }

void init_ones(Param& p, int rows, int cols) {
    p = Param(rows, cols);
    std::fill(p.value.a.begin(), p.value.a.end(), 1.0);
}

} // namespace

ModelParams init_model(const ModelConfig& config, uint64_t seed) {
    config.validate();
    ModelParams p;
    p.config = config;
    Rng rng(mix64(seed, 0x6d6f64656cULL));
    const int d = config.d_model;
    const int ff = config.ff_width();

    for (int ch = 0; ch < kNumChannels; ++ch) {
        init_weight(p.embed[ch], config.vocab_sizes[ch], d, rng, 0.02);
        // PAD must contribute nothing to the vertical sum, ever.
        for (int c = 0; c < d; ++c) p.embed[ch].value.at(Vocabulary::kPad, c) = 0.0;
        p.embed[ch].frozen_row = Vocabulary::kPad;
    }
    init_ones(p.emb_ln_g, 1, d);
    init_zeros(p.emb_ln_b, 1, d);

    p.layers.resize(static_cast<size_t>(config.n_layers));
    for (auto& l : p.layers) {
        init_ones(l.ln1_g, 1, d);
        init_zeros(l.ln1_b, 1, d);
        init_weight(l.wq, d, d, rng, 0.02);
        init_zeros(l.bq, 1, d);
        init_weight(l.wk, d, d, rng, 0.02);
        init_zeros(l.bk, 1, d);
        init_weight(l.wv, d, d, rng, 0.02);
        init_zeros(l.bv, 1, d);
        init_weight(l.wo, d, d, rng, 0.02);
        init_zeros(l.bo, 1, d);
        init_ones(l.ln2_g, 1, d);
        init_zeros(l.ln2_b, 1, d);
        init_weight(l.w1, d, ff, rng, 0.02);
        init_zeros(l.b1, 1, ff);
        init_weight(l.w2, ff, d, rng, 0.02);
        init_zeros(l.b2, 1, d);
    }
    init_ones(p.final_ln_g, 1, d);
    init_zeros(p.final_ln_b, 1, d);
    init_weight(p.mlm_w, d, config.vocab_sizes[static_cast<int>(GridChannel::Diagnosis)], rng, 0.02);
    init_zeros(p.mlm_b, 1, config.vocab_sizes[static_cast<int>(GridChannel::Diagnosis)]);
    init_weight(p.cls_w, d, 1, rng, 0.02);
    init_zeros(p.cls_b, 1, 1);
    init_weight(p.plos_w, d, 1, rng, 0.02);
    init_zeros(p.plos_b, 1, 1);
    return p;
}

void zero_grads(ModelParams& params) {
    params.for_each([](Param& p) { p.grad.zero(); });
}

ModelParams clone_params(const ModelParams& params) {
    return params; // all members are value types
}

namespace {

std::vector<Graph::EmbedRow> embedding_rows(ModelParams& params, const SlotGrid& grid) {
    std::vector<Graph::EmbedRow> rows;
    for (const auto& ref : channel_rows(grid))
        rows.push_back({&params.embed[static_cast<int>(ref.channel)], ref.ids});
    return rows;
}

EncodeResult encode_core(Graph& g, ModelParams& p, int input, const std::vector<uint8_t>& mask,
                         Rng* drng) {
    const ModelConfig& cfg = p.config;
    const int dh = cfg.d_model / cfg.n_heads;
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
    const bool drop = cfg.dropout > 0.0 && drng != nullptr;

    EncodeResult res;
    res.input = input;
    int x = g.layer_norm(input, g.param(p.emb_ln_g), g.param(p.emb_ln_b), cfg.ln_eps);
    if (drop) x = g.dropout(x, cfg.dropout, *drng);

    for (auto& l : p.layers) {
        const int a = g.layer_norm(x, g.param(l.ln1_g), g.param(l.ln1_b), cfg.ln_eps);
        const int q = g.add_bias(g.matmul(a, g.param(l.wq)), g.param(l.bq));
        const int k = g.add_bias(g.matmul(a, g.param(l.wk)), g.param(l.bk));
        const int v = g.add_bias(g.matmul(a, g.param(l.wv)), g.param(l.bv));

        std::vector<int> head_outs, head_probs;
        for (int h = 0; h < cfg.n_heads; ++h) {
            const int qh = g.slice_cols(q, h * dh, dh);
            const int kh = g.slice_cols(k, h * dh, dh);
            const int vh = g.slice_cols(v, h * dh, dh);
            const int scores = g.scale(g.matmul_nt(qh, kh), inv_sqrt_dh);
            const int probs = g.softmax_rows(scores, mask);
            head_probs.push_back(probs);
            head_outs.push_back(g.matmul(probs, vh));
        }
        int attn_out = g.add_bias(g.matmul(g.concat_cols(head_outs), g.param(l.wo)), g.param(l.bo));
        if (drop) attn_out = g.dropout(attn_out, cfg.dropout, *drng);
        x = g.add(x, attn_out);

        const int b = g.layer_norm(x, g.param(l.ln2_g), g.param(l.ln2_b), cfg.ln_eps);
        int f = g.gelu(g.add_bias(g.matmul(b, g.param(l.w1)), g.param(l.b1)));
        f = g.add_bias(g.matmul(f, g.param(l.w2)), g.param(l.b2));
        if (drop) f = g.dropout(f, cfg.dropout, *drng);
        x = g.add(x, f);

        res.attn.push_back(std::move(head_probs));
    }
    res.hidden = g.layer_norm(x, g.param(p.final_ln_g), g.param(p.final_ln_b), cfg.ln_eps);
    return res;
}

void check_grid_shape(const ModelConfig& cfg, const SlotGrid& grid) {
    if (grid.m != cfg.m || grid.n_proc != cfg.n_proc || grid.n_lab != cfg.n_lab)
        throw internal_error("shape mismatch: grid does not match model config");
}

} // namespace

EncodeResult encode_grid(Graph& g, ModelParams& params, const SlotGrid& grid, Rng* dropout_rng) {
    check_grid_shape(params.config, grid);
    const int input = g.embed_sum(embedding_rows(params, grid), params.config.d_model, Vocabulary::kPad);
    std::vector<uint8_t> mask(grid.mask.begin(), grid.mask.end());
    return encode_core(g, params, input, mask, dropout_rng);
}

EncodeResult encode_input(Graph& g, ModelParams& params, Mat summed, const std::vector<uint8_t>& mask,
                          Rng* dropout_rng) {
    if (summed.rows != params.config.m || summed.cols != params.config.d_model)
        throw internal_error("shape mismatch: summed embedding does not match model config");
    const int input = g.leaf(std::move(summed), true);
    return encode_core(g, params, input, mask, dropout_rng);
}

int mlm_logits_node(Graph& g, ModelParams& params, int hidden) {
    return g.add_bias(g.matmul(hidden, g.param(params.mlm_w)), g.param(params.mlm_b));
}

int cls_logit_node(Graph& g, ModelParams& params, int hidden) {
    return g.add_bias(g.matmul(g.row(hidden, 0), g.param(params.cls_w)), g.param(params.cls_b));
}

int plos_logit_node(Graph& g, ModelParams& params, int hidden) {
    return g.add_bias(g.matmul(g.row(hidden, 0), g.param(params.plos_w)), g.param(params.plos_b));
}

std::vector<Mat> cell_embeddings(const ModelParams& params, const SlotGrid& grid) {
    check_grid_shape(params.config, grid);
    const int d = params.config.d_model;
    std::vector<Mat> cells;
    for (const auto& ref : channel_rows(grid)) {
        Mat block(grid.m, d);
        const Mat& table = params.embed[static_cast<int>(ref.channel)].value;
        for (int j = 0; j < grid.m; ++j) {
            const int id = (*ref.ids)[j];
            if (id == Vocabulary::kPad) continue;
            std::copy(table.row(id), table.row(id) + d, block.row(j));
        }
        cells.push_back(std::move(block));
    }
    return cells;
}

Mat summed_embedding(const ModelParams& params, const SlotGrid& grid) {
    Mat sum(grid.m, params.config.d_model);
    for (const Mat& block : cell_embeddings(params, grid))
        for (size_t i = 0; i < sum.size(); ++i) sum.a[i] += block.a[i];
    return sum;
}

// ---- checkpoint serialization ----

namespace {

constexpr char kMagic[8] = {'E', 'X', 'B', 'C', 'H', 'K', 'P', '1'};
constexpr uint32_t kVersion = 1;

void put_bytes(std::ostream& os, const void* p, size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    put_bytes(os, b, 4);
}

void put_u64(std::ostream& os, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    put_bytes(os, b, 8);
}

void put_i32(std::ostream& os, int32_t v) { put_u32(os, static_cast<uint32_t>(v)); }
void put_f64(std::ostream& os, double v) { put_u64(os, std::bit_cast<uint64_t>(v)); }
void put_u8(std::ostream& os, uint8_t v) { put_bytes(os, &v, 1); }

void put_str(std::ostream& os, const std::string& s) {
    put_u32(os, static_cast<uint32_t>(s.size()));
    put_bytes(os, s.data(), s.size());
}

void get_bytes(std::istream& is, void* p, size_t n) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(is.gcount()) != n) throw data_error("corrupt checkpoint: truncated file");
}

uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    get_bytes(is, b, 4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
    return v;
}

uint64_t get_u64(std::istream& is) {
    unsigned char b[8];
    get_bytes(is, b, 8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}

int32_t get_i32(std::istream& is) { return static_cast<int32_t>(get_u32(is)); }
double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }
uint8_t get_u8(std::istream& is) {
    uint8_t v;
    get_bytes(is, &v, 1);
    return v;
}

std::string get_str(std::istream& is) {
    const uint32_t n = get_u32(is);
    if (n > (1u << 20)) throw data_error("corrupt checkpoint: oversized string");
    std::string s(n, '\0');
    if (n) get_bytes(is, s.data(), n);
    return s;
}

void put_config(std::ostream& os, const ModelConfig& c) {
    put_i32(os, c.d_model);
    put_i32(os, c.n_layers);
    put_i32(os, c.n_heads);
    put_i32(os, c.d_ff);
    put_i32(os, c.m);
    put_i32(os, c.n_proc);
    put_i32(os, c.n_lab);
    put_f64(os, c.dropout);
    put_f64(os, c.ln_eps);
    for (int vs : c.vocab_sizes) put_i32(os, vs);
}

ModelConfig get_config(std::istream& is) {
    ModelConfig c;
    c.d_model = get_i32(is);
    c.n_layers = get_i32(is);
    c.n_heads = get_i32(is);
    c.d_ff = get_i32(is);
    c.m = get_i32(is);
    c.n_proc = get_i32(is);
    c.n_lab = get_i32(is);
    c.dropout = get_f64(is);
    c.ln_eps = get_f64(is);
    for (int& vs : c.vocab_sizes) vs = get_i32(is);
    return c;
}

void put_encoder(std::ostream& os, const EncoderConfig& e) {
    put_i32(os, e.m);
    put_i32(os, e.n_proc);
    put_i32(os, e.n_lab);
    put_f64(os, e.percentile);
    put_u8(os, e.include_procedures ? 1 : 0);
    put_u8(os, e.include_labs ? 1 : 0);
    put_u8(os, e.include_observations ? 1 : 0);
    put_u8(os, e.fitted ? 1 : 0);
}

EncoderConfig get_encoder(std::istream& is) {
    EncoderConfig e;
    e.m = get_i32(is);
    e.n_proc = get_i32(is);
    e.n_lab = get_i32(is);
    e.percentile = get_f64(is);
    e.include_procedures = get_u8(is) != 0;
    e.include_labs = get_u8(is) != 0;
    e.include_observations = get_u8(is) != 0;
    e.fitted = get_u8(is) != 0;
    return e;
}

void put_vocab(std::ostream& os, const Vocabulary& vocab) {
    for (int ch = 0; ch < kNumChannels; ++ch) {
        const auto channel = static_cast<GridChannel>(ch);
        put_u32(os, static_cast<uint32_t>(vocab.code_count(channel)));
        for (int id = Vocabulary::kReserved; id < vocab.size(channel); ++id)
            put_str(os, vocab.decode(channel, id));
    }
}

Vocabulary get_vocab(std::istream& is) {
    Vocabulary vocab;
    for (int ch = 0; ch < kNumChannels; ++ch) {
        const auto channel = static_cast<GridChannel>(ch);
        const uint32_t count = get_u32(is);
        if (count > (1u << 24)) throw data_error("corrupt checkpoint: oversized vocabulary");
        for (uint32_t i = 0; i < count; ++i) vocab.add(channel, get_str(is));
    }
    return vocab;
}

} // namespace

void save_checkpoint(const std::string& path, ModelParams& params, const Vocabulary& vocab,
                     const EncoderConfig& encoder) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw data_error("cannot open checkpoint for writing: " + path);
    put_bytes(os, kMagic, sizeof kMagic);
    put_u32(os, kVersion);
    put_config(os, params.config);
    put_encoder(os, encoder);
    put_vocab(os, vocab);
    params.for_each([&](Param& p) {
        put_u32(os, static_cast<uint32_t>(p.value.rows));
        put_u32(os, static_cast<uint32_t>(p.value.cols));
        for (double v : p.value.a) put_f64(os, v);
    });
    if (!os) throw data_error("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw data_error("cannot open checkpoint: " + path);
    char magic[8];
    get_bytes(is, magic, sizeof magic);
    if (std::memcmp(magic, kMagic, sizeof magic) != 0)
        throw data_error("corrupt checkpoint: bad magic in " + path);
    if (get_u32(is) != kVersion) throw data_error("corrupt checkpoint: unsupported version in " + path);

    Checkpoint ckpt;
    const ModelConfig config = get_config(is);
    ckpt.encoder = get_encoder(is);
    ckpt.vocab = get_vocab(is);
    ckpt.params = init_model(config, 0);
    ckpt.params.for_each([&](Param& p) {
        const uint32_t rows = get_u32(is);
        const uint32_t cols = get_u32(is);
        if (rows != static_cast<uint32_t>(p.value.rows) || cols != static_cast<uint32_t>(p.value.cols))
            throw data_error("corrupt checkpoint: parameter shape mismatch in " + path);
        for (double& v : p.value.a) v = get_f64(is);
    });
    is.peek();
    if (!is.eof()) throw data_error("corrupt checkpoint: trailing bytes in " + path);
    return ckpt;
}

Checkpoint load_checkpoint(const std::string& path, const ModelConfig& expected) {
    Checkpoint ckpt = load_checkpoint(path);
    if (!(ckpt.params.config == expected))
        throw data_error("checkpoint config mismatch: " + path);
    return ckpt;
}

} // namespace exbehrt

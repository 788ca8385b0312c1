#include "autograd.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "error.hpp"

namespace exbehrt {

namespace {
constexpr double kMaskLogit = -1e9;
constexpr double kProbFloor = 1e-12;
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
} // namespace

int Graph::leaf(Mat m, bool /*needs_grad*/) { return push(std::move(m)); }

int Graph::param(Param& p) {
    const int id = push(p.value);
    nodes_[id].bound = &p;
    return id;
}

int Graph::embed_sum(const std::vector<EmbedRow>& rows, int d_model, int pad_id) {
    if (rows.empty()) throw internal_error("embed_sum needs at least one channel row");
    const int m = static_cast<int>(rows[0].ids->size());
    Mat out(m, d_model);
    for (const auto& er : rows) {
        if (static_cast<int>(er.ids->size()) != m) throw internal_error("embed_sum ragged rows");
        if (er.table->value.cols != d_model) throw internal_error("embed_sum table width mismatch");
        for (int j = 0; j < m; ++j) {
            const int id = (*er.ids)[j];
            if (id == pad_id) continue;
            if (id < 0 || id >= er.table->value.rows) throw internal_error("embed_sum id out of range");
            const double* src = er.table->value.row(id);
            double* dst = out.row(j);
            for (int c = 0; c < d_model; ++c) dst[c] += src[c];
        }
    }
    const int id = push(std::move(out));
    nodes_[id].back = [id, rows, d_model, pad_id](Graph& gr) {
        const Mat& go = gr.g(id);
        for (const auto& er : rows) {
            for (int j = 0; j < go.rows; ++j) {
                const int tok = (*er.ids)[j];
                if (tok == pad_id) continue;
                const double* src = go.row(j);
                double* dst = er.table->grad.row(tok);
                for (int c = 0; c < d_model; ++c) dst[c] += src[c];
            }
        }
    };
    return id;
}

int Graph::add(int a, int b) {
    if (!v(a).same_shape(v(b))) throw internal_error("add shape mismatch");
    Mat out = v(a);
    for (size_t i = 0; i < out.size(); ++i) out.a[i] += v(b).a[i];
    const int id = push(std::move(out));
    nodes_[id].back = [id, a, b](Graph& gr) {
        const Mat& go = gr.g(id);
        Mat& ga = gr.g(a);
        Mat& gb = gr.g(b);
        for (size_t i = 0; i < go.size(); ++i) {
            ga.a[i] += go.a[i];
            gb.a[i] += go.a[i];
        }
    };
    return id;
}

int Graph::add_bias(int x, int bias) {
    const Mat& xb = v(bias);
    if (xb.rows != 1 || xb.cols != v(x).cols) throw internal_error("add_bias shape mismatch");
    Mat out = v(x);
    for (int r = 0; r < out.rows; ++r) {
        double* orow = out.row(r);
        for (int c = 0; c < out.cols; ++c) orow[c] += xb.a[c];
    }
    const int id = push(std::move(out));
    nodes_[id].back = [id, x, bias](Graph& gr) {
        const Mat& go = gr.g(id);
        Mat& gx = gr.g(x);
        Mat& gb = gr.g(bias);
        for (size_t i = 0; i < go.size(); ++i) gx.a[i] += go.a[i];
        for (int r = 0; r < go.rows; ++r) {
            const double* grow = go.row(r);
            for (int c = 0; c < go.cols; ++c) gb.a[c] += grow[c];
        }
    };
    return id;
}

int Graph::matmul(int a, int b) {
    Mat out(v(a).rows, v(b).cols);
    matmul_acc(v(a), v(b), out);
    const int id = push(std::move(out));
    nodes_[id].back = [id, a, b](Graph& gr) {
        // dA += dC * B^T; dB += A^T * dC
        matmul_nt_acc(gr.g(id), gr.v(b), gr.g(a));
        matmul_tn_acc(gr.v(a), gr.g(id), gr.g(b));
    };
    return id;
}

int Graph::matmul_nt(int a, int b) {
    Mat out(v(a).rows, v(b).rows);
    matmul_nt_acc(v(a), v(b), out);
    const int id = push(std::move(out));
    nodes_[id].back = [id, a, b](Graph& gr) {
        // C = A * B^T: dA += dC * B; dB += dC^T * A
        matmul_acc(gr.g(id), gr.v(b), gr.g(a));
        matmul_tn_acc(gr.g(id), gr.v(a), gr.g(b));
    };
    return id;
}

int Graph::scale(int a, double s) {
    Mat out = v(a);
    for (double& x : out.a) x *= s;
    const int id = push(std::move(out));
    nodes_[id].back = [id, a, s](Graph& gr) {
        const Mat& go = gr.g(id);
        Mat& ga = gr.g(a);
        for (size_t i = 0; i < go.size(); ++i) ga.a[i] += s * go.a[i];
    };
    return id;
}

int Graph::gelu(int a) {
    Mat out = v(a);
    for (double& x : out.a) x = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
    const int id = push(std::move(out));
    nodes_[id].back = [id, a](Graph& gr) {
        const Mat& go = gr.g(id);
        const Mat& in = gr.v(a);
        Mat& ga = gr.g(a);
        for (size_t i = 0; i < go.size(); ++i) {
            const double x = in.a[i];
            const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
            const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
            ga.a[i] += go.a[i] * (cdf + x * pdf);
        }
    };
    return id;
}

int Graph::layer_norm(int x, int gamma, int beta, double eps) {
    const Mat& in = v(x);
    const Mat& gm = v(gamma);
    const Mat& bt = v(beta);
    if (gm.rows != 1 || gm.cols != in.cols || bt.rows != 1 || bt.cols != in.cols)
        throw internal_error("layer_norm shape mismatch");
    Mat out(in.rows, in.cols);
    for (int r = 0; r < in.rows; ++r) {
        const double* irow = in.row(r);
        double mu = 0.0;
        for (int c = 0; c < in.cols; ++c) mu += irow[c];
        mu /= in.cols;
        double var = 0.0;
        for (int c = 0; c < in.cols; ++c) {
            const double d = irow[c] - mu;
            var += d * d;
        }
        var /= in.cols;
        const double inv = 1.0 / std::sqrt(var + eps);
        double* orow = out.row(r);
        for (int c = 0; c < in.cols; ++c) orow[c] = gm.a[c] * (irow[c] - mu) * inv + bt.a[c];
    }
    const int id = push(std::move(out));
    nodes_[id].back = [id, x, gamma, beta, eps](Graph& gr) {
        const Mat& go = gr.g(id);
        const Mat& in = gr.v(x);
        const Mat& gm = gr.v(gamma);
        Mat& gx = gr.g(x);
        Mat& ggamma = gr.g(gamma);
        Mat& gbeta = gr.g(beta);
        const int n = in.cols;
        std::vector<double> xhat(static_cast<size_t>(n));
        for (int r = 0; r < in.rows; ++r) {
            const double* irow = in.row(r);
            const double* grow = go.row(r);
            double mu = 0.0;
            for (int c = 0; c < n; ++c) mu += irow[c];
            mu /= n;
            double var = 0.0;
            for (int c = 0; c < n; ++c) {
                const double d = irow[c] - mu;
                var += d * d;
            }
            var /= n;
            const double inv = 1.0 / std::sqrt(var + eps);
            double sum_gy = 0.0, sum_gyx = 0.0;
            for (int c = 0; c < n; ++c) {
                xhat[c] = (irow[c] - mu) * inv;
                const double gy = grow[c] * gm.a[c];
                sum_gy += gy;
                sum_gyx += gy * xhat[c];
                ggamma.a[c] += grow[c] * xhat[c];
                gbeta.a[c] += grow[c];
            }
            double* gxrow = gx.row(r);
            for (int c = 0; c < n; ++c) {
                const double gy = grow[c] * gm.a[c];
                gxrow[c] += (gy - sum_gy / n - xhat[c] * sum_gyx / n) * inv;
            }
        }
    };
    return id;
}

int Graph::softmax_rows(int scores, const std::vector<uint8_t>& key_mask) {
    const Mat& in = v(scores);
    if (static_cast<int>(key_mask.size()) != in.cols) throw internal_error("softmax mask length mismatch");
    Mat out(in.rows, in.cols);
    for (int r = 0; r < in.rows; ++r) {
        const double* irow = in.row(r);
        double mx = -INFINITY;
        for (int c = 0; c < in.cols; ++c) {
            const double s = irow[c] + (key_mask[c] ? 0.0 : kMaskLogit);
            if (s > mx) mx = s;
        }
        double total = 0.0;
        double* orow = out.row(r);
        for (int c = 0; c < in.cols; ++c) {
            const double s = irow[c] + (key_mask[c] ? 0.0 : kMaskLogit);
            orow[c] = std::exp(s - mx);
            total += orow[c];
        }
        if (total > 0.0)
            for (int c = 0; c < in.cols; ++c) orow[c] /= total;
    }
    const int id = push(std::move(out));
    nodes_[id].back = [id, scores](Graph& gr) {
        const Mat& go = gr.g(id);
        const Mat& p = gr.v(id);
        Mat& gs = gr.g(scores);
        for (int r = 0; r < p.rows; ++r) {
            const double* prow = p.row(r);
            const double* grow = go.row(r);
            double dot = 0.0;
            for (int c = 0; c < p.cols; ++c) dot += prow[c] * grow[c];
            double* gsrow = gs.row(r);
            for (int c = 0; c < p.cols; ++c) gsrow[c] += prow[c] * (grow[c] - dot);
        }
    };
    return id;
}

int Graph::slice_cols(int a, int c0, int width) {
    const Mat& in = v(a);
    if (c0 < 0 || c0 + width > in.cols) throw internal_error("slice_cols out of range");
    Mat out(in.rows, width);
    for (int r = 0; r < in.rows; ++r)
        std::copy(in.row(r) + c0, in.row(r) + c0 + width, out.row(r));
    const int id = push(std::move(out));
    nodes_[id].back = [id, a, c0, width](Graph& gr) {
        const Mat& go = gr.g(id);
        Mat& ga = gr.g(a);
        for (int r = 0; r < go.rows; ++r) {
            const double* grow = go.row(r);
            double* garow = ga.row(r) + c0;
            for (int c = 0; c < width; ++c) garow[c] += grow[c];
        }
    };
    return id;
}

int Graph::concat_cols(const std::vector<int>& parts) {
    if (parts.empty()) throw internal_error("concat_cols of nothing");
    const int rows = v(parts[0]).rows;
    int cols = 0;
    for (int p : parts) {
        if (v(p).rows != rows) throw internal_error("concat_cols row mismatch");
        cols += v(p).cols;
    }
    Mat out(rows, cols);
    int off = 0;
    for (int p : parts) {
        const Mat& in = v(p);
        for (int r = 0; r < rows; ++r)
            std::copy(in.row(r), in.row(r) + in.cols, out.row(r) + off);
        off += in.cols;
    }
    const int id = push(std::move(out));
    nodes_[id].back = [id, parts](Graph& gr) {
        const Mat& go = gr.g(id);
        int off = 0;
        for (int p : parts) {
            Mat& gp = gr.g(p);
            for (int r = 0; r < go.rows; ++r) {
                const double* grow = go.row(r) + off;
                double* gprow = gp.row(r);
                for (int c = 0; c < gp.cols; ++c) gprow[c] += grow[c];
            }
            off += gp.cols;
        }
    };
    return id;
}

int Graph::row(int a, int r) {
    const Mat& in = v(a);
    if (r < 0 || r >= in.rows) throw internal_error("row index out of range");
    Mat out(1, in.cols);
    std::copy(in.row(r), in.row(r) + in.cols, out.row(0));
    const int id = push(std::move(out));
    nodes_[id].back = [id, a, r](Graph& gr) {
        const Mat& go = gr.g(id);
        double* garow = gr.g(a).row(r);
        for (int c = 0; c < go.cols; ++c) garow[c] += go.a[c];
    };
    return id;
}

int Graph::dropout(int a, double p, Rng& rng) {
    if (p <= 0.0) return a;
    if (p >= 1.0) throw internal_error("dropout rate must be below 1");
    const Mat& in = v(a);
    const double keep = 1.0 - p;
    auto mask = std::make_shared<std::vector<double>>(in.size());
    Mat out = in;
    for (size_t i = 0; i < out.size(); ++i) {
        (*mask)[i] = rng.bernoulli(p) ? 0.0 : 1.0 / keep;
        out.a[i] *= (*mask)[i];
    }
    const int id = push(std::move(out));
    nodes_[id].back = [id, a, mask](Graph& gr) {
        const Mat& go = gr.g(id);
        Mat& ga = gr.g(a);
        for (size_t i = 0; i < go.size(); ++i) ga.a[i] += go.a[i] * (*mask)[i];
    };
    return id;
}

int Graph::masked_ce(int logits, const std::vector<int>& targets) {
    const Mat& in = v(logits);
    if (static_cast<int>(targets.size()) != in.rows) throw internal_error("masked_ce target length mismatch");
    int selected = 0;
    for (int t : targets) selected += t >= 0 ? 1 : 0;
    if (selected == 0) throw data_error("empty masking plan: no selected positions");

    // Per selected row: softmax probabilities kept for the backward pass.
    auto probs = std::make_shared<Mat>(in.rows, in.cols);
    double loss = 0.0;
    for (int r = 0; r < in.rows; ++r) {
        const int t = targets[r];
        if (t < 0) continue;
        if (t >= in.cols) throw internal_error("masked_ce target out of range");
        const double* irow = in.row(r);
        double mx = irow[0];
        for (int c = 1; c < in.cols; ++c) mx = std::max(mx, irow[c]);
        double total = 0.0;
        double* prow = probs->row(r);
        for (int c = 0; c < in.cols; ++c) {
            prow[c] = std::exp(irow[c] - mx);
            total += prow[c];
        }
        for (int c = 0; c < in.cols; ++c) prow[c] /= total;
        loss -= std::log(std::max(prow[t], kProbFloor));
    }
    loss /= selected;

    const int id = push(Mat(1, 1, loss));
    const auto tgt = std::make_shared<std::vector<int>>(targets);
    nodes_[id].back = [id, logits, probs, tgt, selected](Graph& gr) {
        const double up = gr.g(id).a[0] / selected;
        Mat& gl = gr.g(logits);
        for (int r = 0; r < gl.rows; ++r) {
            const int t = (*tgt)[r];
            if (t < 0) continue;
            const double* prow = probs->row(r);
            double* grow = gl.row(r);
            for (int c = 0; c < gl.cols; ++c) grow[c] += up * (prow[c] - (c == t ? 1.0 : 0.0));
        }
    };
    return id;
}

int Graph::binary_focal(int logit, int label, double gamma, double alpha) {
    const Mat& in = v(logit);
    if (in.rows != 1 || in.cols != 1) throw internal_error("binary_focal expects a scalar logit");
    const double z = in.a[0];
    const double p = 1.0 / (1.0 + std::exp(-z));
    double pt = label ? p : 1.0 - p;
    pt = std::min(std::max(pt, kProbFloor), 1.0 - kProbFloor);
    const double one_minus = 1.0 - pt;
    const double loss = -alpha * std::pow(one_minus, gamma) * std::log(pt);

    const int id = push(Mat(1, 1, loss));
    nodes_[id].back = [id, logit, label, gamma, alpha, p, pt, one_minus](Graph& gr) {
        // dL/dpt, with the gamma=0 power term handled explicitly.
        const double pow_g = std::pow(one_minus, gamma);
        const double pow_g1 = gamma > 0.0 ? gamma * std::pow(one_minus, gamma - 1.0) : 0.0;
        const double dL_dpt = alpha * (pow_g1 * std::log(pt) - pow_g / pt);
        const double dpt_dz = (label ? 1.0 : -1.0) * p * (1.0 - p);
        gr.g(logit).a[0] += gr.g(id).a[0] * dL_dpt * dpt_dz;
    };
    return id;
}

void Graph::backward(int loss_id) {
    if (consumed_) throw internal_error("graph consumed: backward may run once per recorded forward");
    consumed_ = true;
    const Mat& loss = v(loss_id);
    if (loss.rows != 1 || loss.cols != 1) throw internal_error("backward needs a scalar loss");
    nodes_[loss_id].grad.a[0] = 1.0;
    for (int i = loss_id; i >= 0; --i)
        if (nodes_[i].back) nodes_[i].back(*this);
    for (auto& n : nodes_) {
        if (!n.bound) continue;
        Mat& acc = n.bound->grad;
        for (size_t i = 0; i < acc.size(); ++i) acc.a[i] += n.grad.a[i];
    }
}

} // namespace exbehrt

#pragma once

// Tape-based reverse-mode differentiation over Mat. Nodes are created in
// topological order by construction; backward walks the tape in reverse.
// A graph is single-use: building it records the forward pass, backward()
// consumes it.

#include <cstdint>
#include <functional>
#include <vector>

#include "rng.hpp"
#include "tensor.hpp"

namespace exbehrt {

class Graph {
public:
    // Leaf holding a copy of m. With needs_grad, grad(id) is meaningful
    // after backward (used for attribution inputs).
    int leaf(Mat m, bool needs_grad = false);

    // Leaf bound to a trainable parameter: after backward, the node's
    // gradient is accumulated into p.grad.
    int param(Param& p);

    // Sum of per-channel-row embedding lookups, one output row per grid
    // column. PAD cells contribute nothing and their table rows get no
    // gradient.
    struct EmbedRow {
        Param* table;
        const std::vector<int>* ids; // one id per column
    };
    int embed_sum(const std::vector<EmbedRow>& rows, int d_model, int pad_id);

    int add(int a, int b);                  // elementwise, same shape
    int add_bias(int x, int bias);          // bias is 1 x cols, broadcast over rows
    int matmul(int a, int b);               // a: r x k, b: k x c
    int matmul_nt(int a, int b);            // a: r x k, b: c x k -> r x c
    int scale(int a, double s);
    int gelu(int a);                        // exact erf form
    int layer_norm(int x, int gamma, int beta, double eps); // per row over cols
    // softmax of (scores + additive mask) per row; masked keys get -1e9.
    int softmax_rows(int scores, const std::vector<uint8_t>& key_mask);
    int slice_cols(int a, int c0, int width);
    int concat_cols(const std::vector<int>& parts);
    int row(int a, int r);                  // 1 x cols view copy
    int dropout(int a, double p, Rng& rng); // inverted dropout; p=0 is identity

    // Mean cross-entropy over rows where target >= 0; softmax applied to
    // logits per row. Throws EmptyPlan if no row is selected.
    int masked_ce(int logits, const std::vector<int>& targets);

    // Binary focal loss -alpha*(1-p_t)^gamma*ln(p_t) on a single pre-sigmoid
    // logit. gamma=0, alpha=1 is plain cross-entropy.
    int binary_focal(int logit, int label, double gamma, double alpha);

    const Mat& value(int id) const { return nodes_[id].val; }
    const Mat& grad(int id) const { return nodes_[id].grad; }

    // Seeds d(loss)=1 and sweeps the tape once; throws GraphConsumed on a
    // second call.
    void backward(int loss_id);

    size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Mat val;
        Mat grad;
        std::function<void(Graph&)> back;
        Param* bound = nullptr;
    };

    int push(Mat val) {
        Node n;
        n.grad = Mat(val.rows, val.cols);
        n.val = std::move(val);
        nodes_.push_back(std::move(n));
        return static_cast<int>(nodes_.size()) - 1;
    }

    Mat& g(int id) { return nodes_[id].grad; }
    const Mat& v(int id) const { return nodes_[id].val; }

    std::vector<Node> nodes_;
    bool consumed_ = false;
};

} // namespace exbehrt

#include "attribution.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "error.hpp"
#include "rng.hpp"

namespace exbehrt {

double SignedAttribution::total() const {
    double t = 0.0;
    for (const auto& mat : per_row)
        for (double v : mat.a) t += v;
    return t;
}

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

double scalar_head_value(ModelParams& params, const SlotGrid& grid, ScalarHeadFn head) {
    Graph g;
    const EncodeResult er = encode_grid(g, params, grid);
    return g.value(head(g, params, er.hidden)).a[0];
}

void check_geometry(const SlotGrid& x, const SlotGrid& b) {
    if (b.m != x.m || b.n_proc != x.n_proc || b.n_lab != x.n_lab)
        throw usage_error("background grid geometry differs from the explained grid");
}

} // namespace

AttributionReport expected_gradients(ModelParams& params, const SlotGrid& grid,
                                     const std::vector<SlotGrid>& background, int k, uint64_t seed,
                                     ScalarHeadFn head, SignedAttribution* signed_out) {
    if (k < 1) throw usage_error("expected gradients needs k >= 1");
    if (background.empty()) throw data_error("empty background: expected gradients needs baseline grids");
    for (const auto& b : background) check_geometry(grid, b);

    const int d = params.config.d_model;
    const int rows = grid.rows();
    const std::vector<Mat> ex = cell_embeddings(params, grid);

    std::vector<std::vector<Mat>> eb;
    eb.reserve(background.size());
    for (const auto& b : background) eb.push_back(cell_embeddings(params, b));

    Rng rng(mix64(seed, 0x65677261ULL));
    std::vector<size_t> order(background.size());
    std::iota(order.begin(), order.end(), size_t{0});
    rng.shuffle(order);

    std::vector<Mat> acc(rows, Mat(grid.m, d));
    for (int i = 0; i < k; ++i) {
        const std::vector<Mat>& base = eb[order[i % order.size()]];
        const double alpha = (i + rng.uniform()) / k;

        Mat summed(grid.m, d);
        for (int r = 0; r < rows; ++r)
            for (size_t j = 0; j < summed.a.size(); ++j)
                summed.a[j] += base[r].a[j] + alpha * (ex[r].a[j] - base[r].a[j]);

        Graph g;
        const EncodeResult er = encode_input(g, params, std::move(summed), grid.mask);
        g.backward(head(g, params, er.hidden));
        const Mat& gin = g.grad(er.input);
        for (int r = 0; r < rows; ++r)
            for (size_t j = 0; j < gin.a.size(); ++j)
                acc[r].a[j] += (ex[r].a[j] - base[r].a[j]) * gin.a[j];
    }
    for (auto& mat : acc)
        for (double& v : mat.a) v /= k;

    AttributionReport report;
    report.k = k;
    report.seed = seed;
    report.row_refs = channel_rows(grid);
    report.per_cell = Mat(rows, grid.m);
    report.per_slot = Mat(kNumChannels, grid.m);
    for (int r = 0; r < rows; ++r) {
        const int ch = static_cast<int>(report.row_refs[r].channel);
        for (int c = 0; c < grid.m; ++c) {
            double cell = 0.0;
            for (int j = 0; j < d; ++j) cell += std::fabs(acc[r].at(c, j));
            report.per_cell.at(r, c) = cell;
            report.per_slot.at(ch, c) += cell;
            report.per_feature[ch] += cell;
        }
    }

    report.f_x = scalar_head_value(params, grid, head);
    double fb = 0.0;
    for (const auto& b : background) fb += scalar_head_value(params, b, head);
    report.f_background_mean = fb / background.size();

    if (signed_out) signed_out->per_row = std::move(acc);
    return report;
}

std::string attribution_to_json(const AttributionReport& report) {
    std::ostringstream os;
    os << "{\n";
    os << "  \"patient_id\": \"" << report.patient_id << "\",\n";
    os << "  \"checkpoint_id\": \"" << report.checkpoint_id << "\",\n";
    os << "  \"k\": " << report.k << ",\n";
    os << "  \"seed\": " << report.seed << ",\n";
    os << "  \"f_x\": " << fmt(report.f_x) << ",\n";
    os << "  \"f_background_mean\": " << fmt(report.f_background_mean) << ",\n";
    os << "  \"per_feature\": {";
    for (int ch = 0; ch < kNumChannels; ++ch) {
        if (ch) os << ", ";
        os << '"' << to_string(static_cast<GridChannel>(ch)) << "\": " << fmt(report.per_feature[ch]);
    }
    os << "},\n";
    os << "  \"per_slot\": {";
    for (int ch = 0; ch < kNumChannels; ++ch) {
        if (ch) os << ", ";
        os << '"' << to_string(static_cast<GridChannel>(ch)) << "\": [";
        for (int c = 0; c < report.per_slot.cols; ++c) {
            if (c) os << ", ";
            os << fmt(report.per_slot.at(ch, c));
        }
        os << ']';
    }
    os << "},\n";
    os << "  \"per_cell\": [";
    for (int r = 0; r < report.per_cell.rows; ++r) {
        if (r) os << ", ";
        os << "{\"row\": \"" << channel_row_label(report.row_refs[r]) << "\", \"values\": [";
        for (int c = 0; c < report.per_cell.cols; ++c) {
            if (c) os << ", ";
            os << fmt(report.per_cell.at(r, c));
        }
        os << "]}";
    }
    os << "]\n}\n";
    return os.str();
}

std::string attribution_to_csv(const AttributionReport& report) {
    std::ostringstream os;
    os << "channel";
    for (int c = 0; c < report.per_slot.cols; ++c) os << ",slot_" << c;
    os << '\n';
    for (int ch = 0; ch < kNumChannels; ++ch) {
        os << to_string(static_cast<GridChannel>(ch));
        for (int c = 0; c < report.per_slot.cols; ++c) os << ',' << fmt(report.per_slot.at(ch, c));
        os << '\n';
    }
    return os.str();
}

AttentionMap attention_map(ModelParams& params, const SlotGrid& grid, int layer_index) {
    if (layer_index < 0 || layer_index >= params.config.n_layers)
        throw usage_error("layer index out of range: model has " +
                          std::to_string(params.config.n_layers) + " layers");

    Graph g;
    const EncodeResult er = encode_grid(g, params, grid);

    AttentionMap map;
    map.layer = layer_index;
    map.key_mask = grid.mask;
    map.mean = Mat(grid.m, grid.m);
    for (int node : er.attn[layer_index]) {
        const Mat& probs = g.value(node);
        for (size_t j = 0; j < map.mean.a.size(); ++j) map.mean.a[j] += probs.a[j];
        map.heads.push_back(probs);
    }
    const double inv = 1.0 / static_cast<double>(map.heads.size());
    for (double& v : map.mean.a) v *= inv;
    return map;
}

} // namespace exbehrt

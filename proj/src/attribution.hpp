#pragma once

// Expected-gradients attribution at the embedding level, aggregated to
// per-cell, per-channel, and per-slot views, plus attention extraction.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "model.hpp"

namespace exbehrt {

// Signed per-coordinate attribution means, kept for the completeness check
// and the linear-model test. One m x d_model matrix per grid row.
struct SignedAttribution {
    std::vector<Mat> per_row;
    double total() const;
};

struct AttributionReport {
    std::string patient_id;
    std::string checkpoint_id;
    int k = 0;
    uint64_t seed = 0;
    std::vector<ChannelRowRef> row_refs; // canonical grid row order
    Mat per_cell;                        // rows() x m, absolute sums, all >= 0
    std::array<double, kNumChannels> per_feature{};
    Mat per_slot;                        // kNumChannels x m
    double f_x = 0.0;               // scalar head at the explained grid
    double f_background_mean = 0.0; // mean scalar head over the background
};

// Scalar model head to differentiate; must return a 1x1 node.
using ScalarHeadFn = int (*)(Graph&, ModelParams&, int hidden);

// Draws k (baseline, alpha) samples with stratified alphas and baselines
// cycled through a seeded permutation, interpolates per-cell embeddings,
// and averages (e_x - e_b) * df/de. The report stores absolute sums over
// embedding coordinates; pass signed_out for the pre-absolute means.
AttributionReport expected_gradients(ModelParams& params, const SlotGrid& grid,
                                     const std::vector<SlotGrid>& background, int k, uint64_t seed,
                                     ScalarHeadFn head = &cls_logit_node,
                                     SignedAttribution* signed_out = nullptr);

std::string attribution_to_json(const AttributionReport& report);

// Per-slot CSV: one row per channel, one column per slot.
std::string attribution_to_csv(const AttributionReport& report);

struct AttentionMap {
    int layer = 0;
    std::vector<Mat> heads; // post-softmax m x m weights per head
    Mat mean;               // element-wise mean over heads
    std::vector<uint8_t> key_mask;
};

AttentionMap attention_map(ModelParams& params, const SlotGrid& grid, int layer_index);

} // namespace exbehrt

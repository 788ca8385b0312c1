#pragma once

// Vertical slot-grid encoding. A visit owns as many columns ("slots") as it
// has diagnoses; other concept channels are reshaped into rows under those
// columns, so adding procedures or labs never widens the sequence.

#include <cstdint>
#include <string>
#include <vector>

#include "rng.hpp"
#include "vocab.hpp"

namespace exbehrt {

struct EncoderConfig {
    int m = 64;                 // max sentence length (columns)
    int n_proc = 1;             // procedure row cap, fitted from the corpus
    int n_lab = 1;              // lab row cap, fitted from the corpus
    double percentile = 0.95;   // row-cap percentile
    bool include_procedures = true;
    bool include_labs = true;
    bool include_observations = true; // gender, bmi, smoking rows
    bool fitted = false;
};

struct SlotGrid {
    int m = 0;
    int n_proc = 0, n_lab = 0;
    std::vector<int> diag;      // CLS, diagnosis ids, SEP between visits, PAD tail
    std::vector<int> age;
    std::vector<int> segment;
    std::vector<int> position;
    std::vector<int> gender;
    std::vector<int> bmi;
    std::vector<int> smoking;
    std::vector<std::vector<int>> proc; // n_proc rows of width m
    std::vector<std::vector<int>> lab;  // n_lab rows of width m
    std::vector<uint8_t> mask;          // true where diag != PAD
    std::vector<int> visit_of_col;      // selected-visit ordinal per column, -1 at PAD

    int rows() const { return 7 + n_proc + n_lab; }
    int non_pad_columns() const {
        int n = 0;
        for (uint8_t b : mask) n += b ? 1 : 0;
        return n;
    }
};

// Reshapes one visit's channel items into a block of `slots`-wide rows:
// exactly `slots` items give one row; more items fill row by row with a
// PAD-completed last row; fewer (including none) give one PAD-completed row.
std::vector<std::vector<int>> reshape_channel(const std::vector<int>& items, int slots, int pad_id);

// Rows a visit's channel needs after reshaping, without materializing it.
int reshape_rows(int item_count, int slots);

// Nearest-rank percentile of per-visit row counts over the whole corpus, per
// channel. Run once before training.
struct RowCaps {
    int n_proc = 1;
    int n_lab = 1;
};
RowCaps fit_row_caps(const std::vector<PatientJourney>& journeys, double percentile);

// Fits the row caps into the config and marks it usable for encode.
void fit_encoder(EncoderConfig& config, const std::vector<PatientJourney>& journeys);

// Encodes a normalized journey into a slot grid. Journeys needing more than
// m columns are truncated from the front at whole-visit granularity.
SlotGrid encode(const PatientJourney& journey, const Vocabulary& vocab, const EncoderConfig& config);

// Independently permutes each code channel within every visit. Everything
// else is untouched.
PatientJourney shuffle_within_visits(const PatientJourney& journey, uint64_t seed);

// Debug dump: one CSV row per channel row, tokens decoded to code strings.
std::string grid_to_csv(const SlotGrid& grid, const Vocabulary& vocab);

// The grid's channel rows in canonical order: diagnosis, procedure rows,
// lab rows, age, segment, position, gender, bmi, smoking. Embedding
// summation, attribution reports and checkpoints all rely on this order.
struct ChannelRowRef {
    GridChannel channel;
    int channel_row;              // 0 except for stacked proc/lab rows
    const std::vector<int>* ids;  // points into the grid
};
std::vector<ChannelRowRef> channel_rows(const SlotGrid& grid);
std::string channel_row_label(const ChannelRowRef& ref);

} // namespace exbehrt

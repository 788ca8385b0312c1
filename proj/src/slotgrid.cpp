#include "slotgrid.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "error.hpp"

namespace exbehrt {

std::vector<std::vector<int>> reshape_channel(const std::vector<int>& items, int slots, int pad_id) {
    if (slots <= 0) throw internal_error("reshape_channel needs at least one slot");
    const int len = static_cast<int>(items.size());
    const int rows = reshape_rows(len, slots);
    std::vector<std::vector<int>> out(rows, std::vector<int>(slots, pad_id));
    for (int i = 0; i < len; ++i) out[i / slots][i % slots] = items[i];
    return out;
}

int reshape_rows(int item_count, int slots) {
    if (item_count <= slots) return 1;
    return (item_count + slots - 1) / slots;
}

namespace {

// Nearest-rank percentile: sort ascending, take the ceil(p*N)-th value
// (1-based). Empty input falls back to one row.
int nearest_rank(std::vector<int>& counts, double p) {
    if (counts.empty()) return 1;
    std::sort(counts.begin(), counts.end());
    const auto n = counts.size();
    auto rank = static_cast<size_t>(std::ceil(p * static_cast<double>(n)));
    if (rank < 1) rank = 1;
    if (rank > n) rank = n;
    return std::max(1, counts[rank - 1]);
}

} // namespace

RowCaps fit_row_caps(const std::vector<PatientJourney>& journeys, double percentile) {
    if (percentile <= 0.0 || percentile > 1.0) throw usage_error("percentile must lie in (0, 1]");
    std::vector<int> proc_rows, lab_rows;
    for (const auto& j : journeys) {
        for (const auto& v : j.visits) {
            const int slots = static_cast<int>(v.diagnoses.size());
            if (slots == 0) continue;
            proc_rows.push_back(reshape_rows(static_cast<int>(v.procedures.size()), slots));
            lab_rows.push_back(reshape_rows(static_cast<int>(v.labs.size()), slots));
        }
    }
    RowCaps caps;
    caps.n_proc = nearest_rank(proc_rows, percentile);
    caps.n_lab = nearest_rank(lab_rows, percentile);
    return caps;
}

void fit_encoder(EncoderConfig& config, const std::vector<PatientJourney>& journeys) {
    const RowCaps caps = fit_row_caps(journeys, config.percentile);
    config.n_proc = caps.n_proc;
    config.n_lab = caps.n_lab;
    config.fitted = true;
}

namespace {

// Grid columns a run of visits occupies: CLS + diagnoses + separators
// between consecutive visits.
int columns_needed(const std::vector<Visit>& visits, size_t first, size_t last_exclusive) {
    int cols = 1; // CLS
    for (size_t i = first; i < last_exclusive; ++i) {
        cols += static_cast<int>(visits[i].diagnoses.size());
        if (i + 1 < last_exclusive) cols += 1; // SEP
    }
    return cols;
}

std::string bmi_token(const Visit& v) {
    return v.bmi ? std::to_string(*v.bmi) : kMissingObservation;
}

std::string smoking_token(const Visit& v) {
    return v.smoking ? to_string(*v.smoking) : to_string(Smoking::Unknown);
}

} // namespace

SlotGrid encode(const PatientJourney& journey, const Vocabulary& vocab, const EncoderConfig& config) {
    if (!config.fitted) throw usage_error("encoder config not fitted; call fit_encoder first");
    if (config.m < 4) throw usage_error("sentence length m must be at least 4");
    if (journey.visits.empty()) throw data_error("cannot encode a journey with no visits");

    const auto& visits = journey.visits;

    // Keep the most recent visits that fit in m columns. A lone visit too
    // wide on its own is truncated to its first m-1 diagnoses.
    size_t first = visits.size();
    while (first > 0 && columns_needed(visits, first - 1, visits.size()) <= config.m) --first;
    bool clip_single = false;
    if (first == visits.size()) {
        first = visits.size() - 1;
        clip_single = true;
    }

    SlotGrid grid;
    grid.m = config.m;
    grid.n_proc = config.n_proc;
    grid.n_lab = config.n_lab;
    const int pad = Vocabulary::kPad;
    grid.diag.assign(config.m, pad);
    grid.age.assign(config.m, pad);
    grid.segment.assign(config.m, pad);
    grid.position.assign(config.m, pad);
    grid.gender.assign(config.m, pad);
    grid.bmi.assign(config.m, pad);
    grid.smoking.assign(config.m, pad);
    grid.proc.assign(config.n_proc, std::vector<int>(config.m, pad));
    grid.lab.assign(config.n_lab, std::vector<int>(config.m, pad));
    grid.mask.assign(config.m, 0);
    grid.visit_of_col.assign(config.m, -1);

    const int gender_id = vocab.encode(GridChannel::Gender, to_string(journey.gender));

    // CLS column: temporal channels only, statics stay PAD.
    grid.diag[0] = Vocabulary::kCls;
    grid.age[0] = vocab.encode(GridChannel::Age, std::to_string(visits[first].age));
    grid.segment[0] = vocab.encode(GridChannel::Segment, "A");
    grid.position[0] = vocab.encode(GridChannel::Position, "0");

    int col = 1;
    for (size_t vi = first; vi < visits.size(); ++vi) {
        const Visit& v = visits[vi];
        const int ordinal = static_cast<int>(vi - first);
        const int age_id = vocab.encode(GridChannel::Age, std::to_string(v.age));
        const int seg_id = vocab.encode(GridChannel::Segment, ordinal % 2 == 0 ? "A" : "B");
        const int pos_id = vocab.encode(GridChannel::Position, std::to_string(ordinal));
        const int bmi_id = vocab.encode(GridChannel::Bmi, bmi_token(v));
        const int smk_id = vocab.encode(GridChannel::Smoking, smoking_token(v));

        int slots = static_cast<int>(v.diagnoses.size());
        if (clip_single && slots > config.m - 1) slots = config.m - 1;
        if (col + slots > config.m) throw internal_error("slot layout overflow");

        std::vector<int> proc_ids, lab_ids;
        if (config.include_procedures) {
            proc_ids.reserve(v.procedures.size());
            for (const auto& c : v.procedures) proc_ids.push_back(vocab.encode(GridChannel::Procedure, c));
        }
        if (config.include_labs) {
            lab_ids.reserve(v.labs.size());
            for (const auto& c : v.labs) lab_ids.push_back(vocab.encode(GridChannel::Lab, c));
        }
        auto proc_block = reshape_channel(proc_ids, slots, pad);
        auto lab_block = reshape_channel(lab_ids, slots, pad);

        for (int s = 0; s < slots; ++s) {
            const int c = col + s;
            grid.diag[c] = vocab.encode(GridChannel::Diagnosis, v.diagnoses[s]);
            grid.age[c] = age_id;
            grid.segment[c] = seg_id;
            grid.position[c] = pos_id;
            if (config.include_observations) {
                grid.gender[c] = gender_id;
                grid.bmi[c] = bmi_id;
                grid.smoking[c] = smk_id;
            }
            // Blocks taller than the cap keep their earliest rows.
            for (int r = 0; r < config.n_proc && r < static_cast<int>(proc_block.size()); ++r)
                grid.proc[r][c] = proc_block[r][s];
            for (int r = 0; r < config.n_lab && r < static_cast<int>(lab_block.size()); ++r)
                grid.lab[r][c] = lab_block[r][s];
            grid.visit_of_col[c] = ordinal;
        }
        col += slots;

        if (vi + 1 < visits.size()) {
            if (col >= config.m) throw internal_error("slot layout overflow at separator");
            // The separator column carries the visit context it closes.
            grid.diag[col] = Vocabulary::kSep;
            grid.age[col] = age_id;
            grid.segment[col] = seg_id;
            grid.position[col] = pos_id;
            if (config.include_observations) {
                grid.gender[col] = gender_id;
                grid.bmi[col] = bmi_id;
                grid.smoking[col] = smk_id;
            }
            grid.visit_of_col[col] = ordinal;
            ++col;
        }
    }

    for (int c = 0; c < config.m; ++c) grid.mask[c] = grid.diag[c] != pad ? 1 : 0;
    return grid;
}

PatientJourney shuffle_within_visits(const PatientJourney& journey, uint64_t seed) {
    PatientJourney out = journey;
    Rng rng(mix64(seed, hash64(journey.patient_id, 0x5eed)));
    for (auto& v : out.visits) {
        rng.shuffle(v.diagnoses);
        rng.shuffle(v.procedures);
        rng.shuffle(v.labs);
    }
    return out;
}

std::vector<ChannelRowRef> channel_rows(const SlotGrid& grid) {
    std::vector<ChannelRowRef> rows;
    rows.reserve(static_cast<size_t>(grid.rows()));
    rows.push_back({GridChannel::Diagnosis, 0, &grid.diag});
    for (int r = 0; r < grid.n_proc; ++r) rows.push_back({GridChannel::Procedure, r, &grid.proc[r]});
    for (int r = 0; r < grid.n_lab; ++r) rows.push_back({GridChannel::Lab, r, &grid.lab[r]});
    rows.push_back({GridChannel::Age, 0, &grid.age});
    rows.push_back({GridChannel::Segment, 0, &grid.segment});
    rows.push_back({GridChannel::Position, 0, &grid.position});
    rows.push_back({GridChannel::Gender, 0, &grid.gender});
    rows.push_back({GridChannel::Bmi, 0, &grid.bmi});
    rows.push_back({GridChannel::Smoking, 0, &grid.smoking});
    return rows;
}

std::string channel_row_label(const ChannelRowRef& ref) {
    std::string label = to_string(ref.channel);
    if (ref.channel == GridChannel::Procedure || ref.channel == GridChannel::Lab)
        label += std::to_string(ref.channel_row);
    return label;
}

namespace {

void csv_row(std::ostream& os, const std::string& label, GridChannel ch,
             const std::vector<int>& ids, const Vocabulary& vocab) {
    os << label;
    for (int id : ids) os << ',' << vocab.decode(ch, id);
    os << '\n';
}

} // namespace

std::string grid_to_csv(const SlotGrid& grid, const Vocabulary& vocab) {
    std::ostringstream os;
    os << "channel";
    for (int c = 0; c < grid.m; ++c) os << ",col" << c;
    os << '\n';
    csv_row(os, "diagnosis", GridChannel::Diagnosis, grid.diag, vocab);
    for (int r = 0; r < grid.n_proc; ++r)
        csv_row(os, "procedure" + std::to_string(r), GridChannel::Procedure, grid.proc[r], vocab);
    for (int r = 0; r < grid.n_lab; ++r)
        csv_row(os, "lab" + std::to_string(r), GridChannel::Lab, grid.lab[r], vocab);
    csv_row(os, "age", GridChannel::Age, grid.age, vocab);
    csv_row(os, "segment", GridChannel::Segment, grid.segment, vocab);
    csv_row(os, "position", GridChannel::Position, grid.position, vocab);
    csv_row(os, "gender", GridChannel::Gender, grid.gender, vocab);
    csv_row(os, "bmi", GridChannel::Bmi, grid.bmi, vocab);
    csv_row(os, "smoking", GridChannel::Smoking, grid.smoking, vocab);
    return os.str();
}

} // namespace exbehrt

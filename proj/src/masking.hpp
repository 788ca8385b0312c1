#pragma once

// MLM masking plans over the diagnosis row of a slot grid. Only real
// diagnosis codes are eligible, never CLS/SEP/PAD/UNK/MASK.

#include <cstdint>
#include <string>
#include <vector>

#include "slotgrid.hpp"
#include "vocab.hpp"

namespace exbehrt {

enum class MaskAction : uint8_t {
    Keep = 0,         // not selected
    Mask,             // replace with MASK
    ReplaceRandom,    // replace with a random real diagnosis id
    KeepSelected,     // selected but left unchanged
};

struct MaskingPlan {
    std::vector<MaskAction> actions; // per column
    std::vector<int> targets;        // original id at selected columns, else -1
    std::vector<int> replacements;   // replacement id for ReplaceRandom, else -1
    int selected = 0;

    bool empty() const { return selected == 0; }
};

// Each eligible position is independently selected with p=0.15; selected
// positions are assigned Mask/ReplaceRandom/KeepSelected with p=0.8/0.1/0.1.
// Replacements are uniform over the real diagnosis ids.
MaskingPlan make_masking_plan(const SlotGrid& grid, const Vocabulary& vocab, uint64_t seed);

// Same, but eligibility is restricted to codes matching the prefix (the
// cancer-only second pass uses prefix "C").
MaskingPlan make_masking_plan(const SlotGrid& grid, const Vocabulary& vocab, uint64_t seed,
                              const std::string& code_prefix);

// Applies the plan to a copy of the grid (diagnosis row only).
SlotGrid apply_masking(const SlotGrid& grid, const MaskingPlan& plan);

} // namespace exbehrt

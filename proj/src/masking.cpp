#include "masking.hpp"

#include "error.hpp"
#include "rng.hpp"

namespace exbehrt {

namespace {

MaskingPlan plan_impl(const SlotGrid& grid, const Vocabulary& vocab, uint64_t seed,
                      const std::string* prefix) {
    MaskingPlan plan;
    plan.actions.assign(grid.diag.size(), MaskAction::Keep);
    plan.targets.assign(grid.diag.size(), -1);
    plan.replacements.assign(grid.diag.size(), -1);

    const int n_codes = vocab.code_count(GridChannel::Diagnosis);
    Rng rng(mix64(seed, 0x6d61736bULL));
    for (size_t j = 0; j < grid.diag.size(); ++j) {
        const int id = grid.diag[j];
        if (id < Vocabulary::kReserved) continue; // PAD/UNK/CLS/SEP/MASK
        if (prefix && vocab.decode(GridChannel::Diagnosis, id).rfind(*prefix, 0) != 0) continue;
        if (!rng.bernoulli(0.15)) continue;
        plan.targets[j] = id;
        ++plan.selected;
        const double roll = rng.uniform();
        if (roll < 0.8) {
            plan.actions[j] = MaskAction::Mask;
        } else if (roll < 0.9) {
            plan.actions[j] = MaskAction::ReplaceRandom;
            plan.replacements[j] = Vocabulary::kReserved + static_cast<int>(rng.below(n_codes));
        } else {
            plan.actions[j] = MaskAction::KeepSelected;
        }
    }
    return plan;
}

} // namespace

MaskingPlan make_masking_plan(const SlotGrid& grid, const Vocabulary& vocab, uint64_t seed) {
    return plan_impl(grid, vocab, seed, nullptr);
}

MaskingPlan make_masking_plan(const SlotGrid& grid, const Vocabulary& vocab, uint64_t seed,
                              const std::string& code_prefix) {
    return plan_impl(grid, vocab, seed, &code_prefix);
}

SlotGrid apply_masking(const SlotGrid& grid, const MaskingPlan& plan) {
    if (plan.actions.size() != grid.diag.size()) throw internal_error("masking plan width mismatch");
    SlotGrid out = grid;
    for (size_t j = 0; j < plan.actions.size(); ++j) {
        switch (plan.actions[j]) {
            case MaskAction::Mask: out.diag[j] = Vocabulary::kMask; break;
            case MaskAction::ReplaceRandom: out.diag[j] = plan.replacements[j]; break;
            default: break;
        }
    }
    return out;
}

} // namespace exbehrt

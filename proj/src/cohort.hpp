#pragma once

// Seeded synthetic cohort with planted, recoverable structure. Stands in for
// a real claims extract: archetypes with distinct code pools and one
// signature cancer code each, logistic outcome rules, and two deterministic
// planted signals (a diagnosis code and a procedure code) for learnability
// and ablation tests.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "journey.hpp"

namespace exbehrt {

struct WeightedCode {
    std::string code;
    double weight = 1.0;
};

// One sub-population of an archetype. Most archetypes have a single variant;
// a two-variant archetype plants a recoverable subcluster split.
struct ArchetypeVariant {
    std::string name;
    double weight = 1.0;
    double age_mu = 60.0;
    double age_sigma = 8.0;
    std::vector<WeightedCode> diagnoses;
    std::vector<WeightedCode> procedures;
    std::vector<WeightedCode> labs;
};

struct Archetype {
    std::string name;
    std::string signature_code;   // cancer diagnosis planted once per patient
    double weight = 1.0;          // mixing proportion
    double female_rate = 0.5;
    double bmi_mu = 27.0;
    double bmi_missing_rate = 0.1; // patients with no BMI observation at all
    std::array<double, 4> smoking_dist{0.5, 0.25, 0.2, 0.05}; // Never/Former/Current/Unknown
    double long_stay_rate = 0.1;  // per-visit chance of a stay over 7 days
    double heart_failure_rate = 0.25; // patients with a planted I50 episode
    double death_weight = 0.0;    // logit offset in the death rule
    double readmit_weight = 0.0;  // logit offset in the readmission rule
    std::vector<ArchetypeVariant> variants;
};

// Shared part of an outcome rule: p = sigmoid(bias + age_weight*(age-60) +
// archetype weight). The age and archetype terms make outcomes learnable.
struct LogisticRule {
    double bias = 0.0;
    double age_weight = 0.0;
};

struct CohortSpec {
    int patient_count = 1000;
    uint64_t seed = 42;
    int min_visits = 5;
    double short_journey_rate = 0.0;  // fraction with 1..4 visits (filter fodder)
    std::vector<Archetype> archetypes;
    LogisticRule death_rule{-1.2, 0.03};
    LogisticRule readmit_rule{-0.4, 0.02};
    std::string diag_event_code = "Z99"; // planted diagnosis signal
    double diag_event_rate = 0.5;
    std::string proc_event_code = "96372"; // planted procedure signal
    double proc_event_rate = 0.5;
};

// Six archetypes with disjoint diagnosis pools, one shared frequent code
// (exercises the +5% concept filter) and a two-variant leukemia archetype
// (exercises subclustering).
CohortSpec default_cohort_spec();

// Throws InvalidSpec (a data error) for malformed distributions.
void validate_spec(const CohortSpec& spec);

struct LabelRow {
    std::string patient_id;
    std::string task;
    int label = 0;
};

struct ArchetypeAssignment {
    std::string patient_id;
    int archetype = 0;
    int variant = 0;
};

struct Cohort {
    std::vector<PatientJourney> journeys;       // raw, pre-normalization
    std::vector<LabelRow> labels;               // patient_id,task,label rows
    std::vector<ArchetypeAssignment> archetypes; // ground truth for recovery tests
};

// Deterministic under spec.seed: one independent RNG substream per patient.
// Every label is an exact function of the emitted journey (and deceased_day),
// so rule-based oracles can verify them.
Cohort generate_cohort(const CohortSpec& spec);

// Task names emitted into the label table.
inline constexpr const char* kTaskDeath6m = "death_6m";
inline constexpr const char* kTaskDeath12m = "death_12m";
inline constexpr const char* kTaskHfReadmit = "hf_readmit";
inline constexpr const char* kTaskPlos = "plos";
inline constexpr const char* kTaskDiagEvent = "diag_event";
inline constexpr const char* kTaskProcEvent = "proc_event";

} // namespace exbehrt

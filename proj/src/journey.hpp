#pragma once

// Patient journeys: the unit of ingestion. A journey is an ordered list of
// visits, each holding de-duplicated medical codes per channel plus static
// per-visit observations.

#include <optional>
#include <string>
#include <vector>

#include "error.hpp"

namespace exbehrt {

enum class Channel { Diagnosis = 0, Procedure = 1, Lab = 2 };

enum class Gender { M, F, Unknown };
enum class Smoking { Never, Former, Current, Unknown };

const char* to_string(Gender g);
const char* to_string(Smoking s);
Gender gender_from_string(const std::string& s);
Smoking smoking_from_string(const std::string& s);

struct ConceptCode {
    Channel channel = Channel::Diagnosis;
    std::string code;
};

struct Visit {
    std::vector<std::string> diagnoses;   // 3-char codes after normalization
    std::vector<std::string> procedures;
    std::vector<std::string> labs;
    int age = 0;                          // integer years at this visit
    std::optional<int> bmi;               // bucketed to integer
    std::optional<Smoking> smoking;
    int date = 0;                         // day index, strictly increasing
    int stay_days = 1;                    // length of this hospitalization
};

struct PatientJourney {
    std::string patient_id;
    Gender gender = Gender::Unknown;
    std::vector<Visit> visits;
    std::optional<int> deceased_day;

    int total_diagnoses() const {
        int n = 0;
        for (const auto& v : visits) n += static_cast<int>(v.diagnoses.size());
        return n;
    }
};

// Maximum diagnosis count; journeys above it are rejected outright.
inline constexpr int kMaxDiagnoses = 128;

// Truncates diagnosis codes to 3 characters, de-duplicates every channel
// within each visit (first occurrence wins), drops visits left without any
// diagnosis, sorts visits by date, and carries bmi/smoking forward from the
// last observed value (never observed stays unset and encodes as an explicit
// "unknown" token). Idempotent. Throws a data error for journeys with more
// than 128 diagnoses, zero valid visits, duplicate visit dates, or negative
// ages.
PatientJourney normalize_journey(const PatientJourney& raw);

// Keeps journeys with at least `min_visits` visits that each carry a
// diagnosis. Inputs must be normalized (where every visit has >= 1 diagnosis).
std::vector<PatientJourney> filter_pretrain_cohort(const std::vector<PatientJourney>& journeys,
                                                   int min_visits = 5);

enum class SplitLabel { Train = 0, Validation = 1, Test = 2 };

struct SplitRatios {
    double train = 0.8, validation = 0.1, test = 0.1;
};

// Split assignment is a pure function of (patient_id, seed), so a patient
// appearing in several cohorts always lands in the same split.
SplitLabel assign_split(const std::string& patient_id, const SplitRatios& ratios, uint64_t seed);

struct CohortSplit {
    std::vector<size_t> train, validation, test;
};

CohortSplit split_cohort(const std::vector<PatientJourney>& journeys,
                         const SplitRatios& ratios, uint64_t seed);

} // namespace exbehrt

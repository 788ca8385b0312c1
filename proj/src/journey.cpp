#include "journey.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "rng.hpp"

namespace exbehrt {

const char* to_string(Gender g) {
    switch (g) {
        case Gender::M: return "M";
        case Gender::F: return "F";
        default: return "Unknown";
    }
}

const char* to_string(Smoking s) {
    switch (s) {
        case Smoking::Never: return "Never";
        case Smoking::Former: return "Former";
        case Smoking::Current: return "Current";
        default: return "Unknown";
    }
}

Gender gender_from_string(const std::string& s) {
    if (s == "M") return Gender::M;
    if (s == "F") return Gender::F;
    if (s == "Unknown") return Gender::Unknown;
    throw data_error("invalid gender value: " + s);
}

Smoking smoking_from_string(const std::string& s) {
    if (s == "Never") return Smoking::Never;
    if (s == "Former") return Smoking::Former;
    if (s == "Current") return Smoking::Current;
    if (s == "Unknown") return Smoking::Unknown;
    throw data_error("invalid smoking value: " + s);
}

namespace {

std::vector<std::string> dedup_preserving_order(const std::vector<std::string>& codes) {
    std::vector<std::string> out;
    std::unordered_set<std::string> seen;
    out.reserve(codes.size());
    for (const auto& c : codes) {
        if (seen.insert(c).second) out.push_back(c);
    }
    return out;
}

} // namespace

PatientJourney normalize_journey(const PatientJourney& raw) {
    if (raw.visits.empty()) {
        throw data_error("rejected journey " + raw.patient_id + ": zero visits");
    }

    PatientJourney out;
    out.patient_id = raw.patient_id;
    out.gender = raw.gender;
    out.deceased_day = raw.deceased_day;

    std::vector<Visit> visits = raw.visits;
    std::stable_sort(visits.begin(), visits.end(),
                     [](const Visit& a, const Visit& b) { return a.date < b.date; });

    std::optional<int> last_bmi;
    std::optional<Smoking> last_smoking;
    for (const auto& v : visits) {
        if (v.age < 0) {
            throw data_error("rejected journey " + raw.patient_id + ": negative age");
        }
        Visit nv = v;
        for (auto& code : nv.diagnoses) {
            if (code.size() > 3) code.resize(3);
        }
        nv.diagnoses = dedup_preserving_order(nv.diagnoses);
        nv.procedures = dedup_preserving_order(nv.procedures);
        nv.labs = dedup_preserving_order(nv.labs);

        if (nv.bmi.has_value()) last_bmi = nv.bmi;
        else nv.bmi = last_bmi;
        if (nv.smoking.has_value()) last_smoking = nv.smoking;
        else nv.smoking = last_smoking;

        // Visits without any diagnosis carry no slots and are dropped; their
        // observations still participate in the carry-forward above.
        if (nv.diagnoses.empty()) continue;

        if (!out.visits.empty() && nv.date <= out.visits.back().date) {
            throw data_error("rejected journey " + raw.patient_id + ": duplicate visit date " +
                             std::to_string(nv.date));
        }
        out.visits.push_back(std::move(nv));
    }

    if (out.visits.empty()) {
        throw data_error("rejected journey " + raw.patient_id + ": zero valid visits");
    }
    if (out.total_diagnoses() > kMaxDiagnoses) {
        throw data_error("rejected journey " + raw.patient_id + ": more than " +
                         std::to_string(kMaxDiagnoses) + " diagnoses");
    }
    return out;
}

std::vector<PatientJourney> filter_pretrain_cohort(const std::vector<PatientJourney>& journeys,
                                                   int min_visits) {
    std::vector<PatientJourney> out;
    for (const auto& j : journeys) {
        int valid = 0;
        for (const auto& v : j.visits) {
            if (!v.diagnoses.empty()) ++valid;
        }
        if (valid >= min_visits) out.push_back(j);
    }
    return out;
}

SplitLabel assign_split(const std::string& patient_id, const SplitRatios& ratios, uint64_t seed) {
    const double u = static_cast<double>(hash64(patient_id, seed) >> 11) * 0x1.0p-53;
    if (u < ratios.train) return SplitLabel::Train;
    if (u < ratios.train + ratios.validation) return SplitLabel::Validation;
    return SplitLabel::Test;
}

CohortSplit split_cohort(const std::vector<PatientJourney>& journeys,
                         const SplitRatios& ratios, uint64_t seed) {
    if (ratios.train < 0 || ratios.validation < 0 || ratios.test < 0 ||
        std::abs(ratios.train + ratios.validation + ratios.test - 1.0) > 1e-9) {
        throw usage_error("invalid split ratios: must be non-negative and sum to 1");
    }
    CohortSplit split;
    for (size_t i = 0; i < journeys.size(); ++i) {
        switch (assign_split(journeys[i].patient_id, ratios, seed)) {
            case SplitLabel::Train: split.train.push_back(i); break;
            case SplitLabel::Validation: split.validation.push_back(i); break;
            case SplitLabel::Test: split.test.push_back(i); break;
        }
    }
    return split;
}

} // namespace exbehrt

#include "cohort.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "error.hpp"
#include "rng.hpp"

namespace exbehrt {

namespace {

ArchetypeVariant make_variant(std::string name, double weight, double age_mu, double age_sigma,
                              std::vector<WeightedCode> diagnoses,
                              std::vector<WeightedCode> procedures) {
    ArchetypeVariant v;
    v.name = std::move(name);
    v.weight = weight;
    v.age_mu = age_mu;
    v.age_sigma = age_sigma;
    v.diagnoses = std::move(diagnoses);
    v.procedures = std::move(procedures);
    // Six lab families, shared by every archetype.
    v.labs = {{"haematology", 1.0 / 6}, {"chemistry", 1.0 / 6}, {"urinalysis", 1.0 / 6},
              {"special_chemistry", 1.0 / 6}, {"special_laboratory", 1.0 / 6}, {"blood_gas", 1.0 / 6}};
    return v;
}

} // namespace

CohortSpec default_cohort_spec() {
    CohortSpec spec;
    // Diagnosis pools are disjoint across archetypes except for R50, which is
    // common everywhere and must therefore fail the +5% cluster filter.
    Archetype lung;
    lung.name = "lung";
    lung.signature_code = "C34";
    lung.weight = 1.0 / 6;
    lung.female_rate = 0.35;
    lung.bmi_mu = 25.0;
    lung.smoking_dist = {0.1, 0.4, 0.45, 0.05};
    lung.long_stay_rate = 0.15;
    lung.heart_failure_rate = 0.35;
    lung.death_weight = 1.2;
    lung.readmit_weight = 0.6;
    lung.variants = {make_variant("lung", 1.0, 65, 8,
                                  {{"C34", 0.25}, {"J44", 0.20}, {"J45", 0.15}, {"R05", 0.15}, {"I10", 0.15}, {"R50", 0.10}},
                                  {{"71260", 0.3}, {"31622", 0.25}, {"94010", 0.15}, {"99213", 0.3}})};

    Archetype breast;
    breast.name = "breast";
    breast.signature_code = "C50";
    breast.weight = 1.0 / 6;
    breast.female_rate = 0.95;
    breast.bmi_mu = 26.0;
    breast.smoking_dist = {0.6, 0.2, 0.15, 0.05};
    breast.long_stay_rate = 0.08;
    breast.heart_failure_rate = 0.15;
    breast.death_weight = 0.2;
    breast.readmit_weight = 0.1;
    breast.variants = {make_variant("breast", 1.0, 55, 9,
                                    {{"C50", 0.25}, {"N63", 0.20}, {"Z12", 0.15}, {"M25", 0.15}, {"E03", 0.15}, {"R50", 0.10}},
                                    {{"77067", 0.35}, {"19083", 0.35}, {"99213", 0.3}})};

    Archetype prostate;
    prostate.name = "prostate";
    prostate.signature_code = "C61";
    prostate.weight = 1.0 / 6;
    prostate.female_rate = 0.02;
    prostate.bmi_mu = 27.0;
    prostate.smoking_dist = {0.45, 0.35, 0.15, 0.05};
    prostate.long_stay_rate = 0.08;
    prostate.heart_failure_rate = 0.3;
    prostate.death_weight = 0.6;
    prostate.readmit_weight = 0.3;
    prostate.variants = {make_variant("prostate", 1.0, 70, 6,
                                      {{"C61", 0.25}, {"N40", 0.20}, {"R31", 0.15}, {"N39", 0.15}, {"I10", 0.15}, {"R50", 0.10}},
                                      {{"55700", 0.4}, {"52000", 0.3}, {"99213", 0.3}})};

    Archetype colorectal;
    colorectal.name = "colorectal";
    colorectal.signature_code = "C18";
    colorectal.weight = 1.0 / 6;
    colorectal.female_rate = 0.45;
    colorectal.bmi_mu = 29.0;
    colorectal.smoking_dist = {0.5, 0.3, 0.15, 0.05};
    colorectal.long_stay_rate = 0.12;
    colorectal.heart_failure_rate = 0.2;
    colorectal.death_weight = 0.8;
    colorectal.readmit_weight = 0.4;
    colorectal.variants = {make_variant("colorectal", 1.0, 62, 9,
                                        {{"C18", 0.25}, {"K57", 0.20}, {"K59", 0.15}, {"D12", 0.15}, {"K21", 0.15}, {"R50", 0.10}},
                                        {{"45378", 0.4}, {"45380", 0.3}, {"99213", 0.3}})};

    Archetype pancreatic;
    pancreatic.name = "pancreatic";
    pancreatic.signature_code = "C25";
    pancreatic.weight = 1.0 / 6;
    pancreatic.female_rate = 0.45;
    pancreatic.bmi_mu = 23.0;
    pancreatic.smoking_dist = {0.35, 0.35, 0.25, 0.05};
    pancreatic.long_stay_rate = 0.2;
    pancreatic.heart_failure_rate = 0.25;
    pancreatic.death_weight = 1.8;
    pancreatic.readmit_weight = 0.9;
    pancreatic.variants = {make_variant("pancreatic", 1.0, 67, 7,
                                        {{"C25", 0.25}, {"K86", 0.20}, {"E11", 0.15}, {"R10", 0.15}, {"K85", 0.15}, {"R50", 0.10}},
                                        {{"74178", 0.35}, {"43260", 0.35}, {"99213", 0.3}})};

    // Two variants: an older chronic profile and a pediatric acute profile.
    // Same signature code, distinct age and secondary codes, so subclustering
    // has a real split to find.
    Archetype leukemia;
    leukemia.name = "leukemia";
    leukemia.signature_code = "C91";
    leukemia.weight = 1.0 / 6;
    leukemia.female_rate = 0.45;
    leukemia.bmi_mu = 24.0;
    leukemia.smoking_dist = {0.6, 0.25, 0.1, 0.05};
    leukemia.long_stay_rate = 0.18;
    leukemia.heart_failure_rate = 0.2;
    leukemia.death_weight = 1.0;
    leukemia.readmit_weight = 0.5;
    leukemia.variants = {
        make_variant("chronic", 0.5, 72, 5,
                     {{"C91", 0.25}, {"D61", 0.20}, {"D70", 0.15}, {"R53", 0.15}, {"I10", 0.15}, {"R50", 0.10}},
                     {{"38221", 0.35}, {"85025", 0.35}, {"99213", 0.3}}),
        make_variant("acute", 0.5, 6, 2,
                     {{"C91", 0.25}, {"B34", 0.20}, {"R11", 0.15}, {"D70", 0.15}, {"R53", 0.15}, {"R50", 0.10}},
                     {{"38221", 0.35}, {"36415", 0.35}, {"99213", 0.3}}),
    };

    spec.archetypes = {lung, breast, prostate, colorectal, pancreatic, leukemia};
    return spec;
}

namespace {

void check_pool(const std::vector<WeightedCode>& pool, const std::string& where, bool may_be_empty) {
    if (pool.empty()) {
        if (may_be_empty) return;
        throw data_error("invalid cohort spec: empty code pool in " + where);
    }
    double sum = 0.0;
    for (const auto& wc : pool) {
        if (wc.code.empty()) throw data_error("invalid cohort spec: empty code in " + where);
        if (wc.weight < 0.0) throw data_error("invalid cohort spec: negative weight in " + where);
        sum += wc.weight;
    }
    if (std::abs(sum - 1.0) > 1e-6)
        throw data_error("invalid cohort spec: weights in " + where + " must sum to 1");
}

void check_rate(double r, const std::string& what) {
    if (r < 0.0 || r > 1.0) throw data_error("invalid cohort spec: " + what + " outside [0,1]");
}

} // namespace

void validate_spec(const CohortSpec& spec) {
    if (spec.patient_count <= 0) throw data_error("invalid cohort spec: patient_count must be positive");
    if (spec.min_visits < 1) throw data_error("invalid cohort spec: min_visits must be at least 1");
    check_rate(spec.short_journey_rate, "short_journey_rate");
    check_rate(spec.diag_event_rate, "diag_event_rate");
    check_rate(spec.proc_event_rate, "proc_event_rate");
    if (spec.diag_event_code.empty() || spec.proc_event_code.empty())
        throw data_error("invalid cohort spec: planted event codes must be non-empty");
    if (spec.archetypes.empty()) throw data_error("invalid cohort spec: no archetypes");

    double mix = 0.0;
    for (const auto& a : spec.archetypes) {
        if (a.name.empty()) throw data_error("invalid cohort spec: unnamed archetype");
        if (a.signature_code.empty())
            throw data_error("invalid cohort spec: archetype " + a.name + " lacks a signature code");
        if (a.weight < 0.0) throw data_error("invalid cohort spec: negative archetype weight");
        mix += a.weight;
        check_rate(a.female_rate, a.name + ".female_rate");
        check_rate(a.bmi_missing_rate, a.name + ".bmi_missing_rate");
        check_rate(a.long_stay_rate, a.name + ".long_stay_rate");
        check_rate(a.heart_failure_rate, a.name + ".heart_failure_rate");
        double smk = 0.0;
        for (double s : a.smoking_dist) {
            if (s < 0.0) throw data_error("invalid cohort spec: negative smoking weight in " + a.name);
            smk += s;
        }
        if (std::abs(smk - 1.0) > 1e-6)
            throw data_error("invalid cohort spec: smoking distribution in " + a.name + " must sum to 1");
        if (a.variants.empty()) throw data_error("invalid cohort spec: archetype " + a.name + " has no variants");
        double vsum = 0.0;
        for (const auto& v : a.variants) {
            if (v.weight < 0.0) throw data_error("invalid cohort spec: negative variant weight in " + a.name);
            vsum += v.weight;
            if (v.age_sigma < 0.0) throw data_error("invalid cohort spec: negative age sigma in " + a.name);
            check_pool(v.diagnoses, a.name + "/" + v.name + " diagnoses", false);
            check_pool(v.procedures, a.name + "/" + v.name + " procedures", true);
            check_pool(v.labs, a.name + "/" + v.name + " labs", true);
        }
        if (std::abs(vsum - 1.0) > 1e-6)
            throw data_error("invalid cohort spec: variant weights in " + a.name + " must sum to 1");
    }
    if (std::abs(mix - 1.0) > 1e-6)
        throw data_error("invalid cohort spec: archetype weights must sum to 1");
}

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

std::string sample_code(Rng& rng, const std::vector<WeightedCode>& pool) {
    std::vector<double> w;
    w.reserve(pool.size());
    for (const auto& wc : pool) w.push_back(wc.weight);
    return pool[rng.pick(w)].code;
}

int clamp_int(int v, int lo, int hi) { return std::max(lo, std::min(hi, v)); }

bool has_diagnosis(const PatientJourney& j, const std::string& code) {
    for (const auto& v : j.visits)
        for (const auto& d : v.diagnoses)
            if (d == code) return true;
    return false;
}

bool has_procedure(const PatientJourney& j, const std::string& code) {
    for (const auto& v : j.visits)
        for (const auto& p : v.procedures)
            if (p == code) return true;
    return false;
}

// Day of the first visit carrying a cancer (C-prefix) diagnosis, or -1.
int first_cancer_day(const PatientJourney& j) {
    for (const auto& v : j.visits)
        for (const auto& d : v.diagnoses)
            if (!d.empty() && d[0] == 'C') return v.date;
    return -1;
}

int first_code_day(const PatientJourney& j, const std::string& code) {
    for (const auto& v : j.visits)
        for (const auto& d : v.diagnoses)
            if (d == code) return v.date;
    return -1;
}

} // namespace

Cohort generate_cohort(const CohortSpec& spec) {
    validate_spec(spec);

    Cohort cohort;
    cohort.journeys.reserve(spec.patient_count);
    Rng root(spec.seed);

    std::vector<double> arch_weights;
    for (const auto& a : spec.archetypes) arch_weights.push_back(a.weight);

    for (int pi = 0; pi < spec.patient_count; ++pi) {
        Rng rng = root.fork(static_cast<uint64_t>(pi));

        const int arch_idx = static_cast<int>(rng.pick(arch_weights));
        const Archetype& arch = spec.archetypes[arch_idx];
        std::vector<double> var_weights;
        for (const auto& v : arch.variants) var_weights.push_back(v.weight);
        const int var_idx = static_cast<int>(rng.pick(var_weights));
        const ArchetypeVariant& variant = arch.variants[var_idx];

        PatientJourney journey;
        char idbuf[16];
        std::snprintf(idbuf, sizeof idbuf, "P%06d", pi);
        journey.patient_id = idbuf;
        journey.gender = rng.bernoulli(arch.female_rate) ? Gender::F : Gender::M;

        const bool short_journey = rng.bernoulli(spec.short_journey_rate);
        const int n_visits = short_journey ? rng.range(1, std::max(1, spec.min_visits - 1))
                                           : rng.range(spec.min_visits + 1, spec.min_visits + 9);

        const int base_age = clamp_int(static_cast<int>(std::lround(rng.gauss(variant.age_mu, variant.age_sigma))), 1, 95);
        const int start_day = 200 + static_cast<int>(rng.below(1500));
        const int birth_day = start_day - base_age * 365 - static_cast<int>(rng.below(365));

        std::vector<int> gaps(static_cast<size_t>(n_visits), 0);
        for (int j = 1; j < n_visits; ++j) gaps[j] = 10 + static_cast<int>(rng.below(140));

        const auto smoking_cat = static_cast<Smoking>(rng.pick(
            {arch.smoking_dist[0], arch.smoking_dist[1], arch.smoking_dist[2], arch.smoking_dist[3]}));
        const bool bmi_never = rng.bernoulli(arch.bmi_missing_rate);
        const int base_bmi = clamp_int(static_cast<int>(std::lround(rng.gauss(arch.bmi_mu, 3.0))), 15, 45);

        // Cancer index visit sits late enough that the windowed journey keeps
        // min_visits visits, and death truncation cannot shave below it.
        int cancer_idx = -1;
        if (!short_journey) cancer_idx = std::min(n_visits - 1, std::max(spec.min_visits - 1, 2 * n_visits / 3));

        // Planted deterministic signals land at or before the cancer visit so
        // death truncation cannot remove them.
        const int plant_limit = cancer_idx >= 0 ? cancer_idx + 1 : n_visits;
        const int diag_event_idx = rng.bernoulli(spec.diag_event_rate) ? static_cast<int>(rng.below(plant_limit)) : -1;
        const int proc_event_idx = rng.bernoulli(spec.proc_event_rate) ? static_cast<int>(rng.below(plant_limit)) : -1;

        // Heart-failure episode with a materialized readmission gap.
        int hf_idx = -1;
        if (n_visits >= 3 && rng.bernoulli(arch.heart_failure_rate)) {
            hf_idx = rng.range(1, n_visits - 2);
            const double p = sigmoid(spec.readmit_rule.bias + spec.readmit_rule.age_weight * (base_age - 60) + arch.readmit_weight);
            gaps[hf_idx + 1] = rng.bernoulli(p) ? rng.range(3, 30) : rng.range(31, 200);
        }

        // Death rule: one logistic draw for death within a year of the cancer
        // visit; the day is uniform over that year, so the 6-month label is
        // roughly half of the 12-month one.
        int deceased_day = -1;
        bool death_drawn = false;
        double death_p = 0.0;
        if (cancer_idx >= 0) {
            death_p = sigmoid(spec.death_rule.bias + spec.death_rule.age_weight * (base_age - 60) + arch.death_weight);
            death_drawn = rng.bernoulli(death_p);
        }

        int day = start_day;
        for (int j = 0; j < n_visits; ++j) {
            day += gaps[j];
            Visit visit;
            visit.date = day;
            visit.age = (day - birth_day) / 365;
            visit.stay_days = rng.range(1, 3);
            if (rng.bernoulli(arch.long_stay_rate)) visit.stay_days = rng.range(8, 14);

            const int n_diag = rng.range(1, 3);
            for (int d = 0; d < n_diag; ++d) visit.diagnoses.push_back(sample_code(rng, variant.diagnoses));
            if (j == cancer_idx) visit.diagnoses.insert(visit.diagnoses.begin(), arch.signature_code);
            if (j == diag_event_idx) visit.diagnoses.push_back(spec.diag_event_code);
            if (j == hf_idx) visit.diagnoses.push_back("I50");

            if (!variant.procedures.empty()) {
                const int n_proc = static_cast<int>(rng.below(4));
                for (int p = 0; p < n_proc; ++p) visit.procedures.push_back(sample_code(rng, variant.procedures));
            }
            if (j == proc_event_idx) visit.procedures.push_back(spec.proc_event_code);
            if (!variant.labs.empty()) {
                const int n_lab = static_cast<int>(rng.below(3));
                for (int l = 0; l < n_lab; ++l) visit.labs.push_back(sample_code(rng, variant.labs));
            }

            if (!bmi_never && (j == 0 || rng.bernoulli(0.5)))
                visit.bmi = clamp_int(base_bmi + rng.range(-1, 1), 15, 45);
            if (smoking_cat != Smoking::Unknown && (j == 0 || rng.bernoulli(0.4)))
                visit.smoking = smoking_cat;

            journey.visits.push_back(std::move(visit));
            if (j == cancer_idx && death_drawn)
                deceased_day = day + rng.range(1, 365);
        }

        // Death truncates the record; the cancer visit itself always survives.
        if (deceased_day >= 0) {
            journey.deceased_day = deceased_day;
            while (!journey.visits.empty() && journey.visits.back().date > deceased_day)
                journey.visits.pop_back();
        }

        // Labels are recomputed from the emitted journey, never from the
        // draws, so the table always matches the data exactly.
        const auto& pid = journey.patient_id;
        cohort.labels.push_back({pid, kTaskDiagEvent, has_diagnosis(journey, spec.diag_event_code) ? 1 : 0});
        cohort.labels.push_back({pid, kTaskProcEvent, has_procedure(journey, spec.proc_event_code) ? 1 : 0});
        bool long_stay = false;
        for (const auto& v : journey.visits) long_stay = long_stay || v.stay_days > 7;
        cohort.labels.push_back({pid, kTaskPlos, long_stay ? 1 : 0});

        const int cancer_day = first_cancer_day(journey);
        if (cancer_day >= 0) {
            const bool d6 = journey.deceased_day && *journey.deceased_day <= cancer_day + 180;
            const bool d12 = journey.deceased_day && *journey.deceased_day <= cancer_day + 365;
            cohort.labels.push_back({pid, kTaskDeath6m, d6 ? 1 : 0});
            cohort.labels.push_back({pid, kTaskDeath12m, d12 ? 1 : 0});
        }
        const int hf_day = first_code_day(journey, "I50");
        if (hf_day >= 0) {
            bool readmit = false;
            for (const auto& v : journey.visits) readmit = readmit || (v.date > hf_day && v.date <= hf_day + 30);
            cohort.labels.push_back({pid, kTaskHfReadmit, readmit ? 1 : 0});
        }

        cohort.archetypes.push_back({pid, arch_idx, var_idx});
        cohort.journeys.push_back(std::move(journey));
    }
    return cohort;
}

} // namespace exbehrt

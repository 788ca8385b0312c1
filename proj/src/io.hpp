#pragma once

// File formats: journey JSONL, label and archetype CSV tables, cohort spec
// JSON, and key=value config files. Data errors carry file and line.

#include <map>
#include <string>
#include <vector>

#include "cohort.hpp"
#include "journey.hpp"

namespace exbehrt {

// One JSON object per line. Fields: patient_id, gender (M/F/Unknown),
// deceased_day (optional), visits: [{date, age, stay_days, bmi (optional),
// smoking (optional), diagnoses, procedures, labs}].
std::string journeys_to_jsonl(const std::vector<PatientJourney>& journeys);
std::vector<PatientJourney> journeys_from_jsonl(const std::string& content,
                                                const std::string& source_name);

std::vector<PatientJourney> read_journeys(const std::string& path);
void write_journeys(const std::string& path, const std::vector<PatientJourney>& journeys);

// CSV with header patient_id,task,label.
std::string labels_to_csv(const std::vector<LabelRow>& rows);
std::vector<LabelRow> labels_from_csv(const std::string& content, const std::string& source_name);
std::vector<LabelRow> read_labels(const std::string& path);
void write_labels(const std::string& path, const std::vector<LabelRow>& rows);

// Label rows for one task, keyed by patient id.
std::map<std::string, int> labels_for_task(const std::vector<LabelRow>& rows, const std::string& task);

// CSV with header patient_id,archetype,variant.
std::string archetypes_to_csv(const std::vector<ArchetypeAssignment>& rows);
std::vector<ArchetypeAssignment> archetypes_from_csv(const std::string& content,
                                                     const std::string& source_name);
void write_archetypes(const std::string& path, const std::vector<ArchetypeAssignment>& rows);
std::vector<ArchetypeAssignment> read_archetypes(const std::string& path);

std::string cohort_spec_to_json(const CohortSpec& spec);
CohortSpec cohort_spec_from_json(const std::string& content, const std::string& source_name);
CohortSpec read_cohort_spec(const std::string& path);

std::string read_text(const std::string& path);

// key=value lines; '#' starts a comment; blank lines ignored. Duplicate keys
// are a data error.
std::map<std::string, std::string> config_from_text(const std::string& content,
                                                    const std::string& source_name);
std::map<std::string, std::string> read_config(const std::string& path);
std::string config_to_text(const std::map<std::string, std::string>& config);

} // namespace exbehrt

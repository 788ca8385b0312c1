#include "io.hpp"

#include <fstream>
#include <sstream>

#include "error.hpp"
#include "json.hpp"

namespace exbehrt {

namespace {

using Json = nlohmann::ordered_json;

std::string line_context(const std::string& source, size_t line) {
    return source + ": line " + std::to_string(line) + ": ";
}

Json journey_to_json(const PatientJourney& j) {
    Json out;
    out["patient_id"] = j.patient_id;
    out["gender"] = to_string(j.gender);
    if (j.deceased_day) out["deceased_day"] = *j.deceased_day;
    Json visits = Json::array();
    for (const auto& v : j.visits) {
        Json jv;
        jv["date"] = v.date;
        jv["age"] = v.age;
        jv["stay_days"] = v.stay_days;
        if (v.bmi) jv["bmi"] = *v.bmi;
        if (v.smoking) jv["smoking"] = to_string(*v.smoking);
        jv["diagnoses"] = v.diagnoses;
        jv["procedures"] = v.procedures;
        jv["labs"] = v.labs;
        visits.push_back(std::move(jv));
    }
    out["visits"] = std::move(visits);
    return out;
}

std::vector<std::string> string_list(const Json& j, const char* field) {
    if (!j.contains(field) || !j[field].is_array())
        throw data_error(std::string("missing or non-array field: ") + field);
    std::vector<std::string> out;
    for (const auto& e : j[field]) {
        if (!e.is_string()) throw data_error(std::string("non-string entry in ") + field);
        out.push_back(e.get<std::string>());
    }
    return out;
}

PatientJourney journey_from_json(const Json& j) {
    if (!j.is_object()) throw data_error("journey record must be a JSON object");
    PatientJourney out;
    if (!j.contains("patient_id") || !j["patient_id"].is_string())
        throw data_error("missing or non-string field: patient_id");
    out.patient_id = j["patient_id"].get<std::string>();
    if (!j.contains("gender") || !j["gender"].is_string())
        throw data_error("missing or non-string field: gender");
    out.gender = gender_from_string(j["gender"].get<std::string>());
    if (j.contains("deceased_day")) {
        if (!j["deceased_day"].is_number_integer())
            throw data_error("non-integer field: deceased_day");
        out.deceased_day = j["deceased_day"].get<int>();
    }
    if (!j.contains("visits") || !j["visits"].is_array())
        throw data_error("missing or non-array field: visits");
    for (const auto& jv : j["visits"]) {
        if (!jv.is_object()) throw data_error("visit record must be a JSON object");
        Visit v;
        for (const char* f : {"date", "age", "stay_days"})
            if (!jv.contains(f) || !jv[f].is_number_integer())
                throw data_error(std::string("missing or non-integer visit field: ") + f);
        v.date = jv["date"].get<int>();
        v.age = jv["age"].get<int>();
        v.stay_days = jv["stay_days"].get<int>();
        if (jv.contains("bmi")) {
            if (!jv["bmi"].is_number_integer()) throw data_error("non-integer visit field: bmi");
            v.bmi = jv["bmi"].get<int>();
        }
        if (jv.contains("smoking")) {
            if (!jv["smoking"].is_string()) throw data_error("non-string visit field: smoking");
            v.smoking = smoking_from_string(jv["smoking"].get<std::string>());
        }
        v.diagnoses = string_list(jv, "diagnoses");
        v.procedures = string_list(jv, "procedures");
        v.labs = string_list(jv, "labs");
        out.visits.push_back(std::move(v));
    }
    return out;
}

} // namespace

std::string journeys_to_jsonl(const std::vector<PatientJourney>& journeys) {
    std::ostringstream os;
    for (const auto& j : journeys) os << journey_to_json(j).dump() << '\n';
    return os.str();
}

std::vector<PatientJourney> journeys_from_jsonl(const std::string& content,
                                                const std::string& source_name) {
    std::vector<PatientJourney> out;
    std::istringstream is(content);
    std::string line;
    size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            out.push_back(journey_from_json(Json::parse(line)));
        } catch (const Json::exception& e) {
            throw data_error(line_context(source_name, lineno) + e.what());
        } catch (const ExbError& e) {
            throw data_error(line_context(source_name, lineno) + e.what());
        }
    }
    return out;
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("cannot open file: " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

namespace {

void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("cannot open for writing: " + path);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw data_error("write failed: " + path);
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    for (char c : line) {
        if (c == ',') {
            out.push_back(field);
            field.clear();
        } else if (c != '\r') {
            field += c;
        }
    }
    out.push_back(field);
    return out;
}

} // namespace

std::vector<PatientJourney> read_journeys(const std::string& path) {
    return journeys_from_jsonl(read_text(path), path);
}

void write_journeys(const std::string& path, const std::vector<PatientJourney>& journeys) {
    write_text(path, journeys_to_jsonl(journeys));
}

std::string labels_to_csv(const std::vector<LabelRow>& rows) {
    std::ostringstream os;
    os << "patient_id,task,label\n";
    for (const auto& r : rows) os << r.patient_id << ',' << r.task << ',' << r.label << '\n';
    return os.str();
}

std::vector<LabelRow> labels_from_csv(const std::string& content, const std::string& source_name) {
    std::vector<LabelRow> out;
    std::istringstream is(content);
    std::string line;
    size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        const auto fields = split_csv_line(line);
        if (lineno == 1) {
            if (fields != std::vector<std::string>{"patient_id", "task", "label"})
                throw data_error(line_context(source_name, lineno) +
                                 "expected header patient_id,task,label");
            continue;
        }
        if (fields.size() != 3)
            throw data_error(line_context(source_name, lineno) + "expected 3 fields");
        LabelRow r;
        r.patient_id = fields[0];
        r.task = fields[1];
        if (fields[2] == "0")
            r.label = 0;
        else if (fields[2] == "1")
            r.label = 1;
        else
            throw data_error(line_context(source_name, lineno) + "label must be 0 or 1");
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<LabelRow> read_labels(const std::string& path) {
    return labels_from_csv(read_text(path), path);
}

void write_labels(const std::string& path, const std::vector<LabelRow>& rows) {
    write_text(path, labels_to_csv(rows));
}

std::map<std::string, int> labels_for_task(const std::vector<LabelRow>& rows, const std::string& task) {
    std::map<std::string, int> out;
    for (const auto& r : rows)
        if (r.task == task) out[r.patient_id] = r.label;
    return out;
}

std::string archetypes_to_csv(const std::vector<ArchetypeAssignment>& rows) {
    std::ostringstream os;
    os << "patient_id,archetype,variant\n";
    for (const auto& r : rows) os << r.patient_id << ',' << r.archetype << ',' << r.variant << '\n';
    return os.str();
}

std::vector<ArchetypeAssignment> archetypes_from_csv(const std::string& content,
                                                     const std::string& source_name) {
    std::vector<ArchetypeAssignment> out;
    std::istringstream is(content);
    std::string line;
    size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        const auto fields = split_csv_line(line);
        if (lineno == 1) {
            if (fields != std::vector<std::string>{"patient_id", "archetype", "variant"})
                throw data_error(line_context(source_name, lineno) +
                                 "expected header patient_id,archetype,variant");
            continue;
        }
        if (fields.size() != 3)
            throw data_error(line_context(source_name, lineno) + "expected 3 fields");
        try {
            out.push_back({fields[0], std::stoi(fields[1]), std::stoi(fields[2])});
        } catch (const std::exception&) {
            throw data_error(line_context(source_name, lineno) + "archetype ids must be integers");
        }
    }
    return out;
}

void write_archetypes(const std::string& path, const std::vector<ArchetypeAssignment>& rows) {
    write_text(path, archetypes_to_csv(rows));
}

std::vector<ArchetypeAssignment> read_archetypes(const std::string& path) {
    return archetypes_from_csv(read_text(path), path);
}

namespace {

Json codes_to_json(const std::vector<WeightedCode>& codes) {
    Json out = Json::array();
    for (const auto& c : codes) out.push_back(Json{{"code", c.code}, {"weight", c.weight}});
    return out;
}

std::vector<WeightedCode> codes_from_json(const Json& j) {
    std::vector<WeightedCode> out;
    for (const auto& e : j) out.push_back({e.at("code").get<std::string>(), e.at("weight").get<double>()});
    return out;
}

} // namespace

std::string cohort_spec_to_json(const CohortSpec& spec) {
    Json out;
    out["patient_count"] = spec.patient_count;
    out["seed"] = spec.seed;
    out["min_visits"] = spec.min_visits;
    out["short_journey_rate"] = spec.short_journey_rate;
    out["death_rule"] = {{"bias", spec.death_rule.bias}, {"age_weight", spec.death_rule.age_weight}};
    out["readmit_rule"] = {{"bias", spec.readmit_rule.bias}, {"age_weight", spec.readmit_rule.age_weight}};
    out["diag_event_code"] = spec.diag_event_code;
    out["diag_event_rate"] = spec.diag_event_rate;
    out["proc_event_code"] = spec.proc_event_code;
    out["proc_event_rate"] = spec.proc_event_rate;
    Json archetypes = Json::array();
    for (const auto& a : spec.archetypes) {
        Json ja;
        ja["name"] = a.name;
        ja["signature_code"] = a.signature_code;
        ja["weight"] = a.weight;
        ja["female_rate"] = a.female_rate;
        ja["bmi_mu"] = a.bmi_mu;
        ja["bmi_missing_rate"] = a.bmi_missing_rate;
        ja["smoking_dist"] = a.smoking_dist;
        ja["long_stay_rate"] = a.long_stay_rate;
        ja["heart_failure_rate"] = a.heart_failure_rate;
        ja["death_weight"] = a.death_weight;
        ja["readmit_weight"] = a.readmit_weight;
        Json variants = Json::array();
        for (const auto& v : a.variants) {
            Json jv;
            jv["name"] = v.name;
            jv["weight"] = v.weight;
            jv["age_mu"] = v.age_mu;
            jv["age_sigma"] = v.age_sigma;
            jv["diagnoses"] = codes_to_json(v.diagnoses);
            jv["procedures"] = codes_to_json(v.procedures);
            jv["labs"] = codes_to_json(v.labs);
            variants.push_back(std::move(jv));
        }
        ja["variants"] = std::move(variants);
        archetypes.push_back(std::move(ja));
    }
    out["archetypes"] = std::move(archetypes);
    return out.dump(2) + "\n";
}

CohortSpec cohort_spec_from_json(const std::string& content, const std::string& source_name) {
    try {
        const Json j = Json::parse(content);
        CohortSpec spec;
        spec.archetypes.clear();
        if (j.contains("patient_count")) spec.patient_count = j["patient_count"].get<int>();
        if (j.contains("seed")) spec.seed = j["seed"].get<uint64_t>();
        if (j.contains("min_visits")) spec.min_visits = j["min_visits"].get<int>();
        if (j.contains("short_journey_rate"))
            spec.short_journey_rate = j["short_journey_rate"].get<double>();
        if (j.contains("death_rule"))
            spec.death_rule = {j["death_rule"].at("bias").get<double>(),
                               j["death_rule"].at("age_weight").get<double>()};
        if (j.contains("readmit_rule"))
            spec.readmit_rule = {j["readmit_rule"].at("bias").get<double>(),
                                 j["readmit_rule"].at("age_weight").get<double>()};
        if (j.contains("diag_event_code")) spec.diag_event_code = j["diag_event_code"].get<std::string>();
        if (j.contains("diag_event_rate")) spec.diag_event_rate = j["diag_event_rate"].get<double>();
        if (j.contains("proc_event_code")) spec.proc_event_code = j["proc_event_code"].get<std::string>();
        if (j.contains("proc_event_rate")) spec.proc_event_rate = j["proc_event_rate"].get<double>();
        if (!j.contains("archetypes")) throw data_error("missing field: archetypes");
        for (const auto& ja : j["archetypes"]) {
            Archetype a;
            a.name = ja.at("name").get<std::string>();
            a.signature_code = ja.at("signature_code").get<std::string>();
            a.weight = ja.at("weight").get<double>();
            if (ja.contains("female_rate")) a.female_rate = ja["female_rate"].get<double>();
            if (ja.contains("bmi_mu")) a.bmi_mu = ja["bmi_mu"].get<double>();
            if (ja.contains("bmi_missing_rate"))
                a.bmi_missing_rate = ja["bmi_missing_rate"].get<double>();
            if (ja.contains("smoking_dist")) {
                const auto dist = ja["smoking_dist"].get<std::vector<double>>();
                if (dist.size() != 4) throw data_error("smoking_dist must have 4 entries");
                std::copy(dist.begin(), dist.end(), a.smoking_dist.begin());
            }
            if (ja.contains("long_stay_rate")) a.long_stay_rate = ja["long_stay_rate"].get<double>();
            if (ja.contains("heart_failure_rate"))
                a.heart_failure_rate = ja["heart_failure_rate"].get<double>();
            if (ja.contains("death_weight")) a.death_weight = ja["death_weight"].get<double>();
            if (ja.contains("readmit_weight")) a.readmit_weight = ja["readmit_weight"].get<double>();
            for (const auto& jv : ja.at("variants")) {
                ArchetypeVariant v;
                v.name = jv.at("name").get<std::string>();
                v.weight = jv.at("weight").get<double>();
                v.age_mu = jv.at("age_mu").get<double>();
                v.age_sigma = jv.at("age_sigma").get<double>();
                v.diagnoses = codes_from_json(jv.at("diagnoses"));
                if (jv.contains("procedures")) v.procedures = codes_from_json(jv["procedures"]);
                if (jv.contains("labs")) v.labs = codes_from_json(jv["labs"]);
                a.variants.push_back(std::move(v));
            }
            spec.archetypes.push_back(std::move(a));
        }
        return spec;
    } catch (const Json::exception& e) {
        throw data_error(source_name + ": " + e.what());
    }
}

CohortSpec read_cohort_spec(const std::string& path) {
    return cohort_spec_from_json(read_text(path), path);
}

std::map<std::string, std::string> config_from_text(const std::string& content,
                                                    const std::string& source_name) {
    std::map<std::string, std::string> out;
    std::istringstream is(content);
    std::string line;
    size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        const auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos) continue;
        const auto last = line.find_last_not_of(" \t");
        line = line.substr(first, last - first + 1);
        const size_t eq = line.find('=');
        if (eq == std::string::npos || eq == 0)
            throw data_error(line_context(source_name, lineno) + "expected key=value");
        std::string key = line.substr(0, eq);
        std::string value = line.substr(eq + 1);
        while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
        while (!value.empty() && (value.front() == ' ' || value.front() == '\t')) value.erase(0, 1);
        if (out.count(key))
            throw data_error(line_context(source_name, lineno) + "duplicate key: " + key);
        out.emplace(std::move(key), std::move(value));
    }
    return out;
}

std::map<std::string, std::string> read_config(const std::string& path) {
    return config_from_text(read_text(path), path);
}

std::string config_to_text(const std::map<std::string, std::string>& config) {
    std::ostringstream os;
    for (const auto& [k, v] : config) os << k << '=' << v << '\n';
    return os.str();
}

} // namespace exbehrt

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cohort.hpp"
#include "error.hpp"
#include "io.hpp"
#include "journey.hpp"
#include "test_util.hpp"

using namespace exbehrt;
using namespace exbehrt::testutil;

namespace {

// Message check that survives doctest's CHECK_THROWS_WITH quoting quirks.
bool throws_containing(const std::function<void()>& fn, const std::string& needle) {
    try {
        fn();
    } catch (const ExbError& e) {
        return std::string(e.what()).find(needle) != std::string::npos;
    }
    return false;
}

std::filesystem::path temp_file(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "exbehrt_io_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

PatientJourney full_journey() {
    PatientJourney j = make_journey(
        "p/1,x", {make_visit(10, 60, {"J44", "E11"}, {"P10"}, {"L5"}), make_visit(45, 60, {"I10"})},
        Gender::M);
    j.deceased_day = 120;
    j.visits[0].stay_days = 3;
    j.visits[0].bmi = 31;
    j.visits[0].smoking = Smoking::Former;
    return j;
}

} // namespace

TEST_CASE("journeys jsonl: round-trips every field including optionals") {
    std::vector<PatientJourney> js;
    js.push_back(full_journey());
    js.push_back(make_journey("plain", {make_visit(5, 40, {"K21"})}));

    const std::string text = journeys_to_jsonl(js);
    CHECK(std::count(text.begin(), text.end(), '\n') == 2);

    const auto back = journeys_from_jsonl(text, "mem");
    REQUIRE(back.size() == 2);
    CHECK(back[0].patient_id == "p/1,x");
    CHECK(back[0].gender == Gender::M);
    REQUIRE(back[0].deceased_day.has_value());
    CHECK(*back[0].deceased_day == 120);
    REQUIRE(back[0].visits.size() == 2);
    CHECK(back[0].visits[0].date == 10);
    CHECK(back[0].visits[0].age == 60);
    CHECK(back[0].visits[0].stay_days == 3);
    REQUIRE(back[0].visits[0].bmi.has_value());
    CHECK(*back[0].visits[0].bmi == 31);
    REQUIRE(back[0].visits[0].smoking.has_value());
    CHECK(*back[0].visits[0].smoking == Smoking::Former);
    CHECK(back[0].visits[0].diagnoses == std::vector<std::string>{"J44", "E11"});
    CHECK(back[0].visits[0].procedures == std::vector<std::string>{"P10"});
    CHECK(back[0].visits[0].labs == std::vector<std::string>{"L5"});
    CHECK(back[0].visits[1].diagnoses == std::vector<std::string>{"I10"});
    CHECK_FALSE(back[0].visits[1].bmi.has_value());
    CHECK_FALSE(back[0].visits[1].smoking.has_value());
    CHECK(back[1].patient_id == "plain");
    CHECK(back[1].gender == Gender::F);
    CHECK_FALSE(back[1].deceased_day.has_value());

    // A second serialization of the parsed journeys is byte-identical.
    CHECK(journeys_to_jsonl(back) == text);
}

TEST_CASE("journeys jsonl: blank lines are skipped but still counted") {
    const std::string good = journeys_to_jsonl({make_journey("a", {make_visit(1, 30, {"J44"})})});
    const auto parsed = journeys_from_jsonl("\n" + good + "\n\n" + good, "mem");
    CHECK(parsed.size() == 2);

    // The error on physical line 3 reports line 3 even though line 2 is blank.
    const std::string bad = good + "\n{not json";
    CHECK(throws_containing([&] { journeys_from_jsonl(bad, "feed.jsonl"); }, "feed.jsonl: line 3:"));
}

TEST_CASE("journeys jsonl: malformed records carry source and line context") {
    auto parse = [](const std::string& line) { return journeys_from_jsonl(line, "src"); };

    CHECK(throws_containing([&] { parse("[1,2]"); }, "journey record must be a JSON object"));
    CHECK(throws_containing([&] { parse("17"); }, "journey record must be a JSON object"));
    CHECK(throws_containing([&] { parse(R"({"gender":"F","visits":[]})"); },
                            "missing or non-string field: patient_id"));
    CHECK(throws_containing([&] { parse(R"({"patient_id":7,"gender":"F","visits":[]})"); },
                            "missing or non-string field: patient_id"));
    CHECK(throws_containing([&] { parse(R"({"patient_id":"a","visits":[]})"); },
                            "missing or non-string field: gender"));
    CHECK(throws_containing([&] { parse(R"({"patient_id":"a","gender":"Q","visits":[]})"); },
                            "invalid gender value: Q"));
    CHECK(throws_containing(
        [&] { parse(R"({"patient_id":"a","gender":"F","deceased_day":1.5,"visits":[]})"); },
        "non-integer field: deceased_day"));
    CHECK(throws_containing([&] { parse(R"({"patient_id":"a","gender":"F"})"); },
                            "missing or non-array field: visits"));
    CHECK(throws_containing([&] { parse(R"({"patient_id":"a","gender":"F","visits":[3]})"); },
                            "visit record must be a JSON object"));

    const std::string base = R"({"patient_id":"a","gender":"F","visits":[{"age":50,)"
                             R"("stay_days":0,"diagnoses":["J44"],"procedures":[],"labs":[]}]})";
    CHECK(throws_containing([&] { parse(base); }, "missing or non-integer visit field: date"));

    auto visit_with = [](const std::string& extra) {
        return R"({"patient_id":"a","gender":"F","visits":[{"date":1,"age":50,"stay_days":0,)" +
               extra + R"("diagnoses":["J44"],"procedures":[],"labs":[]}]})";
    };
    CHECK(throws_containing([&] { parse(visit_with(R"("bmi":30.5,)")); },
                            "non-integer visit field: bmi"));
    CHECK(throws_containing([&] { parse(visit_with(R"("smoking":3,)")); },
                            "non-string visit field: smoking"));
    CHECK(throws_containing([&] { parse(visit_with(R"("smoking":"Lots",)")); },
                            "invalid smoking value: Lots"));

    CHECK(throws_containing(
        [&] {
            parse(R"({"patient_id":"a","gender":"F","visits":[{"date":1,"age":50,)"
                  R"("stay_days":0,"diagnoses":"J44","procedures":[],"labs":[]}]})");
        },
        "missing or non-array field: diagnoses"));
    CHECK(throws_containing(
        [&] {
            parse(R"({"patient_id":"a","gender":"F","visits":[{"date":1,"age":50,)"
                  R"("stay_days":0,"diagnoses":["J44",2],"procedures":[],"labs":[]}]})");
        },
        "non-string entry in diagnoses"));
    CHECK(throws_containing(
        [&] {
            parse(R"({"patient_id":"a","gender":"F","visits":[{"date":1,"age":50,)"
                  R"("stay_days":0,"diagnoses":["J44"],"labs":[]}]})");
        },
        "missing or non-array field: procedures"));
    CHECK(throws_containing([&] { parse("{oops"); }, "src: line 1:"));
}

TEST_CASE("journeys: file round-trip and missing-file error") {
    const auto path = temp_file("journeys.jsonl");
    std::vector<PatientJourney> js = {full_journey(), make_journey("q", {make_visit(2, 55, {"C50"})})};
    write_journeys(path.string(), js);
    const auto back = read_journeys(path.string());
    REQUIRE(back.size() == 2);
    CHECK(journeys_to_jsonl(back) == journeys_to_jsonl(js));
    std::filesystem::remove(path);

    CHECK(throws_containing([&] { read_journeys(path.string()); },
                            "cannot open file: " + path.string()));
}

TEST_CASE("read_text: returns bytes verbatim and rejects missing paths") {
    const auto path = temp_file("blob.bin");
    const std::string payload = "line1\nline2\r\n\ttabs and \x01 bytes";
    {
        std::ofstream out(path, std::ios::binary);
        out << payload;
    }
    CHECK(read_text(path.string()) == payload);
    std::filesystem::remove(path);
    CHECK(throws_containing([&] { read_text(path.string()); }, "cannot open file:"));
}

TEST_CASE("labels csv: round-trip, header check, and value validation") {
    std::vector<LabelRow> rows = {{"p1", "death_6m", 1}, {"p2", "death_6m", 0}, {"p1", "readmit_6m", 0}};
    const std::string text = labels_to_csv(rows);
    CHECK(text == "patient_id,task,label\np1,death_6m,1\np2,death_6m,0\np1,readmit_6m,0\n");

    const auto back = labels_from_csv(text, "mem");
    REQUIRE(back.size() == 3);
    CHECK(back[0].patient_id == "p1");
    CHECK(back[0].task == "death_6m");
    CHECK(back[0].label == 1);
    CHECK(back[2].task == "readmit_6m");

    // CRLF content parses identically; blank lines are skipped.
    std::string crlf = "patient_id,task,label\r\n\r\np1,death_6m,1\r\n";
    const auto win = labels_from_csv(crlf, "mem");
    REQUIRE(win.size() == 1);
    CHECK(win[0].label == 1);

    CHECK(throws_containing([&] { labels_from_csv("id,task,label\np,t,1\n", "f.csv"); },
                            "f.csv: line 1: expected header patient_id,task,label"));
    CHECK(throws_containing([&] { labels_from_csv(text + "p3,death_6m\n", "f.csv"); },
                            "f.csv: line 5: expected 3 fields"));
    CHECK(throws_containing([&] { labels_from_csv(text + "p3,death_6m,2\n", "f.csv"); },
                            "label must be 0 or 1"));
    CHECK(throws_containing([&] { labels_from_csv(text + "p3,death_6m,yes\n", "f.csv"); },
                            "label must be 0 or 1"));

    const auto path = temp_file("labels.csv");
    write_labels(path.string(), rows);
    const auto from_file = read_labels(path.string());
    REQUIRE(from_file.size() == rows.size());
    CHECK(labels_to_csv(from_file) == text);
    std::filesystem::remove(path);
}

TEST_CASE("labels_for_task: filters by task and keeps the last row per patient") {
    std::vector<LabelRow> rows = {{"p1", "death_6m", 1},
                                  {"p2", "death_6m", 0},
                                  {"p1", "readmit_6m", 0},
                                  {"p2", "death_6m", 1}};
    const auto death = labels_for_task(rows, "death_6m");
    REQUIRE(death.size() == 2);
    CHECK(death.at("p1") == 1);
    CHECK(death.at("p2") == 1); // later row wins
    const auto readmit = labels_for_task(rows, "readmit_6m");
    REQUIRE(readmit.size() == 1);
    CHECK(readmit.at("p1") == 0);
    CHECK(labels_for_task(rows, "nonexistent").empty());
}

TEST_CASE("archetypes csv: round-trip and integer validation") {
    std::vector<ArchetypeAssignment> rows = {{"p1", 0, 2}, {"p2", 5, 0}};
    const std::string text = archetypes_to_csv(rows);
    CHECK(text == "patient_id,archetype,variant\np1,0,2\np2,5,0\n");

    const auto back = archetypes_from_csv(text, "mem");
    REQUIRE(back.size() == 2);
    CHECK(back[0].patient_id == "p1");
    CHECK(back[0].archetype == 0);
    CHECK(back[0].variant == 2);
    CHECK(back[1].archetype == 5);

    CHECK(throws_containing([&] { archetypes_from_csv("a,b,c\n", "g.csv"); },
                            "g.csv: line 1: expected header patient_id,archetype,variant"));
    CHECK(throws_containing([&] { archetypes_from_csv(text + "p3,zero,1\n", "g.csv"); },
                            "archetype ids must be integers"));
    CHECK(throws_containing([&] { archetypes_from_csv(text + "p3,1\n", "g.csv"); },
                            "expected 3 fields"));

    const auto path = temp_file("archetypes.csv");
    write_archetypes(path.string(), rows);
    const auto from_file = read_archetypes(path.string());
    REQUIRE(from_file.size() == 2);
    CHECK(archetypes_to_csv(from_file) == text);
    std::filesystem::remove(path);
}

TEST_CASE("cohort spec json: default spec round-trips exactly") {
    const CohortSpec spec = default_cohort_spec();
    const std::string text = cohort_spec_to_json(spec);
    const CohortSpec back = cohort_spec_from_json(text, "mem");

    CHECK(back.patient_count == spec.patient_count);
    CHECK(back.seed == spec.seed);
    CHECK(back.min_visits == spec.min_visits);
    CHECK(back.short_journey_rate == spec.short_journey_rate);
    CHECK(back.death_rule.bias == spec.death_rule.bias);
    CHECK(back.death_rule.age_weight == spec.death_rule.age_weight);
    CHECK(back.readmit_rule.bias == spec.readmit_rule.bias);
    CHECK(back.diag_event_code == spec.diag_event_code);
    CHECK(back.diag_event_rate == spec.diag_event_rate);
    CHECK(back.proc_event_code == spec.proc_event_code);
    CHECK(back.proc_event_rate == spec.proc_event_rate);

    REQUIRE(back.archetypes.size() == spec.archetypes.size());
    for (size_t i = 0; i < spec.archetypes.size(); ++i) {
        const Archetype& a = spec.archetypes[i];
        const Archetype& b = back.archetypes[i];
        CHECK(b.name == a.name); // order is preserved
        CHECK(b.signature_code == a.signature_code);
        CHECK(b.weight == a.weight);
        CHECK(b.female_rate == a.female_rate);
        CHECK(b.bmi_mu == a.bmi_mu);
        CHECK(b.bmi_missing_rate == a.bmi_missing_rate);
        CHECK(b.smoking_dist == a.smoking_dist);
        CHECK(b.long_stay_rate == a.long_stay_rate);
        CHECK(b.heart_failure_rate == a.heart_failure_rate);
        CHECK(b.death_weight == a.death_weight);
        CHECK(b.readmit_weight == a.readmit_weight);
        REQUIRE(b.variants.size() == a.variants.size());
        for (size_t k = 0; k < a.variants.size(); ++k) {
            CHECK(b.variants[k].name == a.variants[k].name);
            CHECK(b.variants[k].weight == a.variants[k].weight);
            CHECK(b.variants[k].age_mu == a.variants[k].age_mu);
            CHECK(b.variants[k].age_sigma == a.variants[k].age_sigma);
            REQUIRE(b.variants[k].diagnoses.size() == a.variants[k].diagnoses.size());
            for (size_t c = 0; c < a.variants[k].diagnoses.size(); ++c) {
                CHECK(b.variants[k].diagnoses[c].code == a.variants[k].diagnoses[c].code);
                CHECK(b.variants[k].diagnoses[c].weight == a.variants[k].diagnoses[c].weight);
            }
            CHECK(b.variants[k].procedures.size() == a.variants[k].procedures.size());
            CHECK(b.variants[k].labs.size() == a.variants[k].labs.size());
        }
    }

    // Serializing the parsed spec reproduces the text byte for byte.
    CHECK(cohort_spec_to_json(back) == text);

    const auto path = temp_file("spec.json");
    {
        std::ofstream out(path, std::ios::binary);
        out << text;
    }
    const CohortSpec from_file = read_cohort_spec(path.string());
    CHECK(cohort_spec_to_json(from_file) == text);
    std::filesystem::remove(path);
}

TEST_CASE("cohort spec json: omitted scalars fall back to defaults") {
    const std::string minimal = R"({"archetypes":[{"name":"only","signature_code":"J44",
        "weight":1.0,"variants":[{"name":"v","weight":1.0,"age_mu":60.0,"age_sigma":5.0,
        "diagnoses":[{"code":"J44","weight":2.0}]}]}]})";
    const CohortSpec spec = cohort_spec_from_json(minimal, "mem");
    const CohortSpec defaults{};
    CHECK(spec.patient_count == defaults.patient_count);
    CHECK(spec.seed == defaults.seed);
    CHECK(spec.min_visits == defaults.min_visits);
    REQUIRE(spec.archetypes.size() == 1);
    CHECK(spec.archetypes[0].name == "only");
    REQUIRE(spec.archetypes[0].variants.size() == 1);
    CHECK(spec.archetypes[0].variants[0].procedures.empty());
    CHECK(spec.archetypes[0].variants[0].labs.empty());
    REQUIRE(spec.archetypes[0].variants[0].diagnoses.size() == 1);
    CHECK(spec.archetypes[0].variants[0].diagnoses[0].code == "J44");
    CHECK(spec.archetypes[0].variants[0].diagnoses[0].weight == 2.0);
}

TEST_CASE("cohort spec json: structural errors carry the source name") {
    CHECK(throws_containing([&] { cohort_spec_from_json("{nope", "spec.json"); }, "spec.json: "));
    CHECK(throws_containing([&] { cohort_spec_from_json(R"({"patient_count":10})", "s"); },
                            "missing field: archetypes"));
    CHECK(throws_containing(
        [&] {
            cohort_spec_from_json(R"({"archetypes":[{"name":"x","signature_code":"J44",
                "weight":1.0,"smoking_dist":[0.5,0.5],"variants":[]}]})",
                                  "s");
        },
        "smoking_dist must have 4 entries"));
    // Missing required archetype field surfaces as a json error with context.
    CHECK(throws_containing([&] { cohort_spec_from_json(R"({"archetypes":[{"name":"x"}]})", "s"); },
                            "s: "));
}

TEST_CASE("config: parses comments, trims whitespace, and rejects duplicates") {
    const std::string text =
        "# leading comment\n"
        "alpha=1\n"
        "  beta  =  two words  \n"
        "gamma=has=equals\n"
        "delta=0.5 # inline note\n"
        "\n"
        "   \t  \n"
        "empty=\n";
    const auto cfg = config_from_text(text, "mem");
    REQUIRE(cfg.size() == 5);
    CHECK(cfg.at("alpha") == "1");
    CHECK(cfg.at("beta") == "two words");
    CHECK(cfg.at("gamma") == "has=equals"); // first '=' splits
    CHECK(cfg.at("delta") == "0.5");
    CHECK(cfg.at("empty").empty());

    CHECK(throws_containing([&] { config_from_text("a=1\na=2\n", "c.cfg"); },
                            "c.cfg: line 2: duplicate key: a"));
    CHECK(throws_containing([&] { config_from_text("justakey\n", "c.cfg"); },
                            "c.cfg: line 1: expected key=value"));
    CHECK(throws_containing([&] { config_from_text("=value\n", "c.cfg"); },
                            "expected key=value"));

    // CRLF input parses; comment-only and blank lines never error.
    const auto win = config_from_text("a=1\r\n# note\r\nb=2\r\n", "mem");
    CHECK(win.at("a") == "1");
    CHECK(win.at("b") == "2");
}

TEST_CASE("config: serialization is sorted and round-trips") {
    std::map<std::string, std::string> cfg = {{"zeta", "9"}, {"alpha", "x y"}, {"mid", ""}};
    const std::string text = config_to_text(cfg);
    CHECK(text == "alpha=x y\nmid=\nzeta=9\n");
    CHECK(config_from_text(text, "mem") == cfg);

    const auto path = temp_file("run.cfg");
    {
        std::ofstream out(path, std::ios::binary);
        out << text;
    }
    CHECK(read_config(path.string()) == cfg);
    std::filesystem::remove(path);
}

#include "vocab.hpp"

#include <algorithm>
#include <set>

namespace exbehrt {

const char* to_string(GridChannel ch) {
    switch (ch) {
        case GridChannel::Diagnosis: return "diagnosis";
        case GridChannel::Procedure: return "procedure";
        case GridChannel::Lab: return "lab";
        case GridChannel::Age: return "age";
        case GridChannel::Segment: return "segment";
        case GridChannel::Position: return "position";
        case GridChannel::Gender: return "gender";
        case GridChannel::Bmi: return "bmi";
        case GridChannel::Smoking: return "smoking";
    }
    return "?";
}

namespace {

const std::string kReservedNames[Vocabulary::kReserved] = {"PAD", "UNK", "CLS", "SEP", "MASK"};

} // namespace

int Vocabulary::add(GridChannel ch, const std::string& code) {
    auto& cv = channels_[static_cast<int>(ch)];
    auto it = cv.to_id.find(code);
    if (it != cv.to_id.end()) return it->second;
    const int id = kReserved + static_cast<int>(cv.to_code.size());
    cv.to_id.emplace(code, id);
    cv.to_code.push_back(code);
    return id;
}

int Vocabulary::encode(GridChannel ch, const std::string& code) const {
    const auto& cv = channels_[static_cast<int>(ch)];
    auto it = cv.to_id.find(code);
    return it == cv.to_id.end() ? kUnk : it->second;
}

const std::string& Vocabulary::decode(GridChannel ch, int id) const {
    if (id >= 0 && id < kReserved) return kReservedNames[id];
    const auto& cv = channels_[static_cast<int>(ch)];
    const size_t idx = static_cast<size_t>(id - kReserved);
    if (idx >= cv.to_code.size()) throw internal_error("token id out of range");
    return cv.to_code[idx];
}

bool Vocabulary::contains(GridChannel ch, const std::string& code) const {
    const auto& cv = channels_[static_cast<int>(ch)];
    return cv.to_id.count(code) > 0;
}

int Vocabulary::size(GridChannel ch) const {
    return kReserved + static_cast<int>(channels_[static_cast<int>(ch)].to_code.size());
}

int Vocabulary::code_count(GridChannel ch) const {
    return static_cast<int>(channels_[static_cast<int>(ch)].to_code.size());
}

bool Vocabulary::empty() const {
    for (const auto& cv : channels_) {
        if (!cv.to_code.empty()) return false;
    }
    return true;
}

Vocabulary build_vocabulary(const std::vector<PatientJourney>& journeys) {
    std::array<std::set<std::string>, kNumChannels> seen;
    auto note = [&](GridChannel ch, const std::string& code) {
        seen[static_cast<int>(ch)].insert(code);
    };

    size_t max_visits = 0;
    for (const auto& j : journeys) {
        max_visits = std::max(max_visits, j.visits.size());
        note(GridChannel::Gender, to_string(j.gender));
        for (const auto& v : j.visits) {
            for (const auto& c : v.diagnoses) note(GridChannel::Diagnosis, c);
            for (const auto& c : v.procedures) note(GridChannel::Procedure, c);
            for (const auto& c : v.labs) note(GridChannel::Lab, c);
            note(GridChannel::Age, std::to_string(v.age));
            note(GridChannel::Bmi, v.bmi ? std::to_string(*v.bmi) : kMissingObservation);
            note(GridChannel::Smoking,
                 v.smoking ? to_string(*v.smoking) : to_string(Smoking::Unknown));
        }
    }
    note(GridChannel::Segment, "A");
    note(GridChannel::Segment, "B");
    for (size_t p = 0; p < max_visits; ++p) note(GridChannel::Position, std::to_string(p));

    Vocabulary vocab;
    for (int ch = 0; ch < kNumChannels; ++ch) {
        for (const auto& code : seen[ch]) {
            vocab.add(static_cast<GridChannel>(ch), code);
        }
    }
    return vocab;
}

} // namespace exbehrt

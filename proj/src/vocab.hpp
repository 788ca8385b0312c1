#pragma once

// Token vocabularies, one per grid channel. Reserved ids are shared across
// channels; real ids are dense and assigned in sorted code order, so two
// builds over the same corpus produce identical mappings.

#include <array>
#include <string>
#include <unordered_map>
#include <vector>

#include "journey.hpp"

namespace exbehrt {

// Channels of the slot grid. The first three hold medical codes; the rest
// hold per-visit observation tokens.
enum class GridChannel {
    Diagnosis = 0,
    Procedure,
    Lab,
    Age,
    Segment,
    Position,
    Gender,
    Bmi,
    Smoking,
};
inline constexpr int kNumChannels = 9;

const char* to_string(GridChannel ch);

// Code used for a static observation that was never recorded for a patient.
// It is a real vocabulary entry, distinct from PAD and from UNK.
inline constexpr const char* kMissingObservation = "na";

class Vocabulary {
public:
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;
    static constexpr int kCls = 2;
    static constexpr int kSep = 3;
    static constexpr int kMask = 4;
    static constexpr int kReserved = 5;

    // Registers a code; returns its id (existing or new).
    int add(GridChannel ch, const std::string& code);

    // Maps a code to its id, or UNK for codes unseen at build time.
    int encode(GridChannel ch, const std::string& code) const;

    // Maps an id back to its code; reserved ids decode to their names.
    const std::string& decode(GridChannel ch, int id) const;

    bool contains(GridChannel ch, const std::string& code) const;

    // Total ids in a channel, reserved included.
    int size(GridChannel ch) const;

    // Number of real (non-reserved) codes in a channel.
    int code_count(GridChannel ch) const;

    bool empty() const;

private:
    struct ChannelVocab {
        std::unordered_map<std::string, int> to_id;
        std::vector<std::string> to_code; // indexed by id - kReserved
    };
    std::array<ChannelVocab, kNumChannels> channels_;
};

// Builds the vocabulary over every token the encoder can emit for these
// journeys: codes per channel, observed ages, visit positions, segment
// labels, genders, bmi buckets and smoking states. Deterministic: codes are
// id-assigned in sorted order per channel.
Vocabulary build_vocabulary(const std::vector<PatientJourney>& journeys);

} // namespace exbehrt

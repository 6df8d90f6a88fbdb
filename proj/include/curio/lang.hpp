#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace curio::lang {

// Fixed 18-token vocabulary: index 0 is silence, 1..6 verbs, 7..12 colors,
// 13..17 shapes. Indexes are part of the wire format and never change.
inline constexpr int kVocabSize = 18;
inline constexpr int kSilenceIndex = 0;
inline constexpr int kVerbBase = 1;
inline constexpr int kNumVerbs = 6;
inline constexpr int kAdjectiveBase = 7;
inline constexpr int kNumAdjectives = 6;
inline constexpr int kNounBase = 13;
inline constexpr int kNumNouns = 5;
inline constexpr int kSentenceTokens = 3;

const std::array<std::string, kVocabSize>& token_names();
int token_index(const std::string& name);  // -1 when unknown

// One-hot token rows; each row sums to exactly 1.
using OneHotRow = std::array<double, kVocabSize>;
using VoiceRows = std::vector<OneHotRow>;

struct Sentence {
  int verb = kVerbBase;            // 1..6
  int adjective = kAdjectiveBase;  // 7..12
  int noun = kNounBase;            // 13..17

  bool operator==(const Sentence&) const = default;
  std::string text() const;  // "watch|red|pillar"
};

// Active vocabulary subsets. Subsets are prefixes of the canonical lists.
struct ScaleConfig {
  int verbs = kNumVerbs;
  int adjectives = kNumAdjectives;
  int nouns = kNumNouns;
  std::string name = "full";

  bool contains(const Sentence& s) const;
  int total_sentences() const { return verbs * adjectives * nouns; }
  std::vector<Sentence> all_sentences() const;

  static ScaleConfig preset(const std::string& name);  // full, middle, small, smoke
};

VoiceRows encode_sentence(const Sentence& s);
VoiceRows silence();

// Inverse of encode_sentence; throws std::invalid_argument on malformed rows.
Sentence decode_sentence(const VoiceRows& rows);
bool is_silence(const VoiceRows& rows);

Sentence parse_sentence(const std::string& text);  // "watch|red|pillar"

// Train/test partition of a scale's composition set. One third trains.
struct Split {
  ScaleConfig scale;
  uint64_t seed = 0;
  std::vector<Sentence> train;
  std::vector<Sentence> test;
};

// Deterministic per seed. Resamples until every active token occurs in at
// least one training sentence.
Split generate_split(const ScaleConfig& scale, uint64_t seed);

void write_split(const Split& split, std::ostream& out);
Split read_split(std::istream& in);

}  // namespace curio::lang

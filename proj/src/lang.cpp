#include "curio/lang.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace curio::lang {

const std::array<std::string, kVocabSize>& token_names() {
  static const std::array<std::string, kVocabSize> names = {
      "silence",      "watch", "be near", "touch the top",
      "push forward", "push left", "push right",
      "red",          "green", "blue", "cyan", "magenta", "yellow",
      "pillar",       "pole",  "dumbbell", "cone", "hourglass"};
  return names;
}

int token_index(const std::string& name) {
  const auto& names = token_names();
  auto it = std::find(names.begin(), names.end(), name);
  return it == names.end() ? -1 : static_cast<int>(it - names.begin());
}

std::string Sentence::text() const {
  const auto& names = token_names();
  return names[verb] + "|" + names[adjective] + "|" + names[noun];
}

bool ScaleConfig::contains(const Sentence& s) const {
  return s.verb >= kVerbBase && s.verb < kVerbBase + verbs &&
         s.adjective >= kAdjectiveBase && s.adjective < kAdjectiveBase + adjectives &&
         s.noun >= kNounBase && s.noun < kNounBase + nouns;
}

std::vector<Sentence> ScaleConfig::all_sentences() const {
  std::vector<Sentence> out;
  out.reserve(static_cast<size_t>(total_sentences()));
  for (int v = 0; v < verbs; ++v)
    for (int a = 0; a < adjectives; ++a)
      for (int n = 0; n < nouns; ++n)
        out.push_back({kVerbBase + v, kAdjectiveBase + a, kNounBase + n});
  return out;
}

ScaleConfig ScaleConfig::preset(const std::string& name) {
  if (name == "full") return {6, 6, 5, "full"};
  if (name == "middle") return {5, 5, 4, "middle"};
  if (name == "small") return {4, 4, 3, "small"};
  if (name == "smoke") return {2, 2, 2, "smoke"};
  throw std::invalid_argument("unknown scale preset: " + name);
}

static OneHotRow one_hot(int index) {
  OneHotRow row{};
  row[static_cast<size_t>(index)] = 1.0;
  return row;
}

VoiceRows encode_sentence(const Sentence& s) {
  return {one_hot(s.verb), one_hot(s.adjective), one_hot(s.noun)};
}

VoiceRows silence() { return {one_hot(kSilenceIndex)}; }

static int row_argmax(const OneHotRow& row) {
  int best = 0;
  for (int i = 1; i < kVocabSize; ++i)
    if (row[static_cast<size_t>(i)] > row[static_cast<size_t>(best)]) best = i;
  double sum = 0.0;
  for (double v : row) sum += v;
  if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("voice row does not sum to 1");
  return best;
}

bool is_silence(const VoiceRows& rows) {
  return rows.size() == 1 && row_argmax(rows[0]) == kSilenceIndex;
}

Sentence decode_sentence(const VoiceRows& rows) {
  if (rows.size() != kSentenceTokens) throw std::invalid_argument("sentence needs 3 rows");
  Sentence s{row_argmax(rows[0]), row_argmax(rows[1]), row_argmax(rows[2])};
  if (s.verb < kVerbBase || s.verb >= kVerbBase + kNumVerbs ||
      s.adjective < kAdjectiveBase || s.adjective >= kAdjectiveBase + kNumAdjectives ||
      s.noun < kNounBase || s.noun >= kNounBase + kNumNouns)
    throw std::invalid_argument("rows do not form a verb|adjective|noun sentence");
  return s;
}

Sentence parse_sentence(const std::string& text) {
  std::array<std::string, 3> parts;
  size_t start = 0;
  for (int i = 0; i < 3; ++i) {
    size_t bar = text.find('|', start);
    if (i < 2 && bar == std::string::npos)
      throw std::invalid_argument("expected verb|adjective|noun: " + text);
    parts[static_cast<size_t>(i)] = text.substr(start, bar == std::string::npos ? bar : bar - start);
    start = bar + 1;
  }
  Sentence s{token_index(parts[0]), token_index(parts[1]), token_index(parts[2])};
  if (s.verb < 0 || s.adjective < 0 || s.noun < 0)
    throw std::invalid_argument("unknown token in sentence: " + text);
  try {
    return decode_sentence(encode_sentence(s));
  } catch (const std::invalid_argument&) {
    throw std::invalid_argument("tokens out of grammatical role order: " + text);
  }
}

static bool covers_all_tokens(const ScaleConfig& scale, const std::vector<Sentence>& train) {
  std::vector<bool> verb(static_cast<size_t>(scale.verbs), false);
  std::vector<bool> adj(static_cast<size_t>(scale.adjectives), false);
  std::vector<bool> noun(static_cast<size_t>(scale.nouns), false);
  for (const auto& s : train) {
    verb[static_cast<size_t>(s.verb - kVerbBase)] = true;
    adj[static_cast<size_t>(s.adjective - kAdjectiveBase)] = true;
    noun[static_cast<size_t>(s.noun - kNounBase)] = true;
  }
  auto all = [](const std::vector<bool>& v) { return std::all_of(v.begin(), v.end(), [](bool b) { return b; }); };
  return all(verb) && all(adj) && all(noun);
}

Split generate_split(const ScaleConfig& scale, uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto sentences = scale.all_sentences();
  const auto train_count =
      static_cast<size_t>(std::llround(static_cast<double>(sentences.size()) / 3.0));
  Split split;
  split.scale = scale;
  split.seed = seed;
  while (true) {
    std::shuffle(sentences.begin(), sentences.end(), rng);
    std::vector<Sentence> train(sentences.begin(), sentences.begin() + static_cast<long>(train_count));
    if (covers_all_tokens(scale, train)) {
      split.train = std::move(train);
      split.test.assign(sentences.begin() + static_cast<long>(train_count), sentences.end());
      return split;
    }
  }
}

void write_split(const Split& split, std::ostream& out) {
  out << "# scale=" << split.scale.name << "\n";
  out << "# seed=" << split.seed << "\n";
  out << "# train\n";
  for (const auto& s : split.train) out << s.text() << "\n";
  out << "# test\n";
  for (const auto& s : split.test) out << s.text() << "\n";
}

Split read_split(std::istream& in) {
  Split split;
  std::string line;
  std::vector<Sentence>* target = nullptr;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.rfind("# scale=", 0) == 0) {
      split.scale = ScaleConfig::preset(line.substr(8));
    } else if (line.rfind("# seed=", 0) == 0) {
      split.seed = std::stoull(line.substr(7));
    } else if (line == "# train") {
      target = &split.train;
    } else if (line == "# test") {
      target = &split.test;
    } else {
      if (!target) throw std::invalid_argument("split file: sentence before section header");
      target->push_back(parse_sentence(line));
    }
  }
  return split;
}

}  // namespace curio::lang

#pragma once

#include <cstdint>
#include <json.hpp>
#include <string>
#include <unordered_map>
#include <vector>

namespace lgplug {

// Byte-level BPE trained on the corpus at hand. Normalization lowercases
// ASCII, trims, and collapses whitespace runs; merges are learned by
// greedy highest-frequency pair selection with a lexicographic tie-break so
// training is deterministic. Token id 0 is <pad>, id 1 is <unk>.
class BpeTokenizer {
 public:
  static constexpr int kPadId = 0;
  static constexpr int kUnkId = 1;

  BpeTokenizer() = default;

  static BpeTokenizer train(const std::vector<std::string>& corpus, std::size_t vocab_size);

  static std::string normalize(const std::string& text);

  // Token ids after normalization, truncated to max_len. Empty text encodes
  // to the single <pad> token.
  std::vector<int> encode(const std::string& text, std::size_t max_len) const;

  std::size_t vocab_size() const { return token_of_id_.size(); }
  const std::vector<std::string>& tokens() const { return token_of_id_; }

  nlohmann::json to_json() const;
  static BpeTokenizer from_json(const nlohmann::json& doc);

 private:
  std::vector<std::string> token_of_id_;                  // id -> symbol
  std::unordered_map<std::string, int> id_of_token_;      // symbol -> id
  std::vector<std::pair<std::string, std::string>> merges_;
  std::unordered_map<std::string, std::size_t> merge_rank_;

  void rebuild_lookup();
  std::vector<std::string> split_word(const std::string& word) const;
};

}  // namespace lgplug

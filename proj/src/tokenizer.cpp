#include "lgplug/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>

#include "lgplug/errors.hpp"

namespace lgplug {

using nlohmann::json;

std::string BpeTokenizer::normalize(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
  }
  return out;
}

namespace {

std::string pair_key(const std::string& a, const std::string& b) { return a + "\x1f" + b; }

std::vector<std::string> to_byte_symbols(const std::string& word) {
  std::vector<std::string> syms;
  syms.reserve(word.size());
  for (char c : word) syms.emplace_back(1, c);
  return syms;
}

}  // namespace

BpeTokenizer BpeTokenizer::train(const std::vector<std::string>& corpus, std::size_t vocab_size) {
  BpeTokenizer tk;

  std::map<std::string, std::size_t> word_freq;  // ordered for determinism
  for (const auto& text : corpus) {
    std::istringstream words(normalize(text));
    std::string w;
    while (words >> w) ++word_freq[w];
  }

  // Base vocabulary: <pad>, <unk>, then every byte observed, ascending.
  std::array<bool, 256> seen{};
  for (const auto& [w, f] : word_freq)
    for (unsigned char c : w) seen[c] = true;
  tk.token_of_id_ = {"<pad>", "<unk>"};
  for (int c = 0; c < 256; ++c)
    if (seen[c]) tk.token_of_id_.emplace_back(1, static_cast<char>(c));

  std::vector<std::pair<std::vector<std::string>, std::size_t>> words;
  words.reserve(word_freq.size());
  for (const auto& [w, f] : word_freq) words.emplace_back(to_byte_symbols(w), f);

  while (tk.token_of_id_.size() < vocab_size) {
    // Count adjacent pairs over the running segmentations.
    std::map<std::pair<std::string, std::string>, std::size_t> pair_freq;
    for (const auto& [syms, f] : words)
      for (std::size_t i = 0; i + 1 < syms.size(); ++i)
        pair_freq[{syms[i], syms[i + 1]}] += f;
    if (pair_freq.empty()) break;
    auto best = pair_freq.begin();
    for (auto it = std::next(pair_freq.begin()); it != pair_freq.end(); ++it)
      if (it->second > best->second) best = it;  // ties keep the map-order (lexicographic) first
    if (best->second < 2) break;

    const auto [left, right] = best->first;
    const std::string merged = left + right;
    tk.merges_.emplace_back(left, right);
    tk.token_of_id_.push_back(merged);
    for (auto& [syms, f] : words) {
      for (std::size_t i = 0; i + 1 < syms.size();) {
        if (syms[i] == left && syms[i + 1] == right) {
          syms[i] = merged;
          syms.erase(syms.begin() + static_cast<std::ptrdiff_t>(i) + 1);
        } else {
          ++i;
        }
      }
    }
  }

  tk.rebuild_lookup();
  return tk;
}

void BpeTokenizer::rebuild_lookup() {
  id_of_token_.clear();
  for (std::size_t i = 0; i < token_of_id_.size(); ++i) id_of_token_[token_of_id_[i]] = static_cast<int>(i);
  merge_rank_.clear();
  for (std::size_t r = 0; r < merges_.size(); ++r)
    merge_rank_[pair_key(merges_[r].first, merges_[r].second)] = r;
}

std::vector<std::string> BpeTokenizer::split_word(const std::string& word) const {
  std::vector<std::string> syms = to_byte_symbols(word);
  // Apply merges in learned priority order until no listed pair remains.
  while (syms.size() > 1) {
    std::size_t best_rank = merges_.size();
    std::size_t best_pos = 0;
    for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
      auto it = merge_rank_.find(pair_key(syms[i], syms[i + 1]));
      if (it != merge_rank_.end() && it->second < best_rank) {
        best_rank = it->second;
        best_pos = i;
      }
    }
    if (best_rank == merges_.size()) break;
    syms[best_pos] += syms[best_pos + 1];
    syms.erase(syms.begin() + static_cast<std::ptrdiff_t>(best_pos) + 1);
  }
  return syms;
}

std::vector<int> BpeTokenizer::encode(const std::string& text, std::size_t max_len) const {
  if (token_of_id_.empty()) throw ConfigError("tokenizer used before training");
  std::vector<int> ids;
  std::istringstream words(normalize(text));
  std::string w;
  while (words >> w && ids.size() < max_len) {
    for (const auto& sym : split_word(w)) {
      if (ids.size() >= max_len) break;
      auto it = id_of_token_.find(sym);
      ids.push_back(it == id_of_token_.end() ? kUnkId : it->second);
    }
  }
  if (ids.empty()) ids.push_back(kPadId);
  return ids;
}

json BpeTokenizer::to_json() const {
  json doc;
  doc["tokens"] = token_of_id_;
  json ms = json::array();
  for (const auto& [a, b] : merges_) ms.push_back({a, b});
  doc["merges"] = ms;
  return doc;
}

BpeTokenizer BpeTokenizer::from_json(const json& doc) {
  BpeTokenizer tk;
  tk.token_of_id_ = doc.at("tokens").get<std::vector<std::string>>();
  for (const auto& m : doc.at("merges"))
    tk.merges_.emplace_back(m.at(0).get<std::string>(), m.at(1).get<std::string>());
  tk.rebuild_lookup();
  return tk;
}

}  // namespace lgplug

#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lgplug/errors.hpp"
#include "lgplug/tag_data.hpp"

namespace lgplug {

// Structured classification prompt: role line with the domain, instruction
// paragraph, [LABELS] block (one category per line), [TEXT] block, and the
// "[Answer Below]" terminator.
struct Prompt {
  std::string rendered_text;
  std::vector<std::string> categories;
  std::string source_text;
  std::string domain_hint;

  std::uint64_t hash() const;
};

Prompt build_prompt(const std::string& domain_hint, const std::vector<std::string>& categories,
                    const std::string& text);

// lowercase, trim, collapse internal whitespace. Category matching happens
// on this normal form everywhere.
std::string normalize_category(const std::string& s);

// Extracts the answer from a raw model response: first non-empty line,
// stripped of wrapping quotes/markdown and trailing punctuation. Returns the
// matching listed category when the normalized forms agree (is_new=false),
// otherwise the cleaned line itself as a new category (is_new=true).
// Empty answers throw ParseError (the gateway retries those).
std::pair<std::string, bool> parse_response(const std::string& raw,
                                            const std::vector<std::string>& categories);

struct QueryRecord {
  long cluster = -1;
  NodeId node;
  std::uint64_t prompt_hash = 0;
  std::string raw_response;
  std::string category;
  bool is_new_category = false;
  std::string status;  // "ok" | "cache_hit" | "error"
  double latency_ms = 0.0;
  std::size_t token_estimate = 0;
};

// Append-only query log. Writes are serialized; snapshots are copies.
class QueryLedger {
 public:
  void append(QueryRecord rec);
  std::size_t total_records() const;
  std::size_t query_count() const;  // ok + cache_hit
  std::size_t error_count() const;
  std::size_t cache_hit_count() const;
  std::vector<QueryRecord> snapshot() const;
  void save_jsonl(const std::string& path) const;

 private:
  mutable std::mutex mu_;
  std::vector<QueryRecord> records_;
};

class LlmBackend {
 public:
  virtual ~LlmBackend() = default;
  // Raw completion text for one prompt; throws BackendError on failure.
  virtual std::string complete(const Prompt& prompt) = 0;
  virtual std::string kind() const = 0;
};

// Deterministic test double: scans the prompt's [TEXT] content
// case-insensitively and answers with the first matching rule's category,
// else the fallback.
std::unique_ptr<LlmBackend> make_keyword_oracle(
    std::vector<std::pair<std::string, std::string>> rules, std::string fallback);

struct RemoteBackendConfig {
  std::string endpoint;  // e.g. "http://localhost:8089"
  std::string path = "/v1/chat/completions";
  std::string model = "deepseek-chat";
  std::string api_key;
  int timeout_seconds = 60;
};

// HTTP chat-completion client (OpenAI-style request/response shape).
std::unique_ptr<LlmBackend> make_remote_backend(RemoteBackendConfig config);

// Keyed store of raw responses by prompt hash; optionally persisted as one
// file per entry under a directory.
class ResponseCache {
 public:
  ResponseCache() = default;  // memory-only
  explicit ResponseCache(std::string dir);
  std::optional<std::string> get(std::uint64_t prompt_hash) const;
  void put(std::uint64_t prompt_hash, const std::string& raw);

 private:
  std::string dir_;
  mutable std::mutex mu_;
  mutable std::unordered_map<std::uint64_t, std::string> mem_;
};

// Replays cached responses only; any miss is a backend failure.
std::unique_ptr<LlmBackend> make_replay_backend(std::shared_ptr<ResponseCache> cache);

struct RetryPolicy {
  int max_attempts = 3;
  int base_delay_ms = 1000;
  double factor = 2.0;
};

struct GatewayOptions {
  RetryPolicy retry;
  std::shared_ptr<ResponseCache> cache;
  long cluster = -1;
  NodeId node;
};

// One category per call. Cache hits short-circuit the backend and are
// recorded with a zero token estimate; every attempt lands in the ledger.
// Exhausted retries propagate BackendError.
std::string query(LlmBackend& backend, const Prompt& prompt, QueryLedger& ledger,
                  const GatewayOptions& options = {});

}  // namespace lgplug

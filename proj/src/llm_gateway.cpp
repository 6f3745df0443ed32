#include "lgplug/llm_gateway.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <thread>

#include "lgplug/embedding.hpp"  // fnv1a64

// httplib pulls in a lot; keep it in this TU only.
#include <httplib.h>

namespace lgplug {

using nlohmann::json;

std::uint64_t Prompt::hash() const { return fnv1a64(rendered_text); }

Prompt build_prompt(const std::string& domain_hint, const std::vector<std::string>& categories,
                    const std::string& text) {
  if (categories.empty()) throw ConfigError("build_prompt: category list must be non-empty");
  Prompt p;
  p.categories = categories;
  p.source_text = text;
  p.domain_hint = domain_hint;
  std::ostringstream out;
  out << "You are an expert in text taxonomy for " << domain_hint << ".\n\n";
  out << "For the provided text, choose one of the best matching label from the provided "
         "categories. If none fits, propose a new label that is distinct from existing "
         "categories. The proposed new label must be a specific, concrete name (not "
         "generic).\n\n";
  out << "[LABELS]\n";
  for (const auto& c : categories) out << c << "\n";
  out << "\n[TEXT]\n" << text << "\n\n[Answer Below]\n";
  p.rendered_text = out.str();
  return p;
}

std::string normalize_category(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (unsigned char c : s) {
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

bool is_wrapper_char(char c) {
  return c == '"' || c == '\'' || c == '`' || c == '*' || c == '_';
}

std::string clean_answer_line(const std::string& line) {
  std::size_t b = 0, e = line.size();
  while (b < e && std::isspace(static_cast<unsigned char>(line[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(line[e - 1]))) --e;
  // leading markdown bullets / headers
  while (b < e && (line[b] == '#' || line[b] == '-' || line[b] == '>')) ++b;
  while (b < e && std::isspace(static_cast<unsigned char>(line[b]))) ++b;
  // symmetric wrappers, then trailing sentence punctuation
  while (e - b >= 2 && is_wrapper_char(line[b]) && line[e - 1] == line[b]) {
    ++b;
    --e;
  }
  while (e > b && (line[e - 1] == '.' || line[e - 1] == ',' || line[e - 1] == ';' ||
                   line[e - 1] == ':' || line[e - 1] == '!'))
    --e;
  while (b < e && std::isspace(static_cast<unsigned char>(line[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(line[e - 1]))) --e;
  // collapse internal whitespace, preserving case
  std::string out;
  bool pending_space = false;
  for (std::size_t i = b; i < e; ++i) {
    const unsigned char c = static_cast<unsigned char>(line[i]);
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(line[i]);
  }
  return out;
}

}  // namespace

std::pair<std::string, bool> parse_response(const std::string& raw,
                                            const std::vector<std::string>& categories) {
  std::istringstream lines(raw);
  std::string line;
  std::string answer;
  while (std::getline(lines, line)) {
    answer = clean_answer_line(line);
    if (!answer.empty()) break;
  }
  if (answer.empty()) throw ParseError("empty LLM response");
  const std::string norm = normalize_category(answer);
  for (const auto& c : categories) {
    if (normalize_category(c) == norm) return {c, false};
  }
  return {answer, true};
}

void QueryLedger::append(QueryRecord rec) {
  std::lock_guard<std::mutex> lock(mu_);
  records_.push_back(std::move(rec));
}

std::size_t QueryLedger::total_records() const {
  std::lock_guard<std::mutex> lock(mu_);
  return records_.size();
}

std::size_t QueryLedger::query_count() const {
  std::lock_guard<std::mutex> lock(mu_);
  std::size_t n = 0;
  for (const auto& r : records_)
    if (r.status == "ok" || r.status == "cache_hit") ++n;
  return n;
}

std::size_t QueryLedger::error_count() const {
  std::lock_guard<std::mutex> lock(mu_);
  std::size_t n = 0;
  for (const auto& r : records_)
    if (r.status == "error") ++n;
  return n;
}

std::size_t QueryLedger::cache_hit_count() const {
  std::lock_guard<std::mutex> lock(mu_);
  std::size_t n = 0;
  for (const auto& r : records_)
    if (r.status == "cache_hit") ++n;
  return n;
}

std::vector<QueryRecord> QueryLedger::snapshot() const {
  std::lock_guard<std::mutex> lock(mu_);
  return records_;
}

void QueryLedger::save_jsonl(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write ledger: " + path);
  char hashbuf[32];
  for (const auto& r : snapshot()) {
    std::snprintf(hashbuf, sizeof hashbuf, "%016llx",
                  static_cast<unsigned long long>(r.prompt_hash));
    json rec{{"cluster", r.cluster},
             {"node", r.node},
             {"prompt_hash", hashbuf},
             {"raw_response", r.raw_response},
             {"category", r.category},
             {"is_new_category", r.is_new_category},
             {"status", r.status},
             {"latency_ms", r.latency_ms},
             {"token_estimate", r.token_estimate}};
    out << rec.dump() << "\n";
  }
}

namespace {

class KeywordOracle final : public LlmBackend {
 public:
  KeywordOracle(std::vector<std::pair<std::string, std::string>> rules, std::string fallback)
      : rules_(std::move(rules)), fallback_(std::move(fallback)) {
    if (rules_.empty()) throw ConfigError("keyword oracle: rule list must be non-empty");
    for (const auto& [kw, cat] : rules_) {
      if (kw.empty()) throw ConfigError("keyword oracle: empty keyword");
      for (char c : kw)
        if (std::isupper(static_cast<unsigned char>(c)))
          throw ConfigError("keyword oracle: keywords must be lowercase: " + kw);
    }
  }

  std::string complete(const Prompt& prompt) override {
    std::string text = prompt.source_text;
    std::transform(text.begin(), text.end(), text.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    for (const auto& [kw, cat] : rules_) {
      if (text.find(kw) != std::string::npos) return cat;
    }
    return fallback_;
  }

  std::string kind() const override { return "keyword-oracle"; }

 private:
  std::vector<std::pair<std::string, std::string>> rules_;
  std::string fallback_;
};

class RemoteChatBackend final : public LlmBackend {
 public:
  explicit RemoteChatBackend(RemoteBackendConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.endpoint.empty()) throw ConfigError("remote backend: endpoint must be set");
  }

  std::string complete(const Prompt& prompt) override {
    httplib::Client client(cfg_.endpoint);
    client.set_connection_timeout(cfg_.timeout_seconds);
    client.set_read_timeout(cfg_.timeout_seconds);
    httplib::Headers headers;
    if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);
    json body{{"model", cfg_.model},
              {"temperature", 0},
              {"messages", json::array({json{{"role", "user"}, {"content", prompt.rendered_text}}})}};
    auto res = client.Post(cfg_.path, headers, body.dump(), "application/json");
    if (!res)
      throw BackendError("remote backend: transport failure contacting " + cfg_.endpoint);
    if (res->status != 200)
      throw BackendError("remote backend: HTTP " + std::to_string(res->status) + " from " +
                         cfg_.endpoint);
    try {
      json doc = json::parse(res->body);
      return doc.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
      throw BackendError(std::string("remote backend: unexpected response shape: ") + e.what());
    }
  }

  std::string kind() const override { return "remote-chat-service"; }

 private:
  RemoteBackendConfig cfg_;
};

class ReplayBackend final : public LlmBackend {
 public:
  explicit ReplayBackend(std::shared_ptr<ResponseCache> cache) : cache_(std::move(cache)) {
    if (!cache_) throw ConfigError("replay backend: cache must be provided");
  }

  std::string complete(const Prompt& prompt) override {
    if (auto hit = cache_->get(prompt.hash())) return *hit;
    throw BackendError("replay backend: no cached response for prompt");
  }

  std::string kind() const override { return "replay-cache"; }

 private:
  std::shared_ptr<ResponseCache> cache_;
};

}  // namespace

std::unique_ptr<LlmBackend> make_keyword_oracle(
    std::vector<std::pair<std::string, std::string>> rules, std::string fallback) {
  return std::make_unique<KeywordOracle>(std::move(rules), std::move(fallback));
}

std::unique_ptr<LlmBackend> make_remote_backend(RemoteBackendConfig config) {
  return std::make_unique<RemoteChatBackend>(std::move(config));
}

std::unique_ptr<LlmBackend> make_replay_backend(std::shared_ptr<ResponseCache> cache) {
  return std::make_unique<ReplayBackend>(std::move(cache));
}

ResponseCache::ResponseCache(std::string dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

namespace {
std::string cache_filename(const std::string& dir, std::uint64_t h) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx.txt", static_cast<unsigned long long>(h));
  return dir + "/" + buf;
}
}  // namespace

std::optional<std::string> ResponseCache::get(std::uint64_t prompt_hash) const {
  {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = mem_.find(prompt_hash);
    if (it != mem_.end()) return it->second;
  }
  if (dir_.empty()) return std::nullopt;
  std::ifstream in(cache_filename(dir_, prompt_hash), std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream body;
  body << in.rdbuf();
  std::lock_guard<std::mutex> lock(mu_);
  auto [it, inserted] = mem_.emplace(prompt_hash, body.str());
  return it->second;
}

void ResponseCache::put(std::uint64_t prompt_hash, const std::string& raw) {
  {
    std::lock_guard<std::mutex> lock(mu_);
    mem_[prompt_hash] = raw;
  }
  if (!dir_.empty()) {
    std::ofstream out(cache_filename(dir_, prompt_hash), std::ios::binary);
    out << raw;
  }
}

std::string query(LlmBackend& backend, const Prompt& prompt, QueryLedger& ledger,
                  const GatewayOptions& options) {
  const std::uint64_t h = prompt.hash();
  const std::size_t prompt_chars = prompt.rendered_text.size();

  if (options.cache) {
    if (auto hit = options.cache->get(h)) {
      auto [category, is_new] = parse_response(*hit, prompt.categories);
      QueryRecord rec{options.cluster, options.node, h,     *hit,
                      category,        is_new,       "cache_hit", 0.0, 0};
      ledger.append(std::move(rec));
      return category;
    }
  }

  const int attempts = std::max(1, options.retry.max_attempts);
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const std::string raw = backend.complete(prompt);
      auto [category, is_new] = parse_response(raw, prompt.categories);
      const auto t1 = std::chrono::steady_clock::now();
      if (options.cache) options.cache->put(h, raw);
      QueryRecord rec;
      rec.cluster = options.cluster;
      rec.node = options.node;
      rec.prompt_hash = h;
      rec.raw_response = raw;
      rec.category = category;
      rec.is_new_category = is_new;
      rec.status = "ok";
      rec.latency_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
      // Crude deterministic budget estimate: characters / 4.
      rec.token_estimate = (prompt_chars + raw.size()) / 4;
      ledger.append(std::move(rec));
      return category;
    } catch (const std::runtime_error& e) {
      const auto t1 = std::chrono::steady_clock::now();
      QueryRecord rec;
      rec.cluster = options.cluster;
      rec.node = options.node;
      rec.prompt_hash = h;
      rec.raw_response = e.what();
      rec.status = "error";
      rec.latency_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
      ledger.append(std::move(rec));
      if (attempt == attempts) {
        throw BackendError("LLM query failed after " + std::to_string(attempts) +
                           " attempts: " + e.what());
      }
      const double delay = options.retry.base_delay_ms *
                           std::pow(options.retry.factor, static_cast<double>(attempt - 1));
      std::this_thread::sleep_for(std::chrono::milliseconds(static_cast<long>(delay)));
    }
  }
  throw BackendError("LLM query failed");  // unreachable
}

}  // namespace lgplug

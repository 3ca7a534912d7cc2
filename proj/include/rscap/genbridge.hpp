#pragma once

#include <atomic>
#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "httplib.h"
#include "rscap/util.hpp"

namespace rscap::gen {

// ------------------------------------------------------------- requests

struct ChatMessage {
  std::string role;  // "system" or "user"
  std::string text;
  std::vector<std::string> image_refs;
};

struct GenRequest {
  std::string backend_profile;
  std::vector<ChatMessage> messages;
  int n_samples = 1;
  double temperature = 0.2;
  uint64_t seed = 0;
  std::string tag;     // provenance, e.g. "stage2-prompt2"
  bool flagged = false;  // degraded construction (e.g. resampled images)
};

struct GenResponse {
  std::vector<std::string> texts;
  std::string backend_id;
  double latency_ms = 0;
  int raw_status = 0;
};

inline void validate_request(const GenRequest& req) {
  if (req.n_samples < 1)
    throw std::invalid_argument("n_samples must be >= 1");
  int system_count = 0;
  for (const auto& m : req.messages) {
    if (m.role == "system")
      ++system_count;
    else if (m.role != "user")
      throw std::invalid_argument("unsupported message role: " + m.role);
  }
  if (system_count > 1)
    throw std::invalid_argument("at most one system message allowed");
}

/// Content hash identifying a request in the call log. Tag and flag are
/// provenance, not content, so they do not participate.
inline std::string request_key(const GenRequest& req) {
  ordered_json j;
  j["profile"] = req.backend_profile;
  ordered_json msgs = ordered_json::array();
  for (const auto& m : req.messages)
    msgs.push_back({{"role", m.role}, {"text", m.text}, {"refs", m.image_refs}});
  j["messages"] = msgs;
  j["n"] = req.n_samples;
  j["temperature"] = req.temperature;
  j["seed"] = req.seed;
  std::string dump = j.dump();
  uint64_t a = fnv1a64(dump);
  uint64_t b = fnv1a64(dump, 0xcbf29ce484222325ULL ^ 0x5bd1e995);
  char buf[33];
  std::snprintf(buf, sizeof buf, "%016llx%016llx",
                static_cast<unsigned long long>(a),
                static_cast<unsigned long long>(b));
  return buf;
}

// -------------------------------------------------------------- filters

enum class FilterReason { Garbled, Refusal, TooShort, TooLong, BannedKeyword };

inline std::string to_string(FilterReason r) {
  switch (r) {
    case FilterReason::Garbled: return "garbled";
    case FilterReason::Refusal: return "refusal";
    case FilterReason::TooShort: return "too_short";
    case FilterReason::TooLong: return "too_long";
    default: return "banned_keyword";
  }
}

struct FilterVerdict {
  bool accepted = true;
  std::optional<FilterReason> reason;
  std::optional<std::string> matched_span;

  static FilterVerdict accept() { return {}; }
  static FilterVerdict reject(FilterReason r,
                              std::optional<std::string> span = {}) {
    return {false, r, std::move(span)};
  }
};

struct FilterPolicy {
  int min_words = 5;
  int max_words = 400;
  int max_repeat_run = 8;
  double max_nonalnum_ratio = 0.3;
  std::vector<std::string> refusal_phrases = {
      "content does not comply with regulations",
      "i cannot assist with",
      "i'm sorry, but i can't",
      "as an ai language model",
  };
  std::vector<std::string> banned_keywords;

  static FilterPolicy from_json(const ordered_json& j) {
    FilterPolicy p;
    p.min_words = j.value("min_words", p.min_words);
    p.max_words = j.value("max_words", p.max_words);
    p.max_repeat_run = j.value("max_repeat_run", p.max_repeat_run);
    p.max_nonalnum_ratio = j.value("max_nonalnum_ratio", p.max_nonalnum_ratio);
    if (j.contains("refusal_phrases")) {
      p.refusal_phrases.clear();
      for (const auto& s : j.at("refusal_phrases"))
        p.refusal_phrases.push_back(s.get<std::string>());
    }
    if (j.contains("banned_keywords"))
      for (const auto& s : j.at("banned_keywords"))
        p.banned_keywords.push_back(s.get<std::string>());
    return p;
  }
};

/// Rules fire in a fixed order (refusal, banned keyword, garbled, length);
/// the first hit is reported.
inline FilterVerdict filter_caption(std::string_view text,
                                    const FilterPolicy& policy) {
  for (const auto& phrase : policy.refusal_phrases)
    if (!phrase.empty() && contains_ci(text, phrase))
      return FilterVerdict::reject(FilterReason::Refusal, phrase);
  for (const auto& kw : policy.banned_keywords)
    if (!kw.empty() && contains_ci(text, kw))
      return FilterVerdict::reject(FilterReason::BannedKeyword, kw);

  size_t run = 0, best_run = 0, best_end = 0;
  char prev = 0;
  for (size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (!std::isspace(static_cast<unsigned char>(c)) && c == prev) {
      ++run;
    } else {
      run = 1;
    }
    prev = c;
    if (run > best_run) {
      best_run = run;
      best_end = i;
    }
  }
  if (best_run > static_cast<size_t>(policy.max_repeat_run))
    return FilterVerdict::reject(
        FilterReason::Garbled,
        std::string(text.substr(best_end + 1 - best_run, best_run)));

  size_t non_ws = 0, non_alnum = 0;
  for (unsigned char c : text) {
    if (std::isspace(c)) continue;
    ++non_ws;
    if (!std::isalnum(c)) ++non_alnum;
  }
  if (non_ws > 0 &&
      double(non_alnum) / double(non_ws) > policy.max_nonalnum_ratio)
    return FilterVerdict::reject(FilterReason::Garbled);

  int wc = word_count(text);
  if (wc < policy.min_words)
    return FilterVerdict::reject(FilterReason::TooShort);
  if (wc > policy.max_words)
    return FilterVerdict::reject(FilterReason::TooLong);
  return FilterVerdict::accept();
}

// --------------------------------------------------------- mock backend

namespace detail {

inline const std::unordered_set<std::string>& mock_stopwords() {
  static const std::unordered_set<std::string> words = {
      "the", "and", "this", "that", "image", "images", "describe", "detail",
      "where", "answer", "photo", "with", "for", "following", "caption",
      "captions", "summarize", "summary", "detailed", "description",
      "descriptions", "please", "provide", "only", "text", "sentence",
      "sentences", "one", "two", "three", "four", "five", "generate",
      "select", "randomly", "output", "version", "style", "tone", "audience",
      "researchers", "field", "analysis", "dataset", "matching", "content",
      "visual", "information", "different", "people", "perspectives", "main",
      "features", "single", "language", "adjectives", "prepositional",
      "phrases", "specific", "colors", "spatial", "relationships", "clear",
      "neutral", "professional", "writing", "concise", "rich", "creating",
      "each", "has", "same", "from", "key", "elements", "many", "possible",
      "should", "complete", "complementary", "ensuring", "full", "coverage",
      "after", "long", "short", "individuals", "must", "strictly", "adhere",
      "given", "without", "any", "additional", "extrapolation", "include",
      "included", "introductory", "explanations", "response", "expand",
      "common", "across", "attached", "nine", "based", "box", "expanding",
      "use", "using", "are", "was", "were", "will", "maintain", "target",
      "provided", "describing", "into", "focusing", "slightly", "details",
      "options", "process", "consolidate", "these", "their", "its", "all",
      "not", "includes", "scene", "aerial", "view", "shows",
      "satellite", "captures", "presents", "overhead", "photograph",
      "depicts", "top-down", "reveals", "frame", "contains", "shown",
      "existing"};
  return words;
}

inline std::vector<std::string> mock_content_words(const GenRequest& req) {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (const auto& m : req.messages) {
    if (m.role != "user") continue;
    std::string word;
    auto flush = [&] {
      if (word.size() >= 3 && !mock_stopwords().count(word) &&
          seen.insert(word).second && out.size() < 8)
        out.push_back(word);
      word.clear();
    };
    for (unsigned char c : m.text) {
      if (std::isalpha(c))
        word += static_cast<char>(std::tolower(c));
      else
        flush();
    }
    flush();
  }
  return out;
}

}  // namespace detail

/// Deterministic offline stand-in for a chat-completion backend. Output is a
/// keyed function of (messages, seed, sample index); any content word found
/// in the request text reappears in every sample, which is what lets the
/// downstream stages behave realistically in tests.
inline GenResponse mock_generate(const GenRequest& req) {
  validate_request(req);
  static const char* openers[] = {
      "An aerial view shows", "A satellite image captures",
      "The scene presents",  "An overhead photograph depicts",
      "A top-down view reveals"};
  static const char* tails[] = {
      "arranged across the area",
      "near a paved region",
      "surrounded by open terrain",
      "beside a cluster of small structures",
      "distributed along a winding road",
      "set against a uniform background"};
  static const char* extras[] = {
      "The layout appears compact with clearly separated sections.",
      "Shadows suggest a low sun angle at capture time.",
      "A narrow track crosses the lower part of the scene.",
      "The surrounding ground shows a mottled natural texture.",
      "Several smaller features line the right-hand margin.",
      "Open space occupies much of the upper half."};
  static const char* closers[] = {
      "Vegetation borders the site on one side.",
      "A faint grid of paths is visible nearby.",
      "The ground cover varies between bright and dark patches.",
      "A service road curves toward the lower edge.",
      "Scattered equipment dots the adjacent lot.",
      "The far corner fades into uniform terrain."};

  auto words = detail::mock_content_words(req);
  std::string subject =
      words.empty() ? std::string("a broad stretch of terrain")
                    : join_natural(words);

  ordered_json key_j;
  for (const auto& m : req.messages)
    key_j.push_back({{"r", m.role}, {"t", m.text}, {"i", m.image_refs}});
  uint64_t base = mix_hash(fnv1a64(key_j.dump()), req.seed);

  GenResponse resp;
  resp.backend_id = "mock";
  resp.raw_status = 200;
  for (int s = 0; s < req.n_samples; ++s) {
    uint64_t h = mix_hash(base, static_cast<uint64_t>(s));
    std::string text;
    text += openers[splitmix64(h) % std::size(openers)];
    text += " ";
    text += subject;
    text += " ";
    text += tails[splitmix64(h + 1) % std::size(tails)];
    text += ". ";
    text += extras[splitmix64(h + 2) % std::size(extras)];
    text += " ";
    text += extras[(splitmix64(h + 2) % std::size(extras) + 1 +
                    splitmix64(h + 3) % (std::size(extras) - 1)) %
                   std::size(extras)];
    text += " ";
    text += closers[static_cast<size_t>(s) % std::size(closers)];
    if (s >= static_cast<int>(std::size(closers)))
      text += " Further variation " + std::to_string(s) + ".";
    resp.texts.push_back(std::move(text));
  }
  return resp;
}

// ------------------------------------------------------------- backends

struct BackendProfile {
  std::string name;
  std::string kind = "mock";  // "mock" | "http"
  std::string endpoint;       // e.g. http://127.0.0.1:8080/v1
  std::string model;
  std::string auth_env;  // env var holding the bearer token
  double temperature = 0.2;
  int max_retries = 3;
  int retry_backoff_ms = 100;
  int timeout_s = 60;
  int max_in_flight = 4;

  static BackendProfile from_json(std::string name, const ordered_json& j) {
    BackendProfile p;
    p.name = std::move(name);
    p.kind = j.value("kind", p.kind);
    p.endpoint = j.value("endpoint", p.endpoint);
    p.model = j.value("model", p.model);
    p.auth_env = j.value("auth_env", p.auth_env);
    p.temperature = j.value("temperature", p.temperature);
    p.max_retries = j.value("max_retries", p.max_retries);
    p.retry_backoff_ms = j.value("retry_backoff_ms", p.retry_backoff_ms);
    p.timeout_s = j.value("timeout_s", p.timeout_s);
    p.max_in_flight = j.value("max_in_flight", p.max_in_flight);
    if (p.kind != "mock" && p.kind != "http")
      throw ValidationError("backend '" + p.name + "': unknown kind '" +
                            p.kind + "'");
    if (p.kind == "http" && p.endpoint.empty())
      throw ValidationError("backend '" + p.name + "': endpoint required");
    return p;
  }
};

class BackendError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Retries or the call budget ran out; the CLI maps this to exit code 3.
class BackendExhausted : public BackendError {
  using BackendError::BackendError;
};

class ProtocolError : public BackendError {
  using BackendError::BackendError;
};

// ------------------------------------------------------------- call log

/// Append-only JSONL of completed calls keyed by request content hash.
/// Replaying a finished pipeline therefore issues zero new backend calls.
class CallLog {
 public:
  explicit CallLog(fs::path path) : path_(std::move(path)) {
    if (fs::exists(path_)) {
      for (const auto& j : read_jsonl(path_)) {
        GenResponse r;
        r.backend_id = j.value("backend_id", std::string{});
        r.raw_status = j.value("raw_status", 200);
        for (const auto& t : j.at("texts")) r.texts.push_back(t.get<std::string>());
        cache_[j.at("key").get<std::string>()] = std::move(r);
      }
    }
    if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
    out_.open(path_, std::ios::app);
    if (!out_) throw ValidationError("cannot open call log: " + path_.string());
  }

  std::optional<GenResponse> lookup(const std::string& key) {
    std::lock_guard lock(mu_);
    auto it = cache_.find(key);
    if (it == cache_.end()) return std::nullopt;
    return it->second;
  }

  void append(const std::string& key, const std::string& tag,
              const GenResponse& resp) {
    ordered_json j;
    j["key"] = key;
    j["tag"] = tag;
    j["backend_id"] = resp.backend_id;
    j["raw_status"] = resp.raw_status;
    j["texts"] = resp.texts;
    std::lock_guard lock(mu_);
    out_ << j.dump() << '\n';
    out_.flush();
    cache_[key] = resp;
  }

  size_t size() const {
    std::lock_guard lock(mu_);
    return cache_.size();
  }

 private:
  fs::path path_;
  std::unordered_map<std::string, GenResponse> cache_;
  std::ofstream out_;
  mutable std::mutex mu_;
};

// --------------------------------------------------------------- client

class GenClient {
 public:
  explicit GenClient(std::map<std::string, BackendProfile> profiles,
                     std::optional<fs::path> call_log = {})
      : profiles_(std::move(profiles)) {
    if (call_log) log_ = std::make_unique<CallLog>(*call_log);
    for (const auto& [name, p] : profiles_)
      gates_.emplace(name, std::make_unique<std::counting_semaphore<>>(
                               std::max(1, p.max_in_flight)));
  }

  const BackendProfile& profile(const std::string& name) const {
    auto it = profiles_.find(name);
    if (it == profiles_.end())
      throw ValidationError("unknown backend profile: " + name);
    return it->second;
  }

  /// Number of calls actually dispatched (log replays excluded).
  size_t calls_issued() const { return issued_.load(); }

  /// Hard cap on dispatched calls; exceeding it raises BackendExhausted.
  void set_call_budget(std::optional<size_t> budget) { budget_ = budget; }

  GenResponse generate(const GenRequest& req) {
    validate_request(req);
    const BackendProfile& prof = profile(req.backend_profile);
    std::string key = request_key(req);
    if (log_) {
      if (auto cached = log_->lookup(key)) return *cached;
    }
    {
      std::lock_guard lock(budget_mu_);
      if (budget_ && issued_.load() >= *budget_)
        throw BackendExhausted("backend call budget exhausted (" +
                               std::to_string(*budget_) + " calls)");
      issued_.fetch_add(1);
    }
    auto& gate = *gates_.at(prof.name);
    gate.acquire();
    GenResponse resp;
    try {
      auto t0 = std::chrono::steady_clock::now();
      resp = prof.kind == "mock" ? dispatch_mock(req, prof)
                                 : dispatch_http(req, prof);
      resp.latency_ms = std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - t0)
                            .count();
    } catch (...) {
      gate.release();
      throw;
    }
    gate.release();
    if (log_) log_->append(key, req.tag, resp);
    return resp;
  }

 private:
  static GenResponse dispatch_mock(const GenRequest& req,
                                   const BackendProfile& prof) {
    GenResponse r = mock_generate(req);
    r.backend_id = "mock:" + prof.name;
    return r;
  }

  GenResponse dispatch_http(const GenRequest& req,
                            const BackendProfile& prof) {
    // split "http://host:port/base" into client target and base path
    auto scheme_pos = prof.endpoint.find("://");
    if (scheme_pos == std::string::npos)
      throw ValidationError("backend '" + prof.name + "': bad endpoint '" +
                            prof.endpoint + "'");
    auto path_pos = prof.endpoint.find('/', scheme_pos + 3);
    std::string host = prof.endpoint.substr(
        0, path_pos == std::string::npos ? prof.endpoint.size() : path_pos);
    std::string base =
        path_pos == std::string::npos ? "" : prof.endpoint.substr(path_pos);
    std::string path = base + "/chat/completions";

    httplib::Headers headers;
    if (!prof.auth_env.empty()) {
      const char* token = std::getenv(prof.auth_env.c_str());
      if (!token)
        throw ValidationError("backend '" + prof.name +
                              "': auth env var not set: " + prof.auth_env);
      headers.emplace("Authorization", std::string("Bearer ") + token);
    }

    ordered_json body;
    body["model"] = prof.model;
    ordered_json msgs = ordered_json::array();
    for (const auto& m : req.messages) {
      ordered_json content = ordered_json::array();
      content.push_back({{"type", "text"}, {"text", m.text}});
      for (const auto& ref : m.image_refs)
        content.push_back(
            {{"type", "image_url"}, {"image_url", {{"url", ref}}}});
      msgs.push_back({{"role", m.role}, {"content", content}});
    }
    body["messages"] = msgs;
    body["n"] = req.n_samples;
    body["temperature"] = req.temperature;
    body["seed"] = req.seed;
    std::string payload = body.dump();

    int last_status = 0;
    for (int attempt = 0; attempt <= prof.max_retries; ++attempt) {
      if (attempt > 0)
        std::this_thread::sleep_for(std::chrono::milliseconds(
            prof.retry_backoff_ms * (1LL << (attempt - 1))));
      httplib::Client cli(host);
      cli.set_connection_timeout(prof.timeout_s, 0);
      cli.set_read_timeout(prof.timeout_s, 0);
      auto res = cli.Post(path, headers, payload, "application/json");
      if (!res) {
        last_status = 0;
        continue;  // network-level failure, retryable
      }
      last_status = res->status;
      if (res->status >= 200 && res->status < 300)
        return parse_completion(res->body, prof, res->status, req.n_samples);
      if (res->status != 408 && res->status != 429 && res->status < 500)
        throw BackendError("backend '" + prof.name + "' returned status " +
                           std::to_string(res->status));
    }
    throw BackendExhausted("backend '" + prof.name +
                           "': retries exhausted, last status " +
                           std::to_string(last_status));
  }

  static GenResponse parse_completion(const std::string& body,
                                      const BackendProfile& prof, int status,
                                      int n_samples) {
    ordered_json j;
    try {
      j = ordered_json::parse(body);
    } catch (const std::exception& e) {
      throw ProtocolError("backend '" + prof.name +
                          "': malformed response body: " + e.what());
    }
    GenResponse resp;
    resp.backend_id = prof.name + "/" + prof.model;
    resp.raw_status = status;
    if (!j.contains("choices") || !j.at("choices").is_array())
      throw ProtocolError("backend '" + prof.name + "': no choices in body");
    for (const auto& c : j.at("choices")) {
      if (!c.contains("message") || !c.at("message").contains("content"))
        throw ProtocolError("backend '" + prof.name + "': malformed choice");
      resp.texts.push_back(c.at("message").at("content").get<std::string>());
    }
    if (static_cast<int>(resp.texts.size()) != n_samples)
      throw ProtocolError("backend '" + prof.name + "': expected " +
                          std::to_string(n_samples) + " samples, got " +
                          std::to_string(resp.texts.size()));
    return resp;
  }

  std::map<std::string, BackendProfile> profiles_;
  std::map<std::string, std::unique_ptr<std::counting_semaphore<>>> gates_;
  std::unique_ptr<CallLog> log_;
  std::atomic<size_t> issued_{0};
  std::optional<size_t> budget_;
  std::mutex budget_mu_;
};

}  // namespace rscap::gen

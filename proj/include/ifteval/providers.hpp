#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace ifteval::providers {

struct Message {
  std::string role;  // system | user | assistant
  std::string content;
};

struct ChatRequest {
  std::string model_id;
  std::vector<Message> messages;
  double temperature = 0.0;
  std::optional<int> max_tokens;
};

struct RetryPolicy {
  int max_retries = 2;  // attempts = 1 + max_retries
  std::chrono::milliseconds initial_delay{200};
  double backoff_factor = 2.0;
};

// Transport under the client. post() returns the raw response body or throws
// TransportError; the client handles caching, parsing, and concurrency.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string id() const = 0;
  virtual std::string post(const std::string& path, const std::string& body) = 0;
  // Sockets actually opened. Always zero for the stub.
  virtual std::uint64_t network_calls() const = 0;
};

// OpenAI-compatible HTTP transport with bounded exponential backoff.
// Base URL from config or PROVIDER_BASE_URL; bearer token from
// PROVIDER_API_KEY when set.
class HttpBackend : public Backend {
 public:
  HttpBackend(std::string base_url, RetryPolicy policy);

  std::string id() const override { return base_url_; }
  std::string post(const std::string& path, const std::string& body) override;
  std::uint64_t network_calls() const override { return network_calls_; }

 private:
  std::string base_url_;
  RetryPolicy policy_;
  std::string api_key_;
  std::atomic<std::uint64_t> network_calls_{0};
};

// Deterministic offline stand-in. Chat responses resolve in order:
// a scripted FIFO queue (tests), substring rules, then a pure function of the
// prompt. Judge-template prompts get a conforming "a,b" verdict derived from
// the prompt hash. Embeddings are fixed pseudo-random unit vectors per text,
// with optional per-text overrides.
class StubBackend : public Backend {
 public:
  StubBackend() = default;

  std::string id() const override { return "stub"; }
  std::string post(const std::string& path, const std::string& body) override;
  std::uint64_t network_calls() const override { return 0; }

  void push_scripted_response(std::string text);
  void add_rule(std::string contains, std::string response);
  void set_canned_embedding(const std::string& text, std::vector<double> vec);
  void load_rules(const std::filesystem::path& path);

  std::uint64_t chat_calls() const { return chat_calls_; }
  std::uint64_t embed_calls() const { return embed_calls_; }

 private:
  std::string chat_response_for(const std::string& content);
  std::vector<double> embedding_for(const std::string& text);

  std::mutex mutex_;
  std::deque<std::string> scripted_;
  std::vector<std::pair<std::string, std::string>> rules_;
  std::map<std::string, std::vector<double>> canned_embeddings_;
  std::atomic<std::uint64_t> chat_calls_{0};
  std::atomic<std::uint64_t> embed_calls_{0};
};

struct CacheStats {
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
  std::uint64_t entries = 0;
};

// Append-only response store. Entries are immutable once written.
class CacheStore {
 public:
  virtual ~CacheStore() = default;
  virtual std::optional<std::string> get(const std::string& key) = 0;
  virtual void put(const std::string& key, const std::string& body) = 0;
  virtual std::uint64_t entry_count() = 0;
};

class MemoryCacheStore : public CacheStore {
 public:
  std::optional<std::string> get(const std::string& key) override;
  void put(const std::string& key, const std::string& body) override;
  std::uint64_t entry_count() override;

 private:
  std::mutex mutex_;
  std::map<std::string, std::string> entries_;
};

// One file per key, written via temp file + atomic rename so concurrent
// processes can share a directory.
class DiskCacheStore : public CacheStore {
 public:
  explicit DiskCacheStore(std::filesystem::path dir);
  std::optional<std::string> get(const std::string& key) override;
  void put(const std::string& key, const std::string& body) override;
  std::uint64_t entry_count() override;

 private:
  std::filesystem::path dir_;
};

struct CallOptions {
  // Mixed into the cache key only, never into the wire body. Lets a re-ask
  // of a byte-identical prompt reach the backend instead of replaying the
  // cached response.
  std::string cache_salt;
};

// Uniform chat/embedding client: canonical cache keying, per-key
// single-flight, and a global in-flight limit shared by all calls.
class Client {
 public:
  Client(std::shared_ptr<Backend> backend,
         std::shared_ptr<CacheStore> cache = nullptr, int max_in_flight = 8);
  ~Client();

  // First-choice message content.
  std::string chat_complete(const ChatRequest& request,
                            const CallOptions& options = {});

  // One unit-L2-norm vector per input text, order preserved.
  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts,
                                         const std::string& model_id);

  CacheStats cache_stats() const;
  std::uint64_t backend_calls() const { return backend_calls_; }
  std::uint64_t network_calls() const { return backend_->network_calls(); }

  static std::string canonical_body(const nlohmann::json& body);
  static std::string cache_key(const std::string& endpoint_id,
                               const std::string& path,
                               const std::string& canonical_body,
                               const std::string& salt);

 private:
  std::string post_cached(const std::string& path, const nlohmann::json& body,
                          const std::string& salt);

  std::shared_ptr<Backend> backend_;
  std::shared_ptr<CacheStore> cache_;
  std::atomic<std::uint64_t> hits_{0};
  std::atomic<std::uint64_t> misses_{0};
  std::atomic<std::uint64_t> backend_calls_{0};

  std::mutex flight_mutex_;
  std::map<std::string, std::shared_ptr<std::mutex>> in_flight_;
  std::unique_ptr<class Gate> gate_;
};

}  // namespace ifteval::providers

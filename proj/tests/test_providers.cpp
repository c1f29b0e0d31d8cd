#include <doctest.h>

#include <httplib.h>

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <future>
#include <thread>

#include "ifteval/errors.hpp"
#include "ifteval/providers.hpp"

using namespace ifteval;
using namespace ifteval::providers;

namespace {

ChatRequest simple_request(const std::string& content,
                           const std::string& model = "m") {
  ChatRequest request;
  request.model_id = model;
  request.messages.push_back({"user", content});
  return request;
}

// Local OpenAI-shaped endpoint for transport tests. Binds an ephemeral port.
struct LocalServer {
  httplib::Server server;
  int port = 0;
  std::thread thread;

  explicit LocalServer(
      std::function<void(const httplib::Request&, httplib::Response&)>
          handler) {
    server.Post("/v1/chat/completions", std::move(handler));
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }

  ~LocalServer() {
    server.stop();
    thread.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port); }
};

std::string chat_completion_body(const std::string& content) {
  nlohmann::json doc{
      {"choices",
       nlohmann::json::array(
           {{{"message", {{"role", "assistant"}, {"content", content}}}}})}};
  return doc.dump();
}

}  // namespace

TEST_CASE("canonical cache keying ignores JSON key order and whitespace") {
  const auto a = nlohmann::json::parse(R"({"b": 1, "a": {"y": 2, "x": 3}})");
  const auto b = nlohmann::json::parse(
      "{ \"a\" : { \"x\" : 3, \"y\" : 2 },\n \"b\" : 1 }");
  CHECK(Client::canonical_body(a) == Client::canonical_body(b));
  CHECK(Client::cache_key("e", "/p", Client::canonical_body(a), "") ==
        Client::cache_key("e", "/p", Client::canonical_body(b), ""));
  CHECK(Client::cache_key("e", "/p", Client::canonical_body(a), "salt") !=
        Client::cache_key("e", "/p", Client::canonical_body(a), ""));
}

TEST_CASE("cache stats count misses, hits, and entries") {
  auto stub = std::make_shared<StubBackend>();
  Client client(stub);

  auto fresh = client.cache_stats();
  CHECK(fresh.hits == 0);
  CHECK(fresh.misses == 0);
  CHECK(fresh.entries == 0);

  const auto first = client.chat_complete(simple_request("hello"));
  const auto second = client.chat_complete(simple_request("hello"));
  CHECK(first == second);
  const auto stats = client.cache_stats();
  CHECK(stats.hits == 1);
  CHECK(stats.misses == 1);
  CHECK(stats.entries == 1);
  CHECK(client.backend_calls() == 1);  // second call never hit the backend

  for (int i = 0; i < 5; ++i) {
    client.chat_complete(simple_request("prompt " + std::to_string(i)));
  }
  CHECK(client.cache_stats().entries == 6);
  CHECK(client.network_calls() == 0);
}

TEST_CASE("replayed responses are bit-exact") {
  auto stub = std::make_shared<StubBackend>();
  auto cache = std::make_shared<MemoryCacheStore>();
  Client client(stub, cache);
  const auto first = client.chat_complete(simple_request("replay me"));
  const auto key_body = client.chat_complete(simple_request("replay me"));
  CHECK(first == key_body);
}

TEST_CASE("disk cache persists across client instances") {
  const auto dir =
      std::filesystem::temp_directory_path() / "ifteval-disk-cache";
  std::filesystem::remove_all(dir);

  auto stub = std::make_shared<StubBackend>();
  {
    Client client(stub, std::make_shared<DiskCacheStore>(dir));
    client.chat_complete(simple_request("persist"));
    CHECK(client.cache_stats().misses == 1);
  }
  {
    Client client(stub, std::make_shared<DiskCacheStore>(dir));
    CHECK(client.cache_stats().entries == 1);
    client.chat_complete(simple_request("persist"));
    const auto stats = client.cache_stats();
    CHECK(stats.hits == 1);
    CHECK(stats.misses == 0);
    CHECK(client.backend_calls() == 0);
  }
  CHECK(stub->chat_calls() == 1);
  std::filesystem::remove_all(dir);
}

TEST_CASE("stub embeddings are deterministic and renormalized") {
  auto stub = std::make_shared<StubBackend>();
  Client client(stub);

  const auto pair = client.embed({"a", "a"}, "emb");
  REQUIRE(pair.size() == 2);
  CHECK(pair[0] == pair[1]);

  double norm_sq = 0;
  for (double v : pair[0]) norm_sq += v * v;
  CHECK(norm_sq == doctest::Approx(1.0).epsilon(1e-9));

  stub->set_canned_embedding("long", {2.0, 0.0});
  stub->set_canned_embedding("longer", {0.0, -3.0});
  const auto canned = client.embed({"long", "longer"}, "emb");
  CHECK(canned[0] == std::vector<double>{1.0, 0.0});
  CHECK(canned[1] == std::vector<double>{0.0, -1.0});

  CHECK_THROWS_AS(client.embed({}, "emb"), ContractError);
}

TEST_CASE("chat requests validate roles and message presence") {
  auto stub = std::make_shared<StubBackend>();
  Client client(stub);
  ChatRequest empty;
  empty.model_id = "m";
  CHECK_THROWS_AS(client.chat_complete(empty), ContractError);

  ChatRequest bad_role;
  bad_role.model_id = "m";
  bad_role.messages.push_back({"narrator", "text"});
  CHECK_THROWS_AS(client.chat_complete(bad_role), ContractError);
}

TEST_CASE("scripted stub responses consume in order across salts") {
  auto stub = std::make_shared<StubBackend>();
  Client client(stub);
  stub->push_scripted_response("first");
  stub->push_scripted_response("second");
  const auto request = simple_request("same prompt");
  CHECK(client.chat_complete(request) == "first");
  CHECK(client.chat_complete(request) == "first");  // cache replay
  CHECK(client.chat_complete(request, {.cache_salt = "retry"}) == "second");
}

TEST_CASE("single-flight collapses identical concurrent requests") {
  struct SlowBackend : Backend {
    std::atomic<std::uint64_t> calls{0};
    std::string id() const override { return "slow"; }
    std::uint64_t network_calls() const override { return 0; }
    std::string post(const std::string&, const std::string&) override {
      ++calls;
      std::this_thread::sleep_for(std::chrono::milliseconds(100));
      return chat_completion_body("slow response");
    }
  };
  auto backend = std::make_shared<SlowBackend>();
  Client client(backend);

  std::vector<std::future<std::string>> futures;
  for (int i = 0; i < 8; ++i) {
    futures.push_back(std::async(std::launch::async, [&client] {
      return client.chat_complete(simple_request("identical"));
    }));
  }
  for (auto& f : futures) CHECK(f.get() == "slow response");
  CHECK(backend->calls == 1);
  CHECK(client.cache_stats().misses == 1);
  CHECK(client.cache_stats().hits == 7);
}

TEST_CASE("global in-flight limit bounds backend concurrency") {
  struct TrackingBackend : Backend {
    std::atomic<int> active{0};
    std::atomic<int> high_water{0};
    std::atomic<int> total{0};
    std::string id() const override { return "tracking"; }
    std::uint64_t network_calls() const override { return 0; }
    std::string post(const std::string&, const std::string& body) override {
      ++total;
      const int now = ++active;
      int seen = high_water.load();
      while (now > seen && !high_water.compare_exchange_weak(seen, now)) {
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
      --active;
      return chat_completion_body("resp " + body);
    }
  };
  auto backend = std::make_shared<TrackingBackend>();
  Client client(backend, nullptr, /*max_in_flight=*/3);

  std::vector<std::future<std::string>> futures;
  for (int i = 0; i < 12; ++i) {
    futures.push_back(std::async(std::launch::async, [&client, i] {
      return client.chat_complete(simple_request("p" + std::to_string(i)));
    }));
  }
  for (auto& f : futures) f.get();
  CHECK(backend->high_water.load() <= 3);
  CHECK(backend->total.load() == 12);
}

TEST_CASE("http backend retries transient failures then succeeds") {
  std::atomic<int> attempts{0};
  LocalServer server([&](const httplib::Request&, httplib::Response& res) {
    const int attempt = ++attempts;
    if (attempt <= 2) {
      res.status = 500;
      res.set_content("boom", "text/plain");
    } else {
      res.set_content(chat_completion_body("recovered"), "application/json");
    }
  });

  RetryPolicy policy;
  policy.max_retries = 2;
  policy.initial_delay = std::chrono::milliseconds(1);
  auto backend = std::make_shared<HttpBackend>(server.url(), policy);
  Client client(backend);
  CHECK(client.chat_complete(simple_request("hi")) == "recovered");
  CHECK(attempts == 3);
  CHECK(client.network_calls() == 3);
}

TEST_CASE("http backend surfaces a transport error after retries run out") {
  LocalServer server([](const httplib::Request&, httplib::Response& res) {
    res.status = 500;
    res.set_content("still broken", "text/plain");
  });

  RetryPolicy policy;
  policy.max_retries = 2;
  policy.initial_delay = std::chrono::milliseconds(1);
  auto backend = std::make_shared<HttpBackend>(server.url(), policy);
  Client client(backend);
  CHECK_THROWS_AS(client.chat_complete(simple_request("hi")), TransportError);
  CHECK(client.network_calls() == 3);  // one initial + two retries
}

TEST_CASE("non-retryable HTTP statuses raise protocol errors immediately") {
  std::atomic<int> attempts{0};
  LocalServer server([&](const httplib::Request&, httplib::Response& res) {
    ++attempts;
    res.status = 404;
    res.set_content("no such route", "text/plain");
  });

  RetryPolicy policy;
  policy.max_retries = 3;
  policy.initial_delay = std::chrono::milliseconds(1);
  auto backend = std::make_shared<HttpBackend>(server.url(), policy);
  Client client(backend);
  CHECK_THROWS_AS(client.chat_complete(simple_request("hi")), ProtocolError);
  CHECK(attempts == 1);
}

TEST_CASE("malformed chat bodies raise protocol errors") {
  LocalServer server([](const httplib::Request&, httplib::Response& res) {
    res.set_content("{\"choices\": []}", "application/json");
  });
  RetryPolicy policy;
  policy.max_retries = 0;
  policy.initial_delay = std::chrono::milliseconds(1);
  auto backend = std::make_shared<HttpBackend>(server.url(), policy);
  Client client(backend);
  CHECK_THROWS_AS(client.chat_complete(simple_request("hi")), ProtocolError);
}

TEST_CASE("embedding dimension mismatches raise protocol errors") {
  struct RaggedBackend : Backend {
    std::atomic<int> calls{0};
    std::string id() const override { return "ragged"; }
    std::uint64_t network_calls() const override { return 0; }
    std::string post(const std::string&, const std::string&) override {
      const int call = ++calls;
      nlohmann::json vec = call == 1 ? nlohmann::json::array({1.0, 0.0})
                                     : nlohmann::json::array({1.0, 0.0, 0.0});
      nlohmann::json doc{
          {"data", nlohmann::json::array(
                       {{{"index", 0}, {"embedding", vec}}})}};
      return doc.dump();
    }
  };
  Client client(std::make_shared<RaggedBackend>());
  CHECK_THROWS_AS(client.embed({"one", "two"}, "emb"), ProtocolError);
}

TEST_CASE("stub rules file configures responses and embeddings") {
  const auto dir =
      std::filesystem::temp_directory_path() / "ifteval-stub-rules";
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "rules.json");
    out << R"({
      "rules": [{"contains": "magic token", "response": "canned reply"}],
      "embeddings": {"anchor": [1.0, 0.0]}
    })";
  }
  auto stub = std::make_shared<StubBackend>();
  stub->load_rules(dir / "rules.json");
  Client client(stub);
  CHECK(client.chat_complete(simple_request("say the magic token now")) ==
        "canned reply");
  CHECK(client.embed({"anchor"}, "emb")[0] == std::vector<double>{1.0, 0.0});
  std::filesystem::remove_all(dir);
}

TEST_CASE("judge-template prompts get conforming stub verdicts") {
  auto stub = std::make_shared<StubBackend>();
  Client client(stub);
  const auto verdict_text = client.chat_complete(
      simple_request("...\nOutput format (csv):\n<score1 from 0 to 10>..."));
  const auto comma = verdict_text.find(',');
  REQUIRE(comma != std::string::npos);
  const int a = std::stoi(verdict_text.substr(0, comma));
  const int b = std::stoi(verdict_text.substr(comma + 1));
  CHECK(a >= 0);
  CHECK(a <= 10);
  CHECK(b >= 0);
  CHECK(b <= 10);
}

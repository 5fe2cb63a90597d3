#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "json.hpp"
#include "modlab/corpus_store.hpp"

namespace modlab {

inline constexpr int kApiSchemaVersion = 1;
inline constexpr const char* kSchemaVersionHeader = "X-Schema-Version";

enum class Role { Annotator, Coordinator, Moderator };

std::string_view to_string(Role role);
Role parse_role(std::string_view text);

struct ApiSession {
  std::string annotator_id;
  Role role = Role::Annotator;
  std::optional<std::int64_t> expires_at;  // unix seconds
};

/// Static token -> session table. File format:
///   {"<token>": {"annotator_id": "...", "role": "annotator|coordinator|moderator",
///                "expires_at": 1767225600}, ...}
class TokenMap {
 public:
  TokenMap() = default;
  static TokenMap from_json(const nlohmann::json& j);
  static TokenMap load(const std::filesystem::path& path);

  void add(std::string token, ApiSession session);
  /// Session for a token that exists and has not expired at `now`.
  std::optional<ApiSession> lookup(const std::string& token, std::int64_t now) const;

 private:
  std::map<std::string, ApiSession> sessions_;
};

struct ApiRequest {
  std::string method;  // GET, POST
  std::string path;    // /api/...
  std::map<std::string, std::string> query;
  std::string body;
  std::string bearer_token;
};

struct ApiResponse {
  int status = 200;
  nlohmann::json body;
};

/// Campaign overview: counts, agreement report, label distribution and
/// open assignments per annotator. Pure function of the state.
nlohmann::json campaign_snapshot(const CorpusState& state);

/// Label scale shown to annotators.
nlohmann::json label_scale();

/// Transport-independent request handler for the JSON API.
class Api {
 public:
  using Clock = std::function<std::int64_t()>;

  Api(Store& store, TokenMap tokens, Clock clock = {});

  ApiResponse handle(const ApiRequest& request) const;

 private:
  ApiResponse route(const ApiRequest& request, const ApiSession& session) const;
  ApiResponse get_assignments(const ApiSession& session) const;
  ApiResponse post_annotation(const ApiRequest& request, const ApiSession& session) const;
  ApiResponse get_disagreements(const std::string& round_id) const;
  ApiResponse get_stats() const;
  ApiResponse get_flags(const ApiRequest& request) const;
  ApiResponse post_round(const ApiRequest& request) const;

  Store& store_;
  TokenMap tokens_;
  Clock clock_;
};

/// HTTP/1.1 front for an Api. Routes /api/* to the handler and, when a web
/// root is given, serves its files at /.
class HttpServer {
 public:
  HttpServer(const Api& api, std::optional<std::filesystem::path> web_root = {});
  ~HttpServer();

  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds; port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  /// Blocks serving requests until stop().
  void run();
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace modlab

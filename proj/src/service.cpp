#include "modlab/service.hpp"

#include <chrono>
#include <fstream>
#include <regex>

#include "httplib.h"
#include "modlab/agreement.hpp"
#include "modlab/campaign.hpp"
#include "modlab/flagging.hpp"

namespace modlab {
namespace {

ApiResponse error(int status, const std::string& message) {
  return {status, nlohmann::json{{"error", message}}};
}

std::int64_t system_now() {
  return std::chrono::duration_cast<std::chrono::seconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

nlohmann::json parse_body(const ApiRequest& request) {
  try {
    return request.body.empty() ? nlohmann::json::object() : nlohmann::json::parse(request.body);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("malformed JSON body: ") + e.what());
  }
}

double query_double(const ApiRequest& request, const std::string& key, double fallback) {
  auto it = request.query.find(key);
  if (it == request.query.end()) return fallback;
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(it->second, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != it->second.size() || !(value >= 0.0 && value <= 1.0)) {
    throw ValidationError(key + " must be a number in [0,1]");
  }
  return value;
}

nlohmann::json to_json(const DisagreementRecord& r) {
  nlohmann::json labels = nlohmann::json::array();
  for (Label l : r.labels) labels.push_back(l.value());
  nlohmann::json histogram = nlohmann::json::array();
  for (int c = 0; c < kNumLabels; ++c) {
    histogram.push_back(std::count(r.labels.begin(), r.labels.end(), Label(c)));
  }
  return nlohmann::json{
      {"posting_id", r.posting_id}, {"labels", labels}, {"histogram", histogram}, {"score", r.score}};
}

}  // namespace

std::string_view to_string(Role role) {
  switch (role) {
    case Role::Annotator: return "annotator";
    case Role::Coordinator: return "coordinator";
    case Role::Moderator: return "moderator";
  }
  return "unknown";
}

Role parse_role(std::string_view text) {
  if (text == "annotator") return Role::Annotator;
  if (text == "coordinator") return Role::Coordinator;
  if (text == "moderator") return Role::Moderator;
  throw ValidationError("unknown role '" + std::string(text) + "'");
}

TokenMap TokenMap::from_json(const nlohmann::json& j) {
  TokenMap map;
  try {
    for (const auto& [token, entry] : j.items()) {
      ApiSession s;
      s.annotator_id = entry.at("annotator_id").get<std::string>();
      s.role = parse_role(entry.value("role", std::string("annotator")));
      if (entry.contains("expires_at")) s.expires_at = entry.at("expires_at").get<std::int64_t>();
      map.add(token, std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed token map: ") + e.what());
  }
  return map;
}

TokenMap TokenMap::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read token map " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed token map " + path.string() + ": " + e.what());
  }
}

void TokenMap::add(std::string token, ApiSession session) {
  if (token.empty() || session.annotator_id.empty()) {
    throw ValidationError("token map entries need a token and an annotator_id");
  }
  sessions_[std::move(token)] = std::move(session);
}

std::optional<ApiSession> TokenMap::lookup(const std::string& token, std::int64_t now) const {
  auto it = sessions_.find(token);
  if (it == sessions_.end()) return std::nullopt;
  if (it->second.expires_at && *it->second.expires_at <= now) return std::nullopt;
  return it->second;
}

nlohmann::json label_scale() {
  nlohmann::json scale = nlohmann::json::array();
  for (int v = 0; v < kNumLabels; ++v) scale.push_back({{"value", v}, {"caption", label_caption(v)}});
  return scale;
}

nlohmann::json campaign_snapshot(const CorpusState& state) {
  const auto matrix = AnnotationMatrix::from_corpus(state);
  const auto report = agreement_report(matrix);

  nlohmann::json open = nlohmann::json::object();
  for (const auto& [id, annotator] : state.annotators) {
    std::size_t count = 0;
    for (const auto& [rid, round] : state.rounds) {
      if (!round.is_assigned(id)) continue;
      for (const auto& pid : round.posting_ids) {
        if (!state.annotations.contains({pid, id})) ++count;
      }
    }
    open[id] = count;
  }
  std::size_t complete = 0;
  for (const auto& [rid, round] : state.rounds) complete += round.status == RoundStatus::Complete;

  auto agreement = to_json(report);
  auto distribution = agreement["label_distribution"];
  return nlohmann::json{{"postings", state.postings.size()},
                        {"rounds", state.rounds.size()},
                        {"rounds_complete", complete},
                        {"annotations", state.annotations.size()},
                        {"agreement", std::move(agreement)},
                        {"label_distribution", std::move(distribution)},
                        {"open_assignments", std::move(open)}};
}

// ---------------------------------------------------------------------------
// Api

Api::Api(Store& store, TokenMap tokens, Clock clock)
    : store_(store), tokens_(std::move(tokens)), clock_(clock ? std::move(clock) : Clock(system_now)) {}

ApiResponse Api::handle(const ApiRequest& request) const {
  const auto session = tokens_.lookup(request.bearer_token, clock_());
  if (!session) return error(401, "missing, unknown or expired bearer token");
  try {
    return route(request, *session);
  } catch (const NotFoundError& e) {
    return error(404, e.what());
  } catch (const ValidationError& e) {
    return error(422, e.what());
  } catch (const std::invalid_argument& e) {
    return error(400, e.what());
  } catch (const IoError& e) {
    return error(500, e.what());
  }
}

ApiResponse Api::route(const ApiRequest& request, const ApiSession& session) const {
  static const std::regex disagreements_path("^/api/rounds/([^/]+)/disagreements$");
  const auto& path = request.path;
  const bool get = request.method == "GET";
  const bool post = request.method == "POST";
  auto require = [&](std::initializer_list<Role> roles) -> std::optional<ApiResponse> {
    for (Role r : roles) {
      if (session.role == r) return std::nullopt;
    }
    return error(403, "role '" + std::string(to_string(session.role)) + "' may not access " + path);
  };

  if (path == "/api/assignments" && get) return get_assignments(session);
  if (path == "/api/annotations" && post) return post_annotation(request, session);
  if (path == "/api/stats" && get) return get_stats();
  if (path == "/api/flags" && get) {
    if (auto denied = require({Role::Moderator, Role::Coordinator})) return *denied;
    return get_flags(request);
  }
  if (path == "/api/rounds" && post) {
    if (auto denied = require({Role::Coordinator})) return *denied;
    return post_round(request);
  }
  std::smatch match;
  if (get && std::regex_match(path, match, disagreements_path)) {
    if (auto denied = require({Role::Coordinator})) return *denied;
    return get_disagreements(match[1].str());
  }
  return error(404, "no route for " + request.method + " " + path);
}

ApiResponse Api::get_assignments(const ApiSession& session) const {
  return store_.read([&](const CorpusState& state) {
    nlohmann::json postings = nlohmann::json::array();
    std::size_t total = 0;
    for (const auto& [rid, round] : state.rounds) {
      if (!round.is_assigned(session.annotator_id)) continue;
      for (const auto& pid : round.posting_ids) {
        ++total;
        if (state.annotations.contains({pid, session.annotator_id})) continue;
        postings.push_back(
            {{"posting_id", pid}, {"round_id", rid}, {"text", state.postings.at(pid).text}});
      }
    }
    const std::size_t open = postings.size();
    return ApiResponse{200, nlohmann::json{{"annotator_id", session.annotator_id},
                                           {"scale", label_scale()},
                                           {"total", total},
                                           {"done", total - open},
                                           {"postings", std::move(postings)}}};
  });
}

ApiResponse Api::post_annotation(const ApiRequest& request, const ApiSession& session) const {
  const auto body = parse_body(request);
  if (!body.contains("posting_id") || !body["posting_id"].is_string()) {
    throw ValidationError("body needs a string posting_id");
  }
  if (!body.contains("label") || !body["label"].is_number_integer()) {
    throw ValidationError("body needs an integer label in the valid range 0..4");
  }
  const auto value = body["label"].get<std::int64_t>();
  if (value < 0 || value >= kNumLabels) {
    throw ValidationError("label " + std::to_string(value) + " outside valid range 0..4");
  }
  const auto stored = submit_annotation(store_, body["posting_id"].get<std::string>(),
                                        session.annotator_id, Label(static_cast<int>(value)), clock_());
  return {200, nlohmann::json(stored)};
}

ApiResponse Api::get_disagreements(const std::string& round_id) const {
  const auto records = store_.read(
      [&](const CorpusState& state) { return rank_disagreements(state, round_id); });
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : records) out.push_back(to_json(r));
  return {200, nlohmann::json{{"round_id", round_id}, {"postings", std::move(out)}}};
}

ApiResponse Api::get_stats() const {
  const CorpusState snapshot = store_.snapshot();
  return {200, campaign_snapshot(snapshot)};
}

ApiResponse Api::get_flags(const ApiRequest& request) const {
  const double tau_forum = query_double(request, "tau_forum", kDefaultForumThreshold);
  const double tau_post = query_double(request, "tau_post", kDefaultPostThreshold);
  const auto rates =
      store_.read([&](const CorpusState& state) { return forum_rates(state, tau_post); });
  return {200, to_json(flag_forums(rates, tau_forum, tau_post))};
}

ApiResponse Api::post_round(const ApiRequest& request) const {
  const auto body = parse_body(request);
  const auto kind = parse_round_kind(body.value("kind", std::string("regular")));
  const auto seed = body.value("seed", std::uint64_t{0});
  const auto k = body.value("k", kDefaultAnnotatorsPerRound);

  std::vector<std::string> posting_ids;
  if (body.contains("posting_ids")) {
    posting_ids = body["posting_ids"].get<std::vector<std::string>>();
  } else if (body.contains("sampler")) {
    const auto& sampler = body["sampler"];
    const auto mode = sampler.value("mode", std::string("random"));
    const auto n = sampler.value("n", kDefaultRoundSize);
    const CorpusState snapshot = store_.snapshot();
    if (mode == "random") {
      posting_ids = sample_random(snapshot, n, seed);
    } else if (mode == "top_positive" || mode == "near_boundary") {
      posting_ids = sample_preclassified(
          snapshot, mode == "top_positive" ? PreclassMode::TopPositive : PreclassMode::NearBoundary,
          n, sampler.value("epsilon", kDefaultBoundaryEpsilon));
    } else {
      throw ValidationError("unknown sampler mode '" + mode + "'");
    }
  } else {
    throw ValidationError("body needs posting_ids or a sampler");
  }

  const auto annotators =
      body.contains("annotators")
          ? body["annotators"].get<std::vector<std::string>>()
          : store_.read([](const CorpusState& state) { return active_annotators(state); });
  const Round round = kind == RoundKind::Calibration
                          ? create_calibration_round(store_, posting_ids, annotators)
                          : create_round(store_, posting_ids, annotators, k, seed);
  return {201, nlohmann::json(round)};
}

// ---------------------------------------------------------------------------
// HttpServer

struct HttpServer::Impl {
  httplib::Server server;
};

HttpServer::HttpServer(const Api& api, std::optional<std::filesystem::path> web_root)
    : impl_(std::make_unique<Impl>()) {
  auto& server = impl_->server;
  server.set_default_headers({{kSchemaVersionHeader, std::to_string(kApiSchemaVersion)}});

  auto adapter = [&api](const httplib::Request& req, httplib::Response& res) {
    ApiRequest request;
    request.method = req.method;
    request.path = req.path;
    for (const auto& [key, value] : req.params) request.query[key] = value;
    request.body = req.body;
    const auto auth = req.get_header_value("Authorization");
    constexpr std::string_view kBearer = "Bearer ";
    if (auth.rfind(kBearer, 0) == 0) request.bearer_token = auth.substr(kBearer.size());
    const auto response = api.handle(request);
    res.status = response.status;
    res.set_content(response.body.dump(), "application/json");
  };
  server.Get("/api/.*", adapter);
  server.Post("/api/.*", adapter);
  if (web_root) server.set_mount_point("/", web_root->string());
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) throw IoError("cannot bind " + host);
    return bound;
  }
  if (!impl_->server.bind_to_port(host, port)) {
    throw IoError("cannot bind " + host + ":" + std::to_string(port));
  }
  return port;
}

void HttpServer::run() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

void HttpServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace modlab

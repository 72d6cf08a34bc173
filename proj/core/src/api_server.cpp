#include "defect_sage/api_server.hpp"

#include "defect_sage/query.hpp"
#include "defect_sage/report.hpp"

#include <httplib.h>
#include <openssl/rand.h>

#include <array>
#include <charconv>
#include <thread>

namespace defect_sage::api {

namespace {

using Json = nlohmann::json;

void send_json(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, status, {{"error", message}});
}

Json messages_json(const std::vector<Message>& messages) {
  Json arr = Json::array();
  for (const auto& m : messages) arr.push_back(to_json(m));
  return arr;
}

Json relation_json(const kb::CausalRelation& r) {
  return {{"source", r.source}, {"target", r.target}, {"kind", kb::to_string(r.kind)}, {"provenance", r.provenance}};
}

Json defect_detail(const kb::KnowledgeBase& kb, const std::string& leaf) {
  Json j = {{"name", leaf}, {"path", kb::find_path(kb, leaf).value_or(kb::CategoryPath{})}};
  if (const auto* p = kb.profile(leaf)) {
    j["profile"] = {{"causes", p->causes},
                    {"notes", p->notes},
                    {"image_hint", p->image_hint ? Json(*p->image_hint) : Json(nullptr)},
                    {"provenance", p->provenance}};
  } else {
    j["profile"] = nullptr;
  }
  Json causes = Json::array();
  for (const auto& r : kb::causes_of(kb, leaf)) causes.push_back(relation_json(r));
  Json effects = Json::array();
  for (const auto& r : kb::consequences_of(kb, leaf)) effects.push_back(relation_json(r));
  j["causal"] = {{"causes", causes}, {"consequences", effects}};
  Json rules = Json::array();
  for (const auto& r : kb.mitigations()) {
    if (r.defect != leaf) continue;
    Json rule = {{"material", r.material},
                 {"parameter", kb::to_string(r.parameter)},
                 {"directive", kb::to_string(r.directive)},
                 {"text", r.display_line()},
                 {"units", r.units},
                 {"provenance", r.provenance},
                 {"source_origin", "ontology"}};
    rule["bounds"] = r.bounds ? Json{{"low", r.bounds->low}, {"high", r.bounds->high}} : Json(nullptr);
    rules.push_back(rule);
  }
  j["mitigations"] = rules;
  return j;
}

}  // namespace

std::string new_session_id() {
  std::array<unsigned char, 16> bytes{};
  if (RAND_bytes(bytes.data(), static_cast<int>(bytes.size())) != 1) throw Error("random source unavailable");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string id;
  for (unsigned char b : bytes) {
    id += kHex[b >> 4];
    id += kHex[b & 0xF];
  }
  return id;
}

std::pair<std::string, int> parse_listen_address(const std::string& addr) {
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos || colon == 0) throw Error("listen address must be HOST:PORT, got '" + addr + "'");
  int port = -1;
  const auto* first = addr.data() + colon + 1;
  const auto* last = addr.data() + addr.size();
  auto [ptr, ec] = std::from_chars(first, last, port);
  if (ec != std::errc{} || ptr != last || port < 0 || port > 65535) {
    throw Error("invalid port in listen address '" + addr + "'");
  }
  return {addr.substr(0, colon), port};
}

SessionRegistry::SessionRegistry(std::shared_ptr<const session::Engine> engine, session::ServiceConfig config)
    : engine_(std::move(engine)), config_(std::move(config)) {}

std::pair<std::string, std::shared_ptr<SessionRegistry::Entry>> SessionRegistry::create() {
  auto entry = std::make_shared<Entry>(engine_, config_);
  entry->session.start();
  std::unique_lock lock(mutex_);
  auto id = new_session_id();
  while (sessions_.count(id)) id = new_session_id();
  sessions_.emplace(id, entry);
  return {id, entry};
}

std::shared_ptr<SessionRegistry::Entry> SessionRegistry::find(const std::string& id) const {
  std::shared_lock lock(mutex_);
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

std::size_t SessionRegistry::size() const {
  std::shared_lock lock(mutex_);
  return sessions_.size();
}

struct ApiServer::Impl {
  std::shared_ptr<const session::Engine> engine;
  session::ServiceConfig config;
  SessionRegistry registry;
  httplib::Server server;
  std::thread thread;

  Impl(std::shared_ptr<const session::Engine> e, session::ServiceConfig c)
      : engine(e), config(c), registry(std::move(e), std::move(c)) {
    routes();
  }

  std::shared_ptr<SessionRegistry::Entry> lookup(const httplib::Request& req, httplib::Response& res) {
    auto entry = registry.find(req.matches[1]);
    if (!entry) send_error(res, 404, "unknown session");
    return entry;
  }

  Json exchange(const std::string& id, SessionRegistry::Entry& entry, const session::Input& input) {
    std::lock_guard lock(entry.mutex);
    auto out = entry.session.submit(input);
    return {{"session_id", id},
            {"state", session::to_string(entry.session.state())},
            {"messages", messages_json(out)}};
  }

  void routes() {
    server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, {{"status", "ok"}});
    });

    server.Post("/sessions", [this](const httplib::Request&, httplib::Response& res) {
      auto [id, entry] = registry.create();
      std::lock_guard lock(entry->mutex);
      send_json(res, 201,
                {{"session_id", id},
                 {"state", session::to_string(entry->session.state())},
                 {"menu", session::render_main_menu()},
                 {"messages", messages_json(entry->session.start())}});
    });

    server.Get(R"(/sessions/([0-9a-f]+))", [this](const httplib::Request& req, httplib::Response& res) {
      auto entry = lookup(req, res);
      if (!entry) return;
      std::lock_guard lock(entry->mutex);
      send_json(res, 200,
                {{"session_id", req.matches[1]},
                 {"state", session::to_string(entry->session.state())},
                 {"transcript", entry->session.transcript().to_json()["entries"]}});
    });

    server.Post(R"(/sessions/([0-9a-f]+)/messages)", [this](const httplib::Request& req, httplib::Response& res) {
      auto entry = lookup(req, res);
      if (!entry) return;
      Json body;
      try {
        body = Json::parse(req.body);
      } catch (const Json::parse_error&) {
        return send_error(res, 400, "body must be JSON");
      }
      if (!body.is_object() || !body.contains("text") || !body["text"].is_string()) {
        return send_error(res, 400, "body must be an object with a string 'text'");
      }
      send_json(res, 200, exchange(req.matches[1], *entry, session::Input::from_text(body["text"].get<std::string>())));
    });

    server.Post(R"(/sessions/([0-9a-f]+)/images)", [this](const httplib::Request& req, httplib::Response& res) {
      auto entry = lookup(req, res);
      if (!entry) return;
      if (!req.is_multipart_form_data() || !req.has_file("image")) {
        return send_error(res, 400, "multipart field 'image' is required");
      }
      const auto image = req.get_file_value("image");
      session::ImageUpload upload;
      upload.bytes = image.content;
      upload.filename = image.filename.empty() ? "image" : image.filename;
      if (req.has_file("hypothesis")) upload.hypothesis = req.get_file_value("hypothesis").content;
      if (req.has_file("material")) upload.material = req.get_file_value("material").content;
      send_json(res, 200, exchange(req.matches[1], *entry, session::Input::from_image(std::move(upload))));
    });

    server.Get(R"(/sessions/([0-9a-f]+)/report)", [this](const httplib::Request& req, httplib::Response& res) {
      auto entry = lookup(req, res);
      if (!entry) return;
      std::lock_guard lock(entry->mutex);
      res.set_content(export_report(entry->session.transcript()), "text/html; charset=utf-8");
    });

    server.Get("/kb/defects", [this](const httplib::Request&, httplib::Response& res) {
      Json arr = Json::array();
      for (const auto& leaf : kb::flatten_vocabulary(*engine->kb, kb::VocabularyScope::leaves_only)) {
        arr.push_back({{"name", leaf}, {"path", kb::find_path(*engine->kb, leaf).value_or(kb::CategoryPath{})}});
      }
      send_json(res, 200, arr);
    });

    server.Get(R"(/kb/defects/(.+))", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string name = req.matches[1];
      auto leaf = engine->kb->canonical_leaf(name);
      if (!leaf) {
        const auto leaves = kb::flatten_vocabulary(*engine->kb, kb::VocabularyScope::leaves_only);
        return send_json(res, 404, {{"error", "unknown defect '" + name + "'"},
                                    {"suggestions", query::close_matches(name, leaves)}});
      }
      send_json(res, 200, defect_detail(*engine->kb, *leaf));
    });

    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      try {
        std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        send_error(res, 500, e.what());
      } catch (...) {
        send_error(res, 500, "internal error");
      }
    });
  }
};

ApiServer::ApiServer(std::shared_ptr<const session::Engine> engine, session::ServiceConfig config) {
  if (!engine || !engine->kb) throw Error("server requires a loaded knowledge base");
  auto shared = std::make_shared<session::Engine>(*engine);
  shared->search = make_concurrent(shared->search);
  shared->text_model = make_concurrent(shared->text_model);
  shared->vision = make_concurrent(shared->vision);
  impl_ = std::make_unique<Impl>(std::move(shared), std::move(config));
}

ApiServer::~ApiServer() { stop(); }

int ApiServer::bind(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound <= 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void ApiServer::listen() { impl_->server.listen_after_bind(); }

void ApiServer::start() {
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

void ApiServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

SessionRegistry& ApiServer::sessions() { return impl_->registry; }

}  // namespace defect_sage::api

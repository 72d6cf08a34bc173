#pragma once

#include "defect_sage/session.hpp"

#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <unordered_map>

namespace defect_sage::api {

/// In-memory sessions addressed by opaque random ids. Each session is
/// serialized by its own mutex; the registry lock is held only for lookup.
class SessionRegistry {
 public:
  SessionRegistry(std::shared_ptr<const session::Engine> engine, session::ServiceConfig config);

  struct Entry {
    std::mutex mutex;
    session::Session session;
    Entry(std::shared_ptr<const session::Engine> e, session::ServiceConfig c)
        : session(std::move(e), std::move(c)) {}
  };

  /// Creates and starts a session; returns its id and entry.
  std::pair<std::string, std::shared_ptr<Entry>> create();
  std::shared_ptr<Entry> find(const std::string& id) const;
  std::size_t size() const;

 private:
  std::shared_ptr<const session::Engine> engine_;
  session::ServiceConfig config_;
  mutable std::shared_mutex mutex_;
  std::unordered_map<std::string, std::shared_ptr<Entry>> sessions_;
};

/// 32 lowercase hex characters from a cryptographic RNG.
std::string new_session_id();

class ApiServer {
 public:
  ApiServer(std::shared_ptr<const session::Engine> engine, session::ServiceConfig config);
  ~ApiServer();
  ApiServer(const ApiServer&) = delete;
  ApiServer& operator=(const ApiServer&) = delete;

  /// Binds the listening socket; port 0 picks a free port. Returns the bound
  /// port, throws Error on failure.
  int bind(const std::string& host, int port);
  /// Serves on the bound socket until stop().
  void listen();
  /// listen() on a background thread.
  void start();
  void stop();

  SessionRegistry& sessions();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Splits "HOST:PORT"; throws Error when malformed.
std::pair<std::string, int> parse_listen_address(const std::string& addr);

}  // namespace defect_sage::api

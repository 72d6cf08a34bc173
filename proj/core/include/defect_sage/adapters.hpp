#pragma once

#include "defect_sage/errors.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

// Contracts for the external services the engine talks to (search, text
// model, multimodal model) plus replay implementations backed by recorded
// transcript files. Nothing here performs network I/O.
namespace defect_sage {

/// Sampling configuration sent with every model request. Defaults are locked
/// to greedy decoding; anything else must go through with_override().
class GenerationConfig {
 public:
  GenerationConfig() = default;

  static GenerationConfig locked() { return {}; }
  static GenerationConfig with_override(double temperature, double top_p, int top_k);

  double temperature() const { return temperature_; }
  double top_p() const { return top_p_; }
  int top_k() const { return top_k_; }
  bool overridden() const { return overridden_; }

  bool operator==(const GenerationConfig&) const = default;

 private:
  double temperature_ = 0.0;
  double top_p_ = 0.1;
  int top_k_ = 1;
  bool overridden_ = false;
};

enum class Channel { image, web, scholar };

std::string_view to_string(Channel c);
std::optional<Channel> parse_channel(std::string_view s);

struct EvidenceItem {
  Channel channel = Channel::web;
  std::string title;
  std::string url;
  std::string snippet;

  bool operator==(const EvidenceItem&) const = default;
};

struct SearchRequest {
  Channel channel = Channel::web;
  std::string query;
};

class TransportError : public Error {
 public:
  using Error::Error;
};

class MissingCredentialsError : public Error {
 public:
  explicit MissingCredentialsError(const std::string& env_var)
      : Error("missing credentials: environment variable " + env_var + " is not set") {}
};

class AdapterError : public Error {
 public:
  using Error::Error;
};

class SearchClient {
 public:
  virtual ~SearchClient() = default;
  /// Throws TransportError on failure.
  virtual std::vector<EvidenceItem> search(const SearchRequest& request) = 0;
  virtual bool configured() const { return true; }
  virtual bool concurrent_safe() const { return false; }
};

struct TextRequest {
  std::string system_prompt;
  std::string prompt;
  GenerationConfig config;
  std::string model_id;
};

class TextModel {
 public:
  virtual ~TextModel() = default;
  /// Throws AdapterError on failure.
  virtual std::string complete(const TextRequest& request) = 0;
  virtual bool concurrent_safe() const { return false; }
};

struct VisionRequest {
  std::string prompt;
  std::string image;  // raw bytes
  GenerationConfig config;
  std::string model_id;
};

class MultimodalAdapter {
 public:
  virtual ~MultimodalAdapter() = default;
  /// Throws AdapterError on failure.
  virtual std::string generate(const VisionRequest& request) = 0;
  virtual bool concurrent_safe() const { return false; }
};

/// Serializes calls into an adapter that is not safe for concurrent use.
class SerializedMultimodalAdapter final : public MultimodalAdapter {
 public:
  explicit SerializedMultimodalAdapter(std::shared_ptr<MultimodalAdapter> inner) : inner_(std::move(inner)) {}
  std::string generate(const VisionRequest& request) override;
  bool concurrent_safe() const override { return true; }

 private:
  std::shared_ptr<MultimodalAdapter> inner_;
  std::mutex mutex_;
};

class SerializedSearchClient final : public SearchClient {
 public:
  explicit SerializedSearchClient(std::shared_ptr<SearchClient> inner) : inner_(std::move(inner)) {}
  std::vector<EvidenceItem> search(const SearchRequest& request) override;
  bool configured() const override { return inner_->configured(); }
  bool concurrent_safe() const override { return true; }

 private:
  std::shared_ptr<SearchClient> inner_;
  std::mutex mutex_;
};

class SerializedTextModel final : public TextModel {
 public:
  explicit SerializedTextModel(std::shared_ptr<TextModel> inner) : inner_(std::move(inner)) {}
  std::string complete(const TextRequest& request) override;
  bool concurrent_safe() const override { return true; }

 private:
  std::shared_ptr<TextModel> inner_;
  std::mutex mutex_;
};

/// Returns the adapter unchanged when it is already safe, otherwise wraps it.
std::shared_ptr<MultimodalAdapter> make_concurrent(std::shared_ptr<MultimodalAdapter> adapter);
std::shared_ptr<SearchClient> make_concurrent(std::shared_ptr<SearchClient> client);
std::shared_ptr<TextModel> make_concurrent(std::shared_ptr<TextModel> model);

// Transcript keys.
std::string search_request_key(const SearchRequest& request);
std::string text_request_key(const TextRequest& request);
std::string vision_request_key(std::string_view model_id, std::string_view prompt, std::string_view image);

/// A recorded response or a recorded failure.
struct RecordedEntry {
  std::optional<std::string> response;
  std::optional<std::string> error;
};

class RecordedSearchClient final : public SearchClient {
 public:
  explicit RecordedSearchClient(const nlohmann::json& transcript);
  static RecordedSearchClient from_file(const std::filesystem::path& path);

  std::vector<EvidenceItem> search(const SearchRequest& request) override;
  bool concurrent_safe() const override { return true; }

 private:
  struct Entry {
    std::vector<EvidenceItem> items;
    std::optional<std::string> error;
  };
  std::map<std::string, Entry, std::less<>> entries_;
};

class RecordedTextModel final : public TextModel {
 public:
  explicit RecordedTextModel(const nlohmann::json& transcript);
  static RecordedTextModel from_file(const std::filesystem::path& path);

  std::string complete(const TextRequest& request) override;
  bool concurrent_safe() const override { return true; }

 private:
  std::map<std::string, RecordedEntry, std::less<>> entries_;
};

class RecordedMultimodalAdapter final : public MultimodalAdapter {
 public:
  explicit RecordedMultimodalAdapter(const nlohmann::json& transcript);
  static RecordedMultimodalAdapter from_file(const std::filesystem::path& path);

  std::string generate(const VisionRequest& request) override;
  bool concurrent_safe() const override { return true; }

 private:
  std::map<std::string, RecordedEntry, std::less<>> entries_;
};

/// Reads a whole file as bytes; throws Error when unreadable.
std::string read_file_bytes(const std::filesystem::path& path);

/// Value of an environment variable, or nullopt when unset or empty.
std::optional<std::string> env_value(const char* name);

}  // namespace defect_sage

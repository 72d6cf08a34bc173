#include "defect_sage/adapters.hpp"

#include "defect_sage/digest.hpp"

#include <nlohmann/json.hpp>

#include <cstdlib>
#include <fstream>
#include <iterator>

namespace defect_sage {

namespace {

using Json = nlohmann::json;

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open transcript file " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw Error("malformed transcript file " + path.string() + ": " + e.what());
  }
}

const Json& transcript_entries(const Json& transcript) {
  if (!transcript.is_object() || !transcript.contains("entries") || !transcript["entries"].is_object()) {
    throw Error("transcript must be an object with an 'entries' map");
  }
  return transcript["entries"];
}

std::map<std::string, RecordedEntry, std::less<>> parse_text_entries(const Json& transcript) {
  std::map<std::string, RecordedEntry, std::less<>> out;
  for (const auto& [key, entry] : transcript_entries(transcript).items()) {
    RecordedEntry e;
    if (entry.contains("response")) e.response = entry["response"].get<std::string>();
    if (entry.contains("error")) e.error = entry["error"].get<std::string>();
    if (!e.response && !e.error) throw Error("transcript entry " + key + " has neither response nor error");
    out.emplace(key, std::move(e));
  }
  return out;
}

std::string replay(const std::map<std::string, RecordedEntry, std::less<>>& entries, const std::string& key) {
  auto it = entries.find(key);
  if (it == entries.end()) throw AdapterError("no recorded response for request " + key);
  if (it->second.error) throw AdapterError(*it->second.error);
  return *it->second.response;
}

}  // namespace

GenerationConfig GenerationConfig::with_override(double temperature, double top_p, int top_k) {
  GenerationConfig c;
  c.temperature_ = temperature;
  c.top_p_ = top_p;
  c.top_k_ = top_k;
  c.overridden_ = true;
  return c;
}

std::string_view to_string(Channel c) {
  switch (c) {
    case Channel::image: return "image";
    case Channel::web: return "web";
    case Channel::scholar: return "scholar";
  }
  return "web";
}

std::optional<Channel> parse_channel(std::string_view s) {
  if (s == "image") return Channel::image;
  if (s == "web") return Channel::web;
  if (s == "scholar") return Channel::scholar;
  return std::nullopt;
}

std::string SerializedMultimodalAdapter::generate(const VisionRequest& request) {
  std::lock_guard lock(mutex_);
  return inner_->generate(request);
}

std::shared_ptr<MultimodalAdapter> make_concurrent(std::shared_ptr<MultimodalAdapter> adapter) {
  if (!adapter || adapter->concurrent_safe()) return adapter;
  return std::make_shared<SerializedMultimodalAdapter>(std::move(adapter));
}

std::vector<EvidenceItem> SerializedSearchClient::search(const SearchRequest& request) {
  std::lock_guard lock(mutex_);
  return inner_->search(request);
}

std::string SerializedTextModel::complete(const TextRequest& request) {
  std::lock_guard lock(mutex_);
  return inner_->complete(request);
}

std::shared_ptr<SearchClient> make_concurrent(std::shared_ptr<SearchClient> client) {
  if (!client || client->concurrent_safe()) return client;
  return std::make_shared<SerializedSearchClient>(std::move(client));
}

std::shared_ptr<TextModel> make_concurrent(std::shared_ptr<TextModel> model) {
  if (!model || model->concurrent_safe()) return model;
  return std::make_shared<SerializedTextModel>(std::move(model));
}

std::string search_request_key(const SearchRequest& request) {
  Json canonical = {{"channel", to_string(request.channel)}, {"query", request.query}};
  return sha256_hex(canonical.dump());
}

std::string text_request_key(const TextRequest& request) {
  Json canonical = {{"model", request.model_id},
                    {"system", request.system_prompt},
                    {"prompt", request.prompt}};
  return request.model_id + ":" + sha256_hex(canonical.dump());
}

std::string vision_request_key(std::string_view model_id, std::string_view prompt, std::string_view image) {
  std::string payload;
  payload.reserve(prompt.size() + image.size() + 24);
  payload += std::to_string(prompt.size());
  payload += ':';
  payload += prompt;
  payload += image;
  return std::string(model_id) + ":" + sha256_hex(payload);
}

RecordedSearchClient::RecordedSearchClient(const nlohmann::json& transcript) {
  for (const auto& [key, entry] : transcript_entries(transcript).items()) {
    Entry e;
    if (entry.contains("error")) e.error = entry["error"].get<std::string>();
    for (const auto& item : entry.value("items", Json::array())) {
      EvidenceItem ev;
      auto channel = parse_channel(item.value("channel", std::string{}));
      if (!channel) throw Error("transcript entry " + key + " has an item with an unknown channel");
      ev.channel = *channel;
      ev.title = item.value("title", std::string{});
      ev.url = item.value("url", std::string{});
      ev.snippet = item.value("snippet", std::string{});
      e.items.push_back(std::move(ev));
    }
    entries_.emplace(key, std::move(e));
  }
}

RecordedSearchClient RecordedSearchClient::from_file(const std::filesystem::path& path) {
  return RecordedSearchClient(read_json_file(path));
}

std::vector<EvidenceItem> RecordedSearchClient::search(const SearchRequest& request) {
  auto it = entries_.find(search_request_key(request));
  if (it == entries_.end()) {
    throw TransportError("no recorded response for " + std::string(to_string(request.channel)) + " query '" +
                         request.query + "'");
  }
  if (it->second.error) throw TransportError(*it->second.error);
  return it->second.items;
}

RecordedTextModel::RecordedTextModel(const nlohmann::json& transcript) : entries_(parse_text_entries(transcript)) {}

RecordedTextModel RecordedTextModel::from_file(const std::filesystem::path& path) {
  return RecordedTextModel(read_json_file(path));
}

std::string RecordedTextModel::complete(const TextRequest& request) {
  return replay(entries_, text_request_key(request));
}

RecordedMultimodalAdapter::RecordedMultimodalAdapter(const nlohmann::json& transcript)
    : entries_(parse_text_entries(transcript)) {}

RecordedMultimodalAdapter RecordedMultimodalAdapter::from_file(const std::filesystem::path& path) {
  return RecordedMultimodalAdapter(read_json_file(path));
}

std::string RecordedMultimodalAdapter::generate(const VisionRequest& request) {
  return replay(entries_, vision_request_key(request.model_id, request.prompt, request.image));
}

std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::optional<std::string> env_value(const char* name) {
  const char* v = std::getenv(name);
  if (!v || !*v) return std::nullopt;
  return std::string(v);
}

}  // namespace defect_sage

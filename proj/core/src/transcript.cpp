#include "defect_sage/transcript.hpp"

#include <array>
#include <fstream>
#include <utility>

namespace defect_sage {

namespace {

constexpr std::array<std::pair<MessageKind, std::string_view>, 15> kKinds{{
    {MessageKind::input, "input"},
    {MessageKind::menu, "menu"},
    {MessageKind::notice, "notice"},
    {MessageKind::listing, "listing"},
    {MessageKind::question_yes_no, "question_yes_no"},
    {MessageKind::question_choice, "question_choice"},
    {MessageKind::question_text, "question_text"},
    {MessageKind::defect_card, "defect_card"},
    {MessageKind::mitigation, "mitigation"},
    {MessageKind::evidence_list, "evidence_list"},
    {MessageKind::summary, "summary"},
    {MessageKind::causal, "causal"},
    {MessageKind::alignment_report, "alignment_report"},
    {MessageKind::audit, "audit"},
    {MessageKind::export_request, "export"},
}};

}  // namespace

std::string_view to_string(Role r) { return r == Role::user ? "user" : "agent"; }

std::string_view to_string(MessageKind k) {
  for (const auto& [kind, name] : kKinds) {
    if (kind == k) return name;
  }
  return "notice";
}

std::optional<MessageKind> parse_message_kind(std::string_view s) {
  for (const auto& [kind, name] : kKinds) {
    if (name == s) return kind;
  }
  return std::nullopt;
}

nlohmann::json to_json(const Message& m) {
  nlohmann::json j = {{"role", to_string(m.role)},
                      {"kind", to_string(m.kind)},
                      {"text", m.text},
                      {"data", m.data},
                      {"attachments", m.attachments},
                      {"timestamp", m.timestamp}};
  j["source_origin"] = m.source_origin ? nlohmann::json(kb::to_string(*m.source_origin)) : nlohmann::json(nullptr);
  return j;
}

Message message_from_json(const nlohmann::json& j) {
  Message m;
  const auto role = j.at("role").get<std::string>();
  if (role != "user" && role != "agent") throw Error("unknown role '" + role + "'");
  m.role = role == "user" ? Role::user : Role::agent;
  const auto kind = parse_message_kind(j.at("kind").get<std::string>());
  if (!kind) throw Error("unknown message kind '" + j.at("kind").get<std::string>() + "'");
  m.kind = *kind;
  m.text = j.value("text", std::string{});
  m.data = j.value("data", nlohmann::json::object());
  m.attachments = j.value("attachments", std::vector<std::string>{});
  m.timestamp = j.value("timestamp", std::string{});
  if (j.contains("source_origin") && j["source_origin"].is_string()) {
    const auto s = j["source_origin"].get<std::string>();
    if (s == "ontology") {
      m.source_origin = kb::SourceOrigin::ontology;
    } else if (s == "external_retrieval") {
      m.source_origin = kb::SourceOrigin::external_retrieval;
    } else {
      throw Error("unknown source_origin '" + s + "'");
    }
  }
  return m;
}

nlohmann::json SessionTranscript::to_json() const {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& m : entries_) entries.push_back(defect_sage::to_json(m));
  return {{"entries", entries}};
}

SessionTranscript SessionTranscript::from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("entries") || !j["entries"].is_array()) {
    throw Error("session transcript must be an object with an 'entries' array");
  }
  SessionTranscript t;
  for (const auto& e : j["entries"]) t.append(message_from_json(e));
  return t;
}

std::string SessionTranscript::serialize() const { return to_json().dump(2) + "\n"; }

void SessionTranscript::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << serialize();
}

SessionTranscript SessionTranscript::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open session file " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw Error("malformed session file " + path.string() + ": " + e.what());
  }
}

}  // namespace defect_sage

#pragma once

#include "defect_sage/errors.hpp"
#include "defect_sage/knowledge_base.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace defect_sage {

enum class Role { user, agent };

// Payload kinds let clients render messages without parsing prose.
enum class MessageKind {
  input,
  menu,
  notice,
  listing,
  question_yes_no,
  question_choice,
  question_text,
  defect_card,
  mitigation,
  evidence_list,
  summary,
  causal,
  alignment_report,
  audit,
  export_request,
};

std::string_view to_string(Role r);
std::string_view to_string(MessageKind k);
std::optional<MessageKind> parse_message_kind(std::string_view s);

struct Message {
  Role role = Role::agent;
  MessageKind kind = MessageKind::notice;
  std::string text;
  nlohmann::json data = nlohmann::json::object();
  std::vector<std::string> attachments;
  std::optional<kb::SourceOrigin> source_origin;
  std::string timestamp;

  bool operator==(const Message&) const = default;
};

nlohmann::json to_json(const Message& m);
Message message_from_json(const nlohmann::json& j);

/// Append-only record of a session.
class SessionTranscript {
 public:
  void append(Message m) { entries_.push_back(std::move(m)); }
  const std::vector<Message>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }

  nlohmann::json to_json() const;
  static SessionTranscript from_json(const nlohmann::json& j);

  /// Pretty-printed JSON with a trailing newline.
  std::string serialize() const;
  void save(const std::filesystem::path& path) const;
  static SessionTranscript load(const std::filesystem::path& path);

 private:
  std::vector<Message> entries_;
};

}  // namespace defect_sage

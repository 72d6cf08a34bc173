#pragma once

#include "defect_sage/adapters.hpp"
#include "defect_sage/clock.hpp"
#include "defect_sage/knowledge_base.hpp"
#include "defect_sage/transcript.hpp"
#include "defect_sage/vision.hpp"

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

// Interactive diagnostic workflow as an explicit state machine. The REPL and
// the HTTP API both drive it through handle_input.
namespace defect_sage::session {

enum class SessionState {
  Home,
  MainMenu,
  ClassifyFlow_AwaitInput,
  ClassifyFlow_AwaitConfirm,
  ClassifyFlow_AwaitSubtype,
  ExploreFlow_AwaitSelection,
  ExploreFlow_ShowingDefect,
  ExploreFlow_AwaitAugment,
  ExploreFlow_AwaitCausal,
  ImageFlow_AwaitHypothesisAnswer,
  ImageFlow_AwaitUpload,
  Exporting,
};

inline constexpr int kStateCount = 12;

std::string_view to_string(SessionState s);

struct ServiceConfig {
  std::string kb_path;
  std::string descriptors_path;
  std::string search_env_var = "SEARCH_API_KEY";
  std::string model_env_var = "MODEL_API_KEY";
  std::string fast_model = "vision-fast";
  std::string pro_model = "vision-pro";
  std::string summary_model = "text-summary";
  std::string listen_address = "127.0.0.1:8080";
  std::string default_material = "IN625";
  bool external_retrieval_enabled = true;
  bool image_flow_enabled = true;
};

/// Shared, read-only engine dependencies. Null clients mean "unavailable".
struct Engine {
  std::shared_ptr<const kb::KnowledgeBase> kb;
  std::vector<vision::DefectDescriptor> descriptors;
  std::shared_ptr<SearchClient> search;
  std::shared_ptr<TextModel> text_model;
  std::shared_ptr<MultimodalAdapter> vision;
  Clock clock = system_clock();
};

struct ImageUpload {
  std::string bytes;
  std::string filename = "image";
  std::optional<std::string> hypothesis;
  std::optional<std::string> material;
};

struct Input {
  std::string text;
  std::optional<ImageUpload> image;

  static Input from_text(std::string t) { return {std::move(t), std::nullopt}; }
  static Input from_image(ImageUpload u) { return {{}, std::move(u)}; }
};

struct SessionContext {
  SessionState state = SessionState::Home;
  std::string pending_term;                   // awaiting yes/no confirmation
  std::vector<std::string> pending_options;   // numbered subtypes or explore menu
  std::optional<std::string> selected_defect;
  std::string material;
  std::optional<std::string> hypothesis;
  vision::ModelSelector selector;
  std::optional<Message> last_question;  // re-emitted on invalid input
};

SessionContext initial_context(const ServiceConfig& config);

/// Main menu text: options 1-6 then 0.
std::string render_main_menu();

/// Banner and menu shown when a session starts or returns Home.
std::vector<Message> greeting(SessionContext& ctx, const Engine& engine);

/// Never throws: dependency failures become apology notices and the state is
/// left where it was.
std::vector<Message> handle_input(SessionContext& ctx, const Input& input, const Engine& engine,
                                  const ServiceConfig& config);

struct ExploreOptions {
  bool augment = false;  // run stage 3 retrieval and summary
  bool causal = false;   // append causal expansion
};

/// Non-interactive exploration: defect card, guidance for `material`, and
/// when retrieval is enabled the optional augmentation and causal expansion.
std::vector<Message> explore_defect(std::string_view defect, std::string_view material, const Engine& engine,
                                    const ServiceConfig& config, ExploreOptions options);

Message causal_expansion(const kb::KnowledgeBase& kb, std::string_view defect, const Clock& clock);

/// Accepts y/yes/n/no in any case.
std::optional<bool> parse_yes_no(std::string_view s);

/// Session = context + transcript. Not thread-safe; callers serialize.
class Session {
 public:
  Session(std::shared_ptr<const Engine> engine, ServiceConfig config);

  const std::vector<Message>& start();
  std::vector<Message> submit(const Input& input);

  SessionState state() const { return ctx_.state; }
  const SessionContext& context() const { return ctx_; }
  const SessionTranscript& transcript() const { return transcript_; }

 private:
  void record(const std::vector<Message>& out);

  std::shared_ptr<const Engine> engine_;
  ServiceConfig config_;
  SessionContext ctx_;
  SessionTranscript transcript_;
  std::vector<Message> greeting_;
};

}  // namespace defect_sage::session

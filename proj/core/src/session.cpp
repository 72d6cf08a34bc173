#include "defect_sage/session.hpp"

#include "defect_sage/digest.hpp"
#include "defect_sage/evidence.hpp"
#include "defect_sage/query.hpp"
#include "defect_sage/text.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <regex>

namespace defect_sage::session {

namespace {

using Json = nlohmann::json;
using kb::SourceOrigin;

constexpr std::string_view kBanner = "LPBF Defect Agent is (Smart NLP Search & Image Analysis) Ready!";

struct MenuOption {
  std::string_view key;
  std::string_view label;
};

constexpr std::array<MenuOption, 7> kMenu{{
    {"1", "Show main defect types"},
    {"2", "List categories"},
    {"3", "Classify a defect (Supports fuzzy search)"},
    {"4", "Explore a defect (Numeric Menu)"},
    {"5", "Export Output (HTML & PNG)"},
    {"6", "📷 Analyze User Image (AI Vision)"},
    {"0", "Back to Home"},
}};

class Flow {
 public:
  Flow(SessionContext& ctx, const Engine& engine, const ServiceConfig& config, std::vector<Message>& out)
      : ctx_(ctx), engine_(engine), kb_(*engine.kb), config_(config), out_(out) {}

  void dispatch(const Input& input);

  void emit(MessageKind kind, std::string text, Json data = Json::object(),
            std::optional<SourceOrigin> origin = std::nullopt) {
    Message m;
    m.kind = kind;
    m.text = std::move(text);
    m.data = std::move(data);
    m.source_origin = origin;
    m.timestamp = engine_.clock();
    out_.push_back(std::move(m));
  }

  void ask(MessageKind kind, std::string text, Json data, SessionState next) {
    emit(kind, std::move(text), std::move(data));
    ctx_.last_question = out_.back();
    ctx_.state = next;
  }

  void greet() {
    emit(MessageKind::notice, std::string(kBanner));
    show_menu(SessionState::Home);
  }

  void show_menu(SessionState next = SessionState::MainMenu) {
    Json options = Json::array();
    for (const auto& o : kMenu) options.push_back({{"key", o.key}, {"label", o.label}});
    ask(MessageKind::menu, render_main_menu(), {{"options", options}}, next);
  }

  void card(const std::string& leaf);
  void guidance(const std::string& leaf, const std::string& material);
  void augmentation(const std::string& leaf, const std::string& material);
  void causal(const std::string& leaf) { out_.push_back(causal_expansion(kb_, leaf, engine_.clock)); }

 private:
  void invalid(const std::string& reason) {
    emit(MessageKind::notice, reason);
    if (ctx_.last_question) {
      auto q = *ctx_.last_question;
      q.timestamp = engine_.clock();
      out_.push_back(std::move(q));
    }
  }

  void on_menu(const std::string& text);
  void classify_text(const std::string& text, bool from_menu);
  void proceed_with_term(std::string term);
  void select_leaf(std::string leaf);
  void on_material(const std::string& text);
  void ask_causal(const std::string& leaf);
  void start_image_flow();
  void on_hypothesis(const std::string& text);
  void ask_upload();
  void on_upload(const Input& input);
  void on_export(const std::string& text);
  std::optional<std::string> resolve_defect_name(const std::string& text, std::string& problem) const;

  SessionContext& ctx_;
  const Engine& engine_;
  const kb::KnowledgeBase& kb_;
  const ServiceConfig& config_;
  std::vector<Message>& out_;
};

std::optional<long> parse_number(std::string_view s) {
  if (s.empty() || s.size() > 9) return std::nullopt;
  long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

bool valid_material(const std::string& s) {
  static const std::regex re(R"(^[A-Za-z0-9][A-Za-z0-9 ._-]{0,39}$)");
  return std::regex_match(s, re);
}

std::string numbered(const std::vector<std::string>& options) {
  std::string s;
  for (std::size_t i = 0; i < options.size(); ++i) s += fmt::format("\n[{}] {}", i + 1, options[i]);
  return s;
}

Json choice_data(const std::vector<std::string>& options, Json extra = Json::object()) {
  Json arr = Json::array();
  for (std::size_t i = 0; i < options.size(); ++i) arr.push_back({{"number", i + 1}, {"label", options[i]}});
  extra["options"] = arr;
  return extra;
}

Json rule_json(const kb::MitigationRule& r) {
  Json j = {{"text", r.display_line()},
            {"parameter", kb::to_string(r.parameter)},
            {"directive", kb::to_string(r.directive)},
            {"units", r.units},
            {"provenance", r.provenance},
            {"source_origin", kb::to_string(SourceOrigin::ontology)}};
  if (r.bounds) j["bounds"] = {{"low", r.bounds->low}, {"high", r.bounds->high}};
  return j;
}

Json audit_json(const std::vector<evidence::AuditRecord>& records) {
  Json arr = Json::array();
  for (const auto& r : records) {
    arr.push_back({{"source_title", r.source_title},
                   {"source_url", r.source_url},
                   {"action", evidence::to_string(r.action)},
                   {"reason", r.reason},
                   {"timestamp", r.timestamp}});
  }
  return arr;
}

std::string audit_text(const std::vector<evidence::AuditRecord>& records) {
  std::string s = "Reference audit trail:";
  for (const auto& r : records) {
    s += fmt::format("\n- [{}] {}", evidence::to_string(r.action), r.source_title);
    if (!r.source_url.empty()) s += " <" + r.source_url + ">";
    s += " (" + r.reason + ")";
  }
  return s;
}

std::string channel_heading(Channel c) {
  switch (c) {
    case Channel::image: return "Image search";
    case Channel::web: return "Web search";
    case Channel::scholar: return "Scholar search";
  }
  return "Search";
}

std::string percent(double score) { return fmt::format("{:.0f}%", score * 100.0); }

void Flow::dispatch(const Input& input) {
  const auto text = text::normalize_whitespace(input.text);
  if (!input.image && text == "0") {
    greet();
    return;
  }
  if (input.image && ctx_.state != SessionState::ImageFlow_AwaitUpload) {
    invalid("No image was expected here. Choose option 6 to analyze an image.");
    return;
  }
  switch (ctx_.state) {
    case SessionState::Home:
    case SessionState::MainMenu:
      on_menu(text);
      return;
    case SessionState::ClassifyFlow_AwaitInput:
      if (text.empty()) return invalid("Please enter a defect name or description.");
      classify_text(text, false);
      return;
    case SessionState::ClassifyFlow_AwaitConfirm: {
      const auto yn = parse_yes_no(text);
      if (!yn) return invalid("Please answer yes or no.");
      if (*yn) return proceed_with_term(ctx_.pending_term);
      ask(MessageKind::question_text, "Please re-enter the defect name:", Json::object(),
          SessionState::ClassifyFlow_AwaitInput);
      return;
    }
    case SessionState::ClassifyFlow_AwaitSubtype:
    case SessionState::ExploreFlow_AwaitSelection: {
      const auto n = parse_number(text);
      const auto count = static_cast<long>(ctx_.pending_options.size());
      if (!n || *n < 1 || *n > count) {
        return invalid(fmt::format("Invalid choice '{}'. Enter a number between 1 and {}.", text, count));
      }
      select_leaf(ctx_.pending_options[static_cast<std::size_t>(*n - 1)]);
      return;
    }
    case SessionState::ExploreFlow_ShowingDefect:
      on_material(text);
      return;
    case SessionState::ExploreFlow_AwaitAugment: {
      const auto yn = parse_yes_no(text);
      if (!yn) return invalid("Please answer yes or no.");
      const auto leaf = ctx_.selected_defect.value_or("");
      if (*yn) augmentation(leaf, ctx_.material);
      ask_causal(leaf);
      return;
    }
    case SessionState::ExploreFlow_AwaitCausal: {
      const auto yn = parse_yes_no(text);
      if (!yn) return invalid("Please answer yes or no.");
      if (*yn) causal(ctx_.selected_defect.value_or(""));
      show_menu();
      return;
    }
    case SessionState::ImageFlow_AwaitHypothesisAnswer:
      on_hypothesis(text);
      return;
    case SessionState::ImageFlow_AwaitUpload:
      on_upload(input);
      return;
    case SessionState::Exporting:
      on_export(text);
      return;
  }
}

void Flow::on_menu(const std::string& text) {
  if (text.empty()) return invalid("Please choose an option (0-6).");
  if (text == "1") {
    std::string s = "Main defect types:";
    Json names = Json::array();
    for (const auto& root : kb_.tree().roots) {
      s += "\n- " + root.name;
      names.push_back(root.name);
    }
    emit(MessageKind::listing, s, {{"families", names}}, SourceOrigin::ontology);
    show_menu();
  } else if (text == "2") {
    const auto listing = kb::traverse_defect_categories(kb_);
    Json entries = Json::array();
    for (const auto& e : listing) entries.push_back({{"name", e.name}, {"depth", e.depth}, {"is_leaf", e.is_leaf}});
    auto rendered = kb::render_listing(listing);
    while (!rendered.empty() && rendered.back() == '\n') rendered.pop_back();
    emit(MessageKind::listing, "Defect categories:\n" + rendered, {{"entries", entries}}, SourceOrigin::ontology);
    show_menu();
  } else if (text == "3") {
    ask(MessageKind::question_text, "Enter a defect name or description:", Json::object(),
        SessionState::ClassifyFlow_AwaitInput);
  } else if (text == "4") {
    auto leaves = kb::flatten_vocabulary(kb_, kb::VocabularyScope::leaves_only);
    std::sort(leaves.begin(), leaves.end());
    ctx_.pending_options = leaves;
    ask(MessageKind::question_choice, "Select a defect to explore:" + numbered(leaves) +
                                          "\nEnter the number of your choice:",
        choice_data(leaves), SessionState::ExploreFlow_AwaitSelection);
  } else if (text == "5") {
    ask(MessageKind::question_text, "Enter the report file name (press Enter for defect_report.html):",
        Json::object(), SessionState::Exporting);
  } else if (text == "6") {
    start_image_flow();
  } else if (parse_number(text) || std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isdigit(c); })) {
    invalid("Invalid option '" + text + "'. Choose 0-6.");
  } else {
    classify_text(text, true);
  }
}

void Flow::classify_text(const std::string& text, bool from_menu) {
  const auto interp = query::interpret_query(text, kb_);
  if (!interp.resolved_term) {
    return invalid(from_menu ? "No defect matched '" + text + "'. Choose 0-6 or type a defect name."
                             : "No defect matched '" + text + "'. Try another name or enter 0 to return.");
  }
  const auto& term = *interp.resolved_term;
  if (interp.match_kind == query::MatchKind::exact_substring && text::iequals(text, term)) {
    return proceed_with_term(term);
  }
  ctx_.pending_term = term;
  Json alternates = Json::array();
  for (const auto& a : interp.alternates) alternates.push_back({{"term", a.term}, {"similarity", a.similarity}});
  ask(MessageKind::question_yes_no, "Interpreted as '" + term + "'. Proceed? (yes/no)",
      {{"term", term},
       {"input", text},
       {"match_kind", query::to_string(interp.match_kind)},
       {"similarity", interp.similarity},
       {"alternates", alternates}},
      SessionState::ClassifyFlow_AwaitConfirm);
}

void Flow::proceed_with_term(std::string term) {
  const auto result = query::disambiguate(term, kb_);
  if (const auto* leaf = std::get_if<query::LeafResolved>(&result)) return select_leaf(leaf->leaf);
  const auto& d = std::get<query::Disambiguation>(result);
  ctx_.pending_options = d.options;
  ask(MessageKind::question_choice, d.prompt_text + numbered(d.options) + "\nEnter the number of your choice:",
      choice_data(d.options, {{"parent", d.parent}}), SessionState::ClassifyFlow_AwaitSubtype);
}

void Flow::card(const std::string& leaf) {
  const auto path = kb::find_path(kb_, leaf).value_or(kb::CategoryPath{});
  const auto* profile = kb_.profile(leaf);
  std::string s = "Exploring: " + leaf + "\nCategory: " + kb::render_path(path);
  Json causes = Json::array();
  if (profile && !profile->causes.empty()) {
    s += "\nCauses: ";
    for (std::size_t i = 0; i < profile->causes.size(); ++i) {
      if (i) s += ", ";
      s += profile->causes[i];
      causes.push_back(profile->causes[i]);
    }
  } else {
    s += "\nCauses: not recorded in the knowledge base";
  }
  emit(MessageKind::defect_card, s, {{"defect", leaf}, {"path", path}, {"causes", causes}}, SourceOrigin::ontology);
}

void Flow::guidance(const std::string& leaf, const std::string& material) {
  const auto lookup = kb::mitigation_for(kb_, leaf, material);
  if (const auto* curated = std::get_if<kb::CuratedGuidance>(&lookup)) {
    std::string s = "Optimization Parameters:";
    Json lines = Json::array();
    for (const auto& r : curated->rules) {
      s += "\n- " + r.display_line();
      lines.push_back(rule_json(r));
    }
    emit(MessageKind::mitigation, s,
         {{"defect", leaf}, {"material", curated->material}, {"source_origin", "ontology"}, {"lines", lines}},
         SourceOrigin::ontology);
  } else if (!config_.external_retrieval_enabled) {
    emit(MessageKind::notice, "No curated mitigation is recorded for '" + leaf + "' with " + material +
                                  ". External retrieval is disabled.");
  } else {
    std::string problem;
    try {
      if (!engine_.search) throw Error("no search client is configured");
      if (!engine_.text_model) throw Error("no text model is configured");
      const auto bundle = evidence::fetch_evidence(leaf, {Channel::web, Channel::scholar}, *engine_.search,
                                                   engine_.clock);
      const auto resolution = evidence::resolve_conflicts(bundle.claims, kb_, leaf, material, engine_.clock);
      evidence::SummaryOptions options;
      options.model_id = config_.summary_model;
      options.discarded = resolution.discarded;
      options.mitigation_focus = true;
      const auto summary = evidence::consolidate_summary(bundle, leaf, *engine_.text_model, options, engine_.clock);
      auto audit = bundle.audit;
      audit.insert(audit.end(), resolution.audit.begin(), resolution.audit.end());
      audit.insert(audit.end(), summary.audit.begin(), summary.audit.end());
      if (summary.text) {
        const std::string header = "Optimization Parameters (External Retrieval; no curated guidance for '" +
                                   leaf + "' with " + material + "):";
        emit(MessageKind::mitigation, header + "\n" + *summary.text,
             {{"defect", leaf},
              {"material", material},
              {"source_origin", "external_retrieval"},
              {"lines", Json::array({{{"text", *summary.text}, {"source_origin", "external_retrieval"}}})}},
             SourceOrigin::external_retrieval);
      } else {
        problem = summary.error ? *summary.error : "no external sources were found";
      }
      if (!audit.empty()) emit(MessageKind::audit, audit_text(audit), {{"records", audit_json(audit)}});
    } catch (const std::exception& e) {
      problem = e.what();
    }
    if (!problem.empty()) {
      emit(MessageKind::notice, "Sorry, no curated mitigation is recorded for '" + leaf + "' with " + material +
                                    " and external retrieval failed: " + problem,
           {{"error", problem}});
    }
  }
  if (const auto* profile = kb_.profile(leaf); profile && !profile->notes.empty()) {
    emit(MessageKind::notice, "Note: " + profile->notes, {{"defect", leaf}}, SourceOrigin::ontology);
  }
}

void Flow::augmentation(const std::string& leaf, const std::string& material) {
  if (!engine_.search) {
    emit(MessageKind::notice, "Sorry, additional resources are unavailable: no search client is configured.",
         {{"error", "no search client"}});
    return;
  }
  evidence::EvidenceBundle bundle;
  try {
    bundle = evidence::fetch_evidence(leaf, {Channel::image, Channel::web, Channel::scholar}, *engine_.search,
                                      engine_.clock);
  } catch (const std::exception& e) {
    emit(MessageKind::notice, std::string("Sorry, additional resources are unavailable: ") + e.what(),
         {{"error", e.what()}});
    return;
  }
  const auto resolution = evidence::resolve_conflicts(bundle.claims, kb_, leaf, material, engine_.clock);
  auto audit = bundle.audit;
  audit.insert(audit.end(), resolution.audit.begin(), resolution.audit.end());

  std::string s = "--- Additional fetched resources ---";
  Json items = Json::array();
  std::vector<evidence::AuditRecord> listed;
  for (Channel c : {Channel::image, Channel::web, Channel::scholar}) {
    std::size_t n = 0;
    for (const auto& item : bundle.items) {
      if (item.channel != c) continue;
      if (n == 0) s += "\n" + channel_heading(c) + " for '" + leaf + "':";
      const auto snippet = evidence::redact_snippet(item, resolution.discarded);
      s += fmt::format("\n{}. {}", ++n, item.title);
      if (c == Channel::image) {
        s += "\n   Source: " + item.url;
      } else {
        s += "\n   <" + item.url + ">";
        if (!snippet.empty()) s += "\n   " + snippet;
      }
      items.push_back(
          {{"channel", to_string(c)}, {"title", item.title}, {"url", item.url}, {"snippet", snippet}});
      listed.push_back({item.title, item.url, evidence::AuditAction::used, "listed as fetched resource",
                        engine_.clock()});
    }
  }
  if (bundle.items.empty()) s += "\nNo external resources were found.";
  emit(MessageKind::evidence_list, s, {{"query", bundle.query}, {"items", items}}, SourceOrigin::external_retrieval);

  std::vector<evidence::AuditRecord> summarized;
  if (!bundle.items.empty()) {
    if (!engine_.text_model) {
      emit(MessageKind::notice, "Sorry, the consolidated summary is unavailable: no text model is configured.",
           {{"error", "no text model"}});
    } else {
      evidence::SummaryOptions options;
      options.model_id = config_.summary_model;
      options.discarded = resolution.discarded;
      if (const auto lookup = kb::mitigation_for(kb_, leaf, material);
          const auto* curated = std::get_if<kb::CuratedGuidance>(&lookup)) {
        for (const auto& r : curated->rules) {
          if (r.bounds) options.bounds.push_back(r);
        }
      }
      const auto summary = evidence::consolidate_summary(bundle, leaf, *engine_.text_model, options, engine_.clock);
      if (summary.text) {
        Json refs = Json::array();
        for (const auto& r : summary.references) {
          refs.push_back({{"channel", to_string(r.channel)}, {"title", r.title}, {"url", r.url}});
        }
        emit(MessageKind::summary, "--- Consolidated Summary (AI Synthesized) ---\n" + *summary.text,
             {{"references", refs}}, SourceOrigin::external_retrieval);
      } else if (summary.error) {
        emit(MessageKind::notice, "Sorry, the consolidated summary is unavailable: " + *summary.error,
             {{"error", *summary.error}});
      }
      summarized = summary.audit;
    }
  }
  // Sources that reached the summary are logged once, as summary inputs.
  const auto& used = summarized.empty() ? listed : summarized;
  audit.insert(audit.end(), used.begin(), used.end());
  if (!audit.empty()) emit(MessageKind::audit, audit_text(audit), {{"records", audit_json(audit)}});
}

void Flow::select_leaf(std::string leaf) {
  ctx_.selected_defect = leaf;
  ctx_.pending_options.clear();
  card(leaf);
  ask(MessageKind::question_text, "Material for mitigation guidance (press Enter for " + ctx_.material + "):",
      {{"default", ctx_.material}}, SessionState::ExploreFlow_ShowingDefect);
}

void Flow::on_material(const std::string& text) {
  if (!text.empty()) {
    if (!valid_material(text)) return invalid("Invalid material name '" + text + "'.");
    ctx_.material = text;
  }
  const auto leaf = ctx_.selected_defect.value_or("");
  guidance(leaf, ctx_.material);
  if (config_.external_retrieval_enabled) {
    ask(MessageKind::question_yes_no, "Fetch additional resources for '" + leaf + "'? (yes/no)",
        {{"defect", leaf}}, SessionState::ExploreFlow_AwaitAugment);
  } else {
    show_menu();
  }
}

void Flow::ask_causal(const std::string& leaf) {
  ask(MessageKind::question_yes_no,
      "Would you like to see causal relationships expanded for '" + leaf + "'? (yes/no)", {{"defect", leaf}},
      SessionState::ExploreFlow_AwaitCausal);
}

void Flow::start_image_flow() {
  if (!config_.image_flow_enabled) return invalid("Image analysis is disabled in this session.");
  ctx_.hypothesis.reset();
  if (ctx_.selected_defect) {
    ask(MessageKind::question_text,
        "Are you suspecting '" + *ctx_.selected_defect + "' defect? (yes/no, or type another defect name)",
        {{"suggested", *ctx_.selected_defect}}, SessionState::ImageFlow_AwaitHypothesisAnswer);
  } else {
    ask(MessageKind::question_text,
        "Are you suspecting a specific defect? Type its name, or 'no' for general identification:",
        Json::object(), SessionState::ImageFlow_AwaitHypothesisAnswer);
  }
}

std::optional<std::string> Flow::resolve_defect_name(const std::string& text, std::string& problem) const {
  if (auto leaf = kb_.canonical_leaf(text)) return leaf;
  const auto interp = query::interpret_query(text, kb_);
  if (!interp.resolved_term) {
    problem = "Unknown defect '" + text + "'.";
    return std::nullopt;
  }
  if (auto leaf = kb_.canonical_leaf(*interp.resolved_term)) return leaf;
  const auto result = query::disambiguate(*interp.resolved_term, kb_);
  const auto& d = std::get<query::Disambiguation>(result);
  std::string list;
  for (std::size_t i = 0; i < d.options.size(); ++i) list += (i ? ", " : "") + d.options[i];
  problem = "'" + d.parent + "' is a category; name one of: " + list + ".";
  return std::nullopt;
}

void Flow::on_hypothesis(const std::string& text) {
  if (text.empty()) return invalid("Please answer yes, no, or type a defect name.");
  if (const auto yn = parse_yes_no(text)) {
    if (!*yn) {
      ctx_.hypothesis.reset();
      return ask_upload();
    }
    if (!ctx_.selected_defect) {
      ask(MessageKind::question_text, "Which defect are you suspecting?", Json::object(),
          SessionState::ImageFlow_AwaitHypothesisAnswer);
      return;
    }
    ctx_.hypothesis = ctx_.selected_defect;
    return ask_upload();
  }
  std::string problem;
  auto leaf = resolve_defect_name(text, problem);
  if (!leaf) return invalid(problem);
  ctx_.hypothesis = *leaf;
  ask_upload();
}

void Flow::ask_upload() {
  emit(MessageKind::notice, ctx_.hypothesis ? "Hypothesis: '" + *ctx_.hypothesis + "'."
                                            : std::string("No hypothesis: general defect identification."),
       {{"hypothesis", ctx_.hypothesis ? Json(*ctx_.hypothesis) : Json(nullptr)}});
  ask(MessageKind::question_text,
      "Enter the material (current: " + ctx_.material + ") or upload the micrograph.",
      {{"awaiting", "image"}, {"material", ctx_.material}}, SessionState::ImageFlow_AwaitUpload);
}

void Flow::on_upload(const Input& input) {
  if (!input.image) {
    const auto text = text::normalize_whitespace(input.text);
    if (text.empty()) return invalid("Please upload the micrograph, or enter a material name.");
    if (!valid_material(text)) return invalid("Invalid material name '" + text + "'.");
    ctx_.material = text;
    ask(MessageKind::question_text, "Material set to " + text + ". Upload the micrograph.",
        {{"awaiting", "image"}, {"material", text}}, SessionState::ImageFlow_AwaitUpload);
    return;
  }
  const auto& upload = *input.image;
  if (upload.bytes.empty()) return invalid("The uploaded image is empty.");
  auto hypothesis = ctx_.hypothesis;
  if (upload.hypothesis && !text::normalize_whitespace(*upload.hypothesis).empty()) {
    std::string problem;
    auto leaf = resolve_defect_name(text::normalize_whitespace(*upload.hypothesis), problem);
    if (!leaf) return invalid(problem);
    hypothesis = leaf;
  }
  if (upload.material && !text::normalize_whitespace(*upload.material).empty()) {
    const auto m = text::normalize_whitespace(*upload.material);
    if (!valid_material(m)) return invalid("Invalid material name '" + m + "'.");
    ctx_.material = m;
  }
  if (!engine_.vision) {
    emit(MessageKind::notice,
         "Sorry, image analysis is unavailable: no multimodal model is configured (set " + config_.model_env_var +
             " or supply a recorded transcript).",
         {{"error", "no multimodal adapter"}});
    show_menu();
    return;
  }
  if (ctx_.selector.variants.empty()) ctx_.selector.variants = {config_.fast_model, config_.pro_model};

  vision::AlignmentReport report;
  try {
    vision::AssessmentInput in{upload.bytes, upload.filename, hypothesis, ctx_.material};
    report = vision::assess_image(in, *engine_.vision, GenerationConfig::locked(), ctx_.selector,
                                  engine_.descriptors, kb_);
  } catch (const vision::UnparseableResponseError& e) {
    emit(MessageKind::notice, std::string("Sorry, the model response could not be interpreted: ") + e.what(),
         {{"error", e.what()}, {"raw_response", e.raw()}});
    show_menu();
    return;
  } catch (const std::exception& e) {
    emit(MessageKind::notice, std::string("Sorry, image analysis failed: ") + e.what(), {{"error", e.what()}});
    show_menu();
    return;
  }

  std::string s = "🔍 AI Analysis for: " + upload.filename + "\n--- Defect Analysis ---";
  for (std::size_t i = 0; i < report.hypotheses.size(); ++i) {
    const auto& h = report.hypotheses[i];
    s += fmt::format("\n{}. {}", i + 1, h.defect);
    if (!text::iequals(h.raw_name, h.defect)) s += " [" + h.raw_name + "]";
    s += fmt::format(": {} (semantic alignment {:.2f})", percent(h.score), h.score);
    if (!h.matched) s += " (not in knowledge base)";
    if (!h.evidence.empty()) s += "\n   Visual Evidence: " + h.evidence;
  }
  if (!report.annotations.empty()) {
    s += "\nAnnotations:";
    for (const auto& a : report.annotations) s += "\n- " + a;
  }
  emit(MessageKind::alignment_report, s, {{"report", vision::to_json(report)}});
  if (report.hypotheses.front().matched) ctx_.selected_defect = report.hypotheses.front().defect;

  if (report.mitigation) {
    const auto& m = *report.mitigation;
    if (m.source_origin == SourceOrigin::ontology) {
      std::string t = "--- Correction Strategy ---\nCurated " + m.material + " guidance for '" + m.defect + "':";
      Json lines = Json::array();
      for (const auto& r : m.rules) {
        t += "\n- " + r.display_line();
        lines.push_back(rule_json(r));
      }
      emit(MessageKind::mitigation, t,
           {{"defect", m.defect}, {"material", m.material}, {"source_origin", "ontology"}, {"lines", lines}},
           SourceOrigin::ontology);
    } else {
      std::string t = "--- Correction Strategy ---\nNo curated " + m.material + " guidance exists for '" + m.defect +
                      "'; the following model guidance is not verified against the knowledge base.\n" +
                      m.fallback_text;
      Json lines = Json::array();
      for (const auto& line : text::split_lines(m.fallback_text)) {
        if (!text::normalize_whitespace(line).empty()) {
          lines.push_back({{"text", line}, {"source_origin", "external_retrieval"}});
        }
      }
      emit(MessageKind::mitigation, t,
           {{"defect", m.defect},
            {"material", m.material},
            {"source_origin", "external_retrieval"},
            {"lines", lines}},
           SourceOrigin::external_retrieval);
    }
  }
  show_menu();
}

void Flow::on_export(const std::string& text) {
  std::string name = text.empty() ? "defect_report.html" : text;
  if (name.size() < 5 || text::to_lower(name.substr(name.size() - 5)) != ".html") name += ".html";
  emit(MessageKind::export_request, "Exporting session report to " + name + " (HTML; PNG export is not supported).",
       {{"filename", name}, {"format", "html"}});
  show_menu();
}

}  // namespace

std::string_view to_string(SessionState s) {
  switch (s) {
    case SessionState::Home: return "Home";
    case SessionState::MainMenu: return "MainMenu";
    case SessionState::ClassifyFlow_AwaitInput: return "ClassifyFlow_AwaitInput";
    case SessionState::ClassifyFlow_AwaitConfirm: return "ClassifyFlow_AwaitConfirm";
    case SessionState::ClassifyFlow_AwaitSubtype: return "ClassifyFlow_AwaitSubtype";
    case SessionState::ExploreFlow_AwaitSelection: return "ExploreFlow_AwaitSelection";
    case SessionState::ExploreFlow_ShowingDefect: return "ExploreFlow_ShowingDefect";
    case SessionState::ExploreFlow_AwaitAugment: return "ExploreFlow_AwaitAugment";
    case SessionState::ExploreFlow_AwaitCausal: return "ExploreFlow_AwaitCausal";
    case SessionState::ImageFlow_AwaitHypothesisAnswer: return "ImageFlow_AwaitHypothesisAnswer";
    case SessionState::ImageFlow_AwaitUpload: return "ImageFlow_AwaitUpload";
    case SessionState::Exporting: return "Exporting";
  }
  return "Home";
}

SessionContext initial_context(const ServiceConfig& config) {
  SessionContext ctx;
  ctx.material = config.default_material;
  ctx.selector.variants = {config.fast_model, config.pro_model};
  return ctx;
}

std::string render_main_menu() {
  std::string s;
  for (const auto& o : kMenu) {
    if (!s.empty()) s += '\n';
    s += fmt::format("[{}] → {}", o.key, o.label);
  }
  return s;
}

std::vector<Message> greeting(SessionContext& ctx, const Engine& engine) {
  std::vector<Message> out;
  ServiceConfig unused;
  Flow(ctx, engine, unused, out).greet();
  return out;
}

std::vector<Message> handle_input(SessionContext& ctx, const Input& input, const Engine& engine,
                                  const ServiceConfig& config) {
  std::vector<Message> out;
  const auto saved = ctx;
  try {
    Flow(ctx, engine, config, out).dispatch(input);
  } catch (const std::exception& e) {
    ctx = saved;
    out.clear();
    Message m;
    m.kind = MessageKind::notice;
    m.text = std::string("Sorry, that request could not be completed: ") + e.what();
    m.data = {{"error", e.what()}};
    m.timestamp = engine.clock();
    out.push_back(std::move(m));
    if (ctx.last_question) {
      auto q = *ctx.last_question;
      q.timestamp = engine.clock();
      out.push_back(std::move(q));
    }
  }
  return out;
}

std::vector<Message> explore_defect(std::string_view defect, std::string_view material, const Engine& engine,
                                    const ServiceConfig& config, ExploreOptions options) {
  const auto leaf = engine.kb->canonical_leaf(defect);
  if (!leaf) throw kb::UnknownDefectError(std::string(defect));
  std::vector<Message> out;
  auto ctx = initial_context(config);
  ctx.material = std::string(material);
  Flow flow(ctx, engine, config, out);
  flow.card(*leaf);
  flow.guidance(*leaf, ctx.material);
  if (config.external_retrieval_enabled) {
    if (options.augment) flow.augmentation(*leaf, ctx.material);
    if (options.causal) flow.causal(*leaf);
  }
  return out;
}

Message causal_expansion(const kb::KnowledgeBase& kb, std::string_view defect, const Clock& clock) {
  const auto causes = kb::causes_of(kb, defect);
  const auto effects = kb::consequences_of(kb, defect);
  const auto leaf = kb.canonical_leaf(defect).value_or(std::string(defect));
  auto relation_json = [](const kb::CausalRelation& r) {
    return Json{{"source", r.source},
                {"target", r.target},
                {"kind", kb::to_string(r.kind)},
                {"provenance", r.provenance}};
  };
  std::string s;
  Json jc = Json::array();
  Json je = Json::array();
  if (!causes.empty()) {
    s += "Factors leading to " + leaf + ":";
    for (const auto& r : causes) {
      s += "\n- " + r.source + " → " + r.target;
      jc.push_back(relation_json(r));
    }
  }
  if (!effects.empty()) {
    if (!s.empty()) s += '\n';
    s += leaf + " can lead to:";
    for (const auto& r : effects) {
      s += "\n- " + r.source + " → " + r.target;
      je.push_back(relation_json(r));
    }
  }
  if (s.empty()) s = "No causal relationships are recorded for '" + leaf + "'.";
  Message m;
  m.kind = MessageKind::causal;
  m.text = std::move(s);
  m.data = {{"defect", leaf}, {"causes", jc}, {"consequences", je}};
  m.source_origin = SourceOrigin::ontology;
  m.timestamp = clock();
  return m;
}

std::optional<bool> parse_yes_no(std::string_view s) {
  const auto t = text::to_lower(text::normalize_whitespace(s));
  if (t == "y" || t == "yes") return true;
  if (t == "n" || t == "no") return false;
  return std::nullopt;
}

Session::Session(std::shared_ptr<const Engine> engine, ServiceConfig config)
    : engine_(std::move(engine)), config_(std::move(config)), ctx_(initial_context(config_)) {
  if (!engine_ || !engine_->kb) throw Error("session requires a loaded knowledge base");
}

const std::vector<Message>& Session::start() {
  if (greeting_.empty()) {
    greeting_ = greeting(ctx_, *engine_);
    record(greeting_);
  }
  return greeting_;
}

std::vector<Message> Session::submit(const Input& input) {
  start();
  Message user;
  user.role = Role::user;
  user.kind = MessageKind::input;
  if (input.image) {
    const auto& img = *input.image;
    user.text = "[image] " + img.filename;
    user.attachments.push_back(img.filename + " (sha256 " + sha256_hex(img.bytes) + ")");
    user.data = {{"hypothesis", img.hypothesis ? Json(*img.hypothesis) : Json(nullptr)},
                 {"material", img.material ? Json(*img.material) : Json(nullptr)}};
  } else {
    user.text = input.text;
  }
  user.timestamp = engine_->clock();
  transcript_.append(std::move(user));
  auto out = handle_input(ctx_, input, *engine_, config_);
  record(out);
  return out;
}

void Session::record(const std::vector<Message>& out) {
  for (const auto& m : out) transcript_.append(m);
}

}  // namespace defect_sage::session

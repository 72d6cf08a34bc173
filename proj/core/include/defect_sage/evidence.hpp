#pragma once

#include "defect_sage/adapters.hpp"
#include "defect_sage/clock.hpp"
#include "defect_sage/knowledge_base.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace defect_sage::evidence {

struct ParameterClaim {
  kb::Parameter parameter = kb::Parameter::laser_power;
  double value = 0.0;
  std::string units;
  std::string source_title;
  std::string source_url;
  std::string matched_text;  // span of the snippet the claim was read from

  bool operator==(const ParameterClaim&) const = default;
};

enum class AuditAction { used, discarded, unverified };

std::string_view to_string(AuditAction a);

struct AuditRecord {
  std::string source_title;
  std::string source_url;
  AuditAction action = AuditAction::used;
  std::string reason;
  std::string timestamp;

  bool operator==(const AuditRecord&) const = default;
};

struct EvidenceBundle {
  std::string query;
  std::vector<EvidenceItem> items;
  std::vector<ParameterClaim> claims;
  std::vector<AuditRecord> audit;
};

/// "<defect> laser powder bed fusion"
std::string base_query(std::string_view defect);

/// Query actually sent on a channel; web queries carry a scholarly-site
/// restriction.
std::string channel_query(Channel channel, std::string_view defect);

/// Channels are queried in image, web, scholar order regardless of how the
/// set was given. A failing channel leaves an `unverified` audit record and
/// does not abort the others. Throws MissingCredentialsError when the client
/// is not configured and at least one channel was requested.
EvidenceBundle fetch_evidence(std::string_view defect, std::vector<Channel> channels, SearchClient& client,
                              const Clock& clock = system_clock());

/// Number + recognized unit pairs (W, mm/s, μm, %, J/mm³) found in the snippet.
std::vector<ParameterClaim> extract_parameter_claims(const EvidenceItem& item);

/// Snippet with every discarded claim from the same source masked out.
std::string redact_snippet(const EvidenceItem& item, const std::vector<ParameterClaim>& discarded);

struct ConflictResolution {
  std::vector<ParameterClaim> kept;        // inside every curated bound for the parameter
  std::vector<ParameterClaim> unverified;  // no curated bound to check against
  std::vector<ParameterClaim> discarded;   // violates a curated bound
  std::vector<AuditRecord> audit;
};

/// Ontology-first check of retrieved claims against the curated bounds for
/// (defect, material). Pure apart from the timestamps it stamps.
ConflictResolution resolve_conflicts(const std::vector<ParameterClaim>& claims, const kb::KnowledgeBase& kb,
                                     std::string_view defect, std::string_view material,
                                     const Clock& clock = system_clock());

struct Reference {
  Channel channel = Channel::web;
  std::string title;
  std::string url;

  bool operator==(const Reference&) const = default;
};

struct SummaryOptions {
  std::string model_id;
  GenerationConfig config;
  /// Curated rules the model must respect; rendered into the system prompt.
  std::vector<kb::MitigationRule> bounds;
  /// Claims to strip from snippets before they reach the model.
  std::vector<ParameterClaim> discarded;
  /// Ask for parameter guidance instead of a literature overview.
  bool mitigation_focus = false;
};

struct ConsolidatedSummary {
  std::optional<std::string> text;
  std::vector<Reference> references;
  std::vector<AuditRecord> audit;
  std::optional<std::string> error;
};

std::string summary_system_prompt(const SummaryOptions& options);
std::string summary_prompt(const EvidenceBundle& bundle, std::string_view defect, const SummaryOptions& options);

/// Empty bundle -> empty summary without calling the model. Model failure ->
/// no text, error set, no references.
ConsolidatedSummary consolidate_summary(const EvidenceBundle& bundle, std::string_view defect, TextModel& model,
                                        const SummaryOptions& options, const Clock& clock = system_clock());

}  // namespace defect_sage::evidence

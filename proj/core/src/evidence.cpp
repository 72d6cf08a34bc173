#include "defect_sage/evidence.hpp"

#include "defect_sage/text.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <chrono>
#include <future>
#include <regex>
#include <utility>

#include <fmt/chrono.h>
#include <fmt/format.h>

namespace defect_sage {

Clock system_clock() {
  return [] {
    const auto now = std::chrono::system_clock::now();
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()) % 1000;
    return fmt::format("{:%Y-%m-%dT%H:%M:%S}.{:03d}Z", fmt::gmtime(std::chrono::system_clock::to_time_t(now)),
                       static_cast<int>(ms.count()));
  };
}

Clock fixed_clock(std::string stamp) {
  return [stamp = std::move(stamp)] { return stamp; };
}

}  // namespace defect_sage

namespace defect_sage::evidence {

namespace {

// Scholarly restriction appended to web queries.
constexpr std::string_view kScholarlySites =
    "(site:sciencedirect.com OR site:springer.com OR site:mdpi.com OR site:tandfonline.com OR site:iop.org)";

struct UnitMapping {
  std::string_view unit;
  kb::Parameter parameter;
};

constexpr std::array<UnitMapping, 5> kUnits{{
    {"J/mm³", kb::Parameter::volumetric_energy_density},
    {"mm/s", kb::Parameter::scan_speed},
    {"μm", kb::Parameter::layer_thickness},
    {"W", kb::Parameter::laser_power},
    {"%", kb::Parameter::oxygen_level},
}};

const std::regex& claim_pattern() {
  static const std::regex re(R"((\d+(?:\.\d+)?)[ \t]*(J/mm³|mm/s|μm|W(?![A-Za-z0-9])|%))");
  return re;
}

std::string bound_text(const kb::Bounds& b, const std::string& units) {
  return text::format_number(b.low) + "–" + text::format_number(b.high) + " " + units;
}

AuditRecord audit_for(const ParameterClaim& claim, AuditAction action, std::string reason, const Clock& clock) {
  return {claim.source_title, claim.source_url, action, std::move(reason), clock()};
}

}  // namespace

std::string redact_snippet(const EvidenceItem& item, const std::vector<ParameterClaim>& discarded) {
  std::string snippet = item.snippet;
  for (const auto& claim : discarded) {
    if (claim.source_url != item.url || claim.matched_text.empty()) continue;
    for (auto pos = snippet.find(claim.matched_text); pos != std::string::npos;
         pos = snippet.find(claim.matched_text, pos)) {
      static constexpr std::string_view kMask = "[value outside curated bounds removed]";
      snippet.replace(pos, claim.matched_text.size(), kMask);
      pos += kMask.size();
    }
  }
  return snippet;
}

std::string_view to_string(AuditAction a) {
  switch (a) {
    case AuditAction::used: return "used";
    case AuditAction::discarded: return "discarded";
    case AuditAction::unverified: return "unverified";
  }
  return "unverified";
}

std::string base_query(std::string_view defect) { return std::string(defect) + " laser powder bed fusion"; }

std::string channel_query(Channel channel, std::string_view defect) {
  auto q = base_query(defect);
  if (channel == Channel::web) {
    q += ' ';
    q += kScholarlySites;
  }
  return q;
}

EvidenceBundle fetch_evidence(std::string_view defect, std::vector<Channel> channels, SearchClient& client,
                              const Clock& clock) {
  EvidenceBundle bundle;
  bundle.query = base_query(defect);

  std::vector<Channel> ordered;
  for (Channel c : {Channel::image, Channel::web, Channel::scholar}) {
    if (std::find(channels.begin(), channels.end(), c) != channels.end()) ordered.push_back(c);
  }
  if (ordered.empty()) return bundle;
  if (!client.configured()) throw MissingCredentialsError("SEARCH_API_KEY");

  struct Outcome {
    std::vector<EvidenceItem> items;
    std::optional<std::string> error;
  };
  auto run = [&client, defect](Channel c) {
    Outcome o;
    try {
      o.items = client.search({c, channel_query(c, defect)});
    } catch (const std::exception& e) {
      o.error = e.what();
    }
    return o;
  };

  std::vector<Outcome> outcomes;
  if (client.concurrent_safe() && ordered.size() > 1) {
    std::vector<std::future<Outcome>> futures;
    for (Channel c : ordered) futures.push_back(std::async(std::launch::async, run, c));
    for (auto& f : futures) outcomes.push_back(f.get());
  } else {
    for (Channel c : ordered) outcomes.push_back(run(c));
  }

  for (std::size_t i = 0; i < ordered.size(); ++i) {
    auto& o = outcomes[i];
    if (o.error) {
      bundle.audit.push_back({std::string(to_string(ordered[i])) + " search for '" + std::string(defect) + "'",
                              "", AuditAction::unverified, "fetch failure: " + *o.error, clock()});
      continue;
    }
    for (auto& item : o.items) {
      if (item.title.empty() || item.url.empty()) continue;
      item.channel = ordered[i];
      auto claims = extract_parameter_claims(item);
      bundle.claims.insert(bundle.claims.end(), claims.begin(), claims.end());
      bundle.items.push_back(std::move(item));
    }
  }
  return bundle;
}

std::vector<ParameterClaim> extract_parameter_claims(const EvidenceItem& item) {
  std::vector<ParameterClaim> claims;
  const std::string& s = item.snippet;
  for (auto it = std::sregex_iterator(s.begin(), s.end(), claim_pattern()); it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    const auto start = static_cast<std::size_t>(m.position(0));
    if (start > 0) {
      auto prev = static_cast<unsigned char>(s[start - 1]);
      if (std::isalnum(prev) || prev == '.') continue;  // part of an identifier such as IN625
    }
    const std::string unit = m[2].str();
    auto mapping = std::find_if(kUnits.begin(), kUnits.end(), [&](const UnitMapping& u) { return u.unit == unit; });
    if (mapping == kUnits.end()) continue;
    ParameterClaim c;
    c.parameter = mapping->parameter;
    c.value = std::stod(m[1].str());
    c.units = unit;
    c.source_title = item.title;
    c.source_url = item.url;
    c.matched_text = m[0].str();
    claims.push_back(std::move(c));
  }
  return claims;
}

ConflictResolution resolve_conflicts(const std::vector<ParameterClaim>& claims, const kb::KnowledgeBase& kb,
                                     std::string_view defect, std::string_view material, const Clock& clock) {
  ConflictResolution out;
  std::vector<kb::MitigationRule> rules;
  const auto lookup = kb::mitigation_for(kb, defect, material);
  if (const auto* curated = std::get_if<kb::CuratedGuidance>(&lookup)) {
    rules = curated->rules;
  }
  for (const auto& claim : claims) {
    std::vector<const kb::MitigationRule*> bounded;
    for (const auto& r : rules) {
      if (r.parameter == claim.parameter && r.bounds) bounded.push_back(&r);
    }
    if (bounded.empty()) {
      out.unverified.push_back(claim);
      out.audit.push_back(audit_for(claim, AuditAction::unverified,
                                    "no curated bound for " + std::string(kb::to_string(claim.parameter)), clock));
      continue;
    }
    const kb::MitigationRule* violated = nullptr;
    const kb::MitigationRule* checked = nullptr;
    const kb::MitigationRule* mismatched = nullptr;
    for (const auto* r : bounded) {
      if (r->units != claim.units) {
        mismatched = r;
        continue;
      }
      checked = r;
      if (!r->bounds->contains(claim.value)) {
        violated = r;
        break;
      }
    }
    if (violated) {
      out.discarded.push_back(claim);
      out.audit.push_back(audit_for(claim, AuditAction::discarded,
                                    "violates " + bound_text(*violated->bounds, violated->units) + " (" +
                                        violated->material + " " + std::string(kb::to_string(violated->parameter)) +
                                        ", " + violated->provenance + ")",
                                    clock));
    } else if (!checked) {
      out.unverified.push_back(claim);
      out.audit.push_back(audit_for(
          claim, AuditAction::unverified,
          "units " + claim.units + " differ from curated units " + mismatched->units + "; not converted", clock));
    } else {
      out.kept.push_back(claim);
      out.audit.push_back(audit_for(
          claim, AuditAction::used, "within " + bound_text(*checked->bounds, checked->units), clock));
    }
  }
  return out;
}

std::string summary_system_prompt(const SummaryOptions& options) {
  std::string p =
      "You are an LPBF defect analysis assistant. Use only the supplied literature snippets. "
      "The curated knowledge base is authoritative: never recommend a process parameter outside its bounds, "
      "and discard any retrieved parameter value that violates them.";
  if (!options.bounds.empty()) {
    p += "\nCurated bounds:";
    for (const auto& r : options.bounds) {
      p += "\n- " + r.display_line();
      if (r.bounds) p += " [" + bound_text(*r.bounds, r.units) + "]";
    }
  }
  return p;
}

std::string summary_prompt(const EvidenceBundle& bundle, std::string_view defect, const SummaryOptions& options) {
  std::string p = options.mitigation_focus
                      ? "Summarize process-parameter guidance for mitigating '" + std::string(defect) +
                            "' reported in these sources."
                      : "Write a consolidated summary of current research on '" + std::string(defect) +
                            "' in laser powder bed fusion from these sources.";
  std::size_t n = 0;
  for (const auto& item : bundle.items) {
    p += "\n\n[" + std::to_string(++n) + "] (" + std::string(to_string(item.channel)) + ") " + item.title;
    const auto snippet = redact_snippet(item, options.discarded);
    if (!snippet.empty()) p += "\n" + snippet;
  }
  return p;
}

ConsolidatedSummary consolidate_summary(const EvidenceBundle& bundle, std::string_view defect, TextModel& model,
                                        const SummaryOptions& options, const Clock& clock) {
  ConsolidatedSummary out;
  if (bundle.items.empty()) return out;
  TextRequest request{summary_system_prompt(options), summary_prompt(bundle, defect, options), options.config,
                      options.model_id};
  try {
    out.text = model.complete(request);
  } catch (const std::exception& e) {
    out.error = e.what();
    return out;
  }
  for (const auto& item : bundle.items) {
    out.references.push_back({item.channel, item.title, item.url});
    out.audit.push_back({item.title, item.url, AuditAction::used, "supplied to consolidated summary", clock()});
  }
  return out;
}

}  // namespace defect_sage::evidence

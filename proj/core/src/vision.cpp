#include "defect_sage/vision.hpp"

#include "defect_sage/query.hpp"
#include "defect_sage/text.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

namespace defect_sage::vision {

namespace {

using Json = nlohmann::json;

std::string trim(std::string_view s) { return text::normalize_whitespace(s); }

// Drops list markers ("1.", "2)", "-", "*", "•") and bold markup.
std::string strip_markup(std::string_view line) {
  std::string s(line);
  for (auto pos = s.find("**"); pos != std::string::npos; pos = s.find("**", pos)) s.erase(pos, 2);
  static const std::regex lead(R"(^(\s*(\d+[.)]|[-*]|•)\s*)+)");
  s = std::regex_replace(s, lead, "", std::regex_constants::format_first_only);
  return trim(s);
}

std::string strip_parentheticals(std::string_view s, std::string* qualifier) {
  std::string out;
  int depth = 0;
  std::string inner;
  for (char c : s) {
    if (c == '(') {
      ++depth;
      continue;
    }
    if (c == ')' && depth > 0) {
      --depth;
      continue;
    }
    (depth > 0 ? inner : out) += c;
  }
  if (qualifier) *qualifier = trim(inner);
  return trim(out);
}

bool starts_with_label(std::string_view name, std::string_view label) {
  return text::iequals(trim(name), label);
}

struct ScoreToken {
  double value = 0.0;
  bool ok = false;
};

ScoreToken read_score(std::string_view rest) {
  static const std::regex re(R"(^\s*(\d+(?:\.\d+)?)\s*(%)?)");
  std::match_results<std::string_view::const_iterator> m;
  if (!std::regex_search(rest.begin(), rest.end(), m, re)) return {};
  const double v = std::stod(m[1].str());
  if (m[2].matched) {
    if (v > 100.0) return {};
    return {v / 100.0, true};
  }
  if (v > 1.0) return {};
  return {v, true};
}

}  // namespace

std::string_view to_string(Dimension d) {
  switch (d) {
    case Dimension::morphology: return "morphology";
    case Dimension::edge_profile: return "edge_profile";
    case Dimension::interior_content: return "interior_content";
    case Dimension::layer_orientation: return "layer_orientation";
  }
  return "morphology";
}

std::string_view display_name(Dimension d) {
  switch (d) {
    case Dimension::morphology: return "Morphology";
    case Dimension::edge_profile: return "Edge profile";
    case Dimension::interior_content: return "Interior content";
    case Dimension::layer_orientation: return "Layer orientation";
  }
  return "Morphology";
}

std::optional<Dimension> parse_dimension(std::string_view s) {
  for (Dimension d : kDimensions) {
    if (to_string(d) == s) return d;
  }
  return std::nullopt;
}

const std::string* DefectDescriptor::feature(Dimension d) const {
  for (const auto& [dim, text] : dimensions) {
    if (dim == d) return &text;
  }
  return nullptr;
}

std::vector<DefectDescriptor> load_descriptors(std::istream& in, const kb::KnowledgeBase& kb) {
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw DescriptorError(std::string("malformed descriptor table: ") + e.what());
  }
  if (!doc.is_object() || doc.value("schema_version", 0) != 1 || !doc.contains("descriptors") ||
      !doc["descriptors"].is_array()) {
    throw DescriptorError("descriptor table needs schema_version 1 and a 'descriptors' array");
  }
  std::vector<DefectDescriptor> out;
  std::set<std::string> seen;
  for (const auto& entry : doc["descriptors"]) {
    DefectDescriptor d;
    const auto name = entry.value("defect", std::string{});
    auto leaf = kb.canonical_leaf(name);
    if (!leaf) throw DescriptorError("descriptor for unknown defect '" + name + "'");
    if (!seen.insert(*leaf).second) throw DescriptorError("duplicate descriptor for '" + *leaf + "'");
    d.defect = *leaf;
    d.provenance = entry.value("provenance", std::string{});
    const auto& dims = entry.value("dimensions", Json::object());
    for (const auto& [key, _] : dims.items()) {
      if (!parse_dimension(key)) throw DescriptorError(d.defect + ": unknown dimension '" + key + "'");
    }
    for (Dimension dim : kDimensions) {
      const auto key = std::string(to_string(dim));
      if (!dims.contains(key) || !dims[key].is_string() || dims[key].get<std::string>().empty()) {
        throw DescriptorError(d.defect + ": missing dimension '" + key + "'");
      }
      d.dimensions.emplace_back(dim, dims[key].get<std::string>());
    }
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<DefectDescriptor> load_descriptors_file(const std::filesystem::path& path, const kb::KnowledgeBase& kb) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DescriptorError("cannot open descriptor table " + path.string());
  return load_descriptors(in, kb);
}

double offline_alignment_score(const std::vector<FeatureObservation>& observations,
                               const DefectDescriptor& descriptor) {
  if (descriptor.dimensions.empty()) return 0.0;
  std::set<Dimension> high;
  for (const auto& o : observations) {
    if (o.alignment == Alignment::high && descriptor.feature(o.dimension)) high.insert(o.dimension);
  }
  return static_cast<double>(high.size()) / static_cast<double>(descriptor.dimensions.size());
}

std::string select_model(ModelSelector& selector) {
  if (selector.variants.empty()) throw Error("model selector has no variants");
  auto id = selector.variants[selector.attempt_index % selector.variants.size()];
  ++selector.attempt_index;
  return id;
}

AllVariantsFailedError::AllVariantsFailedError(std::vector<std::string> failures)
    : Error([&] {
        std::string msg = "all model variants failed";
        for (const auto& f : failures) msg += "; " + f;
        return msg;
      }()),
      failures_(std::move(failures)) {}

std::string build_assessment_prompt(std::string_view image_ref, const std::optional<std::string>& hypothesis,
                                    const std::vector<DefectDescriptor>& descriptors, const kb::KnowledgeBase& kb,
                                    const std::optional<std::string>& material) {
  auto describe = [](const DefectDescriptor& d) {
    std::string s = "Defect: " + d.defect + "\n";
    for (const auto& [dim, feature] : d.dimensions) {
      s += "- " + std::string(display_name(dim)) + ": " + feature + "\n";
    }
    return s;
  };
  auto find_descriptor = [&](std::string_view name) -> const DefectDescriptor* {
    for (const auto& d : descriptors) {
      if (text::iequals(text::normalize_whitespace(d.defect), text::normalize_whitespace(name))) return &d;
    }
    return nullptr;
  };

  std::string p = "You are assessing an LPBF metallographic micrograph (" + std::string(image_ref) + ").\n";
  if (hypothesis) {
    const auto* d = find_descriptor(*hypothesis);
    auto leaf = kb.canonical_leaf(*hypothesis);
    if (!d && !leaf) throw UnknownHypothesisError(*hypothesis);
    const std::string name = d ? d->defect : *leaf;
    p += "The user suspects '" + name + "'. Evaluate how well the visible features support this defect";
    p += d ? " against its reference descriptor, dimension by dimension:\n" + describe(*d)
           : ".\n";
    p += "Also report any competing defect that fits the evidence better.\n";
  } else {
    p += "Identify the defect types present. Compare the visible features with these reference descriptors:\n";
    for (const auto& d : descriptors) p += describe(d);
  }
  p += "For each candidate defect write one line '<n>. **<defect name>**: <score>' where score is a semantic "
       "alignment value in [0,1], followed by '- **Visual Evidence**: <observed features>' and "
       "'- **Reasoning**: <why>'.\n";
  p += "Then write '--- Correction Strategy ---' with process-parameter adjustments.\n";
  p += "Parameter advice must stay inside the curated knowledge-base bounds; never recommend values outside them.";
  if (material) {
    std::vector<const kb::MitigationRule*> bounded;
    for (const auto& r : kb.mitigations()) {
      if (r.bounds && text::iequals(r.material, *material)) bounded.push_back(&r);
    }
    if (!bounded.empty()) {
      p += "\nCurated bounds for " + *material + ":";
      for (const auto* r : bounded) {
        p += "\n- " + r->defect + ", " + std::string(kb::display_name(r->parameter)) + ": " +
             text::format_number(r->bounds->low) + "–" + text::format_number(r->bounds->high) + " " + r->units;
      }
    }
  }
  return p;
}

ParsedResponse parse_alignment_response(std::string_view raw, const kb::KnowledgeBase& kb) {
  ParsedResponse out;
  const auto leaves = kb::flatten_vocabulary(kb, kb::VocabularyScope::leaves_only);
  static const std::regex highlight(R"(highlighted in ([A-Za-z]+))", std::regex::icase);

  std::istringstream in{std::string(raw)};
  std::string line;
  Hypothesis* current = nullptr;
  std::optional<std::string> correction;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (correction) {
      *correction += line;
      *correction += '\n';
      continue;
    }
    if (text::to_lower(line).find("correction strategy") != std::string::npos) {
      correction = std::string{};
      continue;
    }
    const auto clean = strip_markup(line);
    const auto colon = clean.find(':');
    if (colon == std::string::npos || colon == 0) continue;
    const std::string label = clean.substr(0, colon);
    const std::string rest = trim(std::string_view(clean).substr(colon + 1));

    if (current && (starts_with_label(label, "Visual Evidence") || starts_with_label(label, "Evidence"))) {
      current->evidence += current->evidence.empty() ? rest : " " + rest;
      std::smatch m;
      if (std::regex_search(rest, m, highlight)) {
        out.annotations.push_back(text::to_lower(m[1].str()) + " region: " + current->defect);
      }
      continue;
    }
    if (current && starts_with_label(label, "Reasoning")) {
      current->reasoning += current->reasoning.empty() ? rest : " " + rest;
      continue;
    }

    const auto score = read_score(rest);
    if (!score.ok) continue;
    const auto name = strip_parentheticals(label, nullptr);
    if (name.empty() || name.size() > 120) continue;

    Hypothesis h;
    h.raw_name = trim(label);
    h.score = score.value;
    if (auto leaf = kb.canonical_leaf(name)) {
      h.defect = *leaf;
      h.matched = true;
    } else if (auto m = query::close_matches(name, leaves, 1, query::kDefaultCutoff); !m.empty()) {
      h.defect = m.front();
      h.matched = true;
    } else {
      h.defect = name;
    }
    out.hypotheses.push_back(std::move(h));
    current = &out.hypotheses.back();
  }
  if (out.hypotheses.empty()) throw UnparseableResponseError(std::string(raw));
  if (correction) {
    auto text = *correction;
    while (!text.empty() && (text.back() == '\n' || text.back() == ' ')) text.pop_back();
    const auto first = text.find_first_not_of("\n ");
    text = first == std::string::npos ? std::string{} : text.substr(first);
    if (!text.empty()) out.correction_strategy = std::move(text);
  }
  return out;
}

nlohmann::json to_json(const AlignmentReport& report) {
  Json hyps = Json::array();
  for (const auto& h : report.hypotheses) {
    hyps.push_back({{"defect", h.defect},
                    {"raw_name", h.raw_name},
                    {"score", h.score},
                    {"evidence", h.evidence},
                    {"reasoning", h.reasoning},
                    {"matched", h.matched}});
  }
  Json j = {{"image_ref", report.image_ref},
            {"hypothesis", report.hypothesis ? Json(*report.hypothesis) : Json(nullptr)},
            {"model_id", report.model_id},
            {"hypotheses", hyps},
            {"annotations", report.annotations},
            {"raw_response", report.raw_response},
            {"source_origin", {{"hypotheses", "external_retrieval"}}}};
  if (report.mitigation) {
    const auto& m = *report.mitigation;
    Json rules = Json::array();
    for (const auto& r : m.rules) {
      rules.push_back({{"parameter", kb::to_string(r.parameter)},
                       {"directive", kb::to_string(r.directive)},
                       {"line", r.display_line()},
                       {"provenance", r.provenance}});
    }
    j["mitigation"] = {{"defect", m.defect},
                       {"material", m.material},
                       {"source_origin", kb::to_string(m.source_origin)},
                       {"rules", rules},
                       {"fallback_text", m.fallback_text}};
    j["source_origin"]["mitigation"] = kb::to_string(m.source_origin);
  } else {
    j["mitigation"] = nullptr;
  }
  return j;
}

AlignmentReport assess_image(const AssessmentInput& input, MultimodalAdapter& adapter, const GenerationConfig& config,
                             ModelSelector& selector, const std::vector<DefectDescriptor>& descriptors,
                             const kb::KnowledgeBase& kb) {
  if (input.image.empty()) throw Error("image is empty");
  if (selector.variants.empty()) throw Error("model selector has no variants");

  const auto prompt = build_assessment_prompt(input.image_ref, input.hypothesis, descriptors, kb, input.material);

  selector.attempt_index = 0;
  std::vector<std::string> failures;
  std::optional<std::string> response;
  std::string model_id;
  for (std::size_t attempt = 0; attempt < selector.variants.size() && !response; ++attempt) {
    model_id = select_model(selector);
    try {
      response = adapter.generate({prompt, input.image, config, model_id});
    } catch (const std::exception& e) {
      failures.push_back(model_id + ": " + e.what());
    }
  }
  if (!response) throw AllVariantsFailedError(std::move(failures));

  auto parsed = parse_alignment_response(*response, kb);
  AlignmentReport report;
  report.image_ref = input.image_ref;
  report.hypothesis = input.hypothesis;
  report.model_id = model_id;
  report.hypotheses = std::move(parsed.hypotheses);
  std::stable_sort(report.hypotheses.begin(), report.hypotheses.end(),
                   [](const Hypothesis& a, const Hypothesis& b) { return a.score > b.score; });
  report.annotations = std::move(parsed.annotations);
  report.raw_response = *response;

  const auto& top = report.hypotheses.front();
  if (top.matched && input.material) {
    AssessmentMitigation m;
    m.defect = top.defect;
    m.material = *input.material;
    const auto lookup = kb::mitigation_for(kb, top.defect, *input.material);
    if (const auto* curated = std::get_if<kb::CuratedGuidance>(&lookup)) {
      m.source_origin = kb::SourceOrigin::ontology;
      m.rules = curated->rules;
      report.mitigation = std::move(m);
    } else if (parsed.correction_strategy) {
      m.source_origin = kb::SourceOrigin::external_retrieval;
      m.fallback_text = *parsed.correction_strategy;
      report.mitigation = std::move(m);
    }
  }
  return report;
}

}  // namespace defect_sage::vision

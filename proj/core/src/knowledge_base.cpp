#include "defect_sage/knowledge_base.hpp"

#include "defect_sage/text.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <fstream>
#include <istream>
#include <set>
#include <sstream>
#include <utility>

namespace defect_sage::kb {

namespace {

using Json = nlohmann::ordered_json;

constexpr std::array<std::pair<Parameter, std::string_view>, 8> kParameterNames{{
    {Parameter::laser_power, "laser_power"},
    {Parameter::scan_speed, "scan_speed"},
    {Parameter::layer_thickness, "layer_thickness"},
    {Parameter::hatch_spacing, "hatch_spacing"},
    {Parameter::oxygen_level, "oxygen_level"},
    {Parameter::volumetric_energy_density, "volumetric_energy_density"},
    {Parameter::focus_offset, "focus_offset"},
    {Parameter::gas_flow, "gas_flow"},
}};

constexpr std::array<std::pair<Directive, std::string_view>, 3> kDirectiveNames{{
    {Directive::increase, "increase"},
    {Directive::decrease, "decrease"},
    {Directive::maintain_within, "maintain_within"},
}};

bool has_digit(std::string_view s) {
  return std::any_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

const Json& require(const Json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw KnowledgeBaseError(where, std::string("missing required key '") + key + "'");
  return *it;
}

std::string require_string(const Json& obj, const char* key, const std::string& where) {
  const Json& v = require(obj, key, where);
  if (!v.is_string() || v.get_ref<const std::string&>().empty()) {
    throw KnowledgeBaseError(where + "." + key, "expected a non-empty string");
  }
  return v.get<std::string>();
}

std::string optional_string(const Json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return {};
  if (!it->is_string()) throw KnowledgeBaseError(where + "." + key, "expected a string");
  return it->get<std::string>();
}

class TreeParser {
 public:
  explicit TreeParser(std::map<std::string, std::string, std::less<>>& index) : index_(index) {}

  CategoryNode parse(const std::string& name, const Json& value, const std::string& where) {
    if (name.empty()) throw KnowledgeBaseError(where, "category name must not be empty");
    CategoryNode node{name, CategoryNode::Leaves{}};
    if (value.is_array()) {
      if (value.empty()) throw KnowledgeBaseError(where, "category has no children");
      CategoryNode::Leaves leaves;
      for (std::size_t i = 0; i < value.size(); ++i) {
        const std::string leaf_where = where + "[" + std::to_string(i) + "]";
        if (!value[i].is_string() || value[i].get_ref<const std::string&>().empty()) {
          throw KnowledgeBaseError(leaf_where, "leaf defect must be a non-empty string");
        }
        auto leaf = value[i].get<std::string>();
        auto [it, inserted] = index_.emplace(text::name_key(leaf), leaf);
        if (!inserted) throw KnowledgeBaseError(leaf_where, "duplicate leaf defect '" + leaf + "'");
        leaves.push_back(std::move(leaf));
      }
      node.children = std::move(leaves);
    } else if (value.is_object()) {
      if (value.empty()) throw KnowledgeBaseError(where, "category has no children");
      CategoryNode::Subcategories subs;
      for (const auto& [key, child] : value.items()) {
        subs.push_back(parse(key, child, where + "/" + key));
      }
      node.children = std::move(subs);
    } else {
      throw KnowledgeBaseError(where, "category value must be an object or a list of leaf names");
    }
    return node;
  }

 private:
  std::map<std::string, std::string, std::less<>>& index_;
};

void collect_categories(const CategoryNode& node, const std::string& key,
                        std::vector<const CategoryNode*>& out) {
  if (text::name_key(node.name) == key) out.push_back(&node);
  if (!node.holds_leaves()) {
    for (const auto& sub : node.subcategories()) collect_categories(sub, key, out);
  }
}

void traverse_node(const CategoryNode& node, int indent, DirectoryListing& out) {
  if (node.holds_leaves()) {
    for (const auto& leaf : node.leaves()) out.push_back({leaf, indent, true});
  } else {
    for (const auto& sub : node.subcategories()) {
      out.push_back({sub.name, indent, false});
      traverse_node(sub, indent + 1, out);
    }
  }
}

std::optional<CategoryPath> find_path_in(const CategoryNode& node, const std::string& key,
                                         const CategoryPath& path) {
  if (node.holds_leaves()) {
    for (const auto& leaf : node.leaves()) {
      if (text::name_key(leaf) == key) return path;
    }
    return std::nullopt;
  }
  for (const auto& sub : node.subcategories()) {
    CategoryPath next = path;
    next.push_back(sub.name);
    if (auto found = find_path_in(sub, key, next)) return found;
  }
  return std::nullopt;
}

std::string require_leaf(const KnowledgeBase& kb, std::string_view defect) {
  auto leaf = kb.canonical_leaf(defect);
  if (!leaf) throw UnknownDefectError(std::string(defect));
  return *leaf;
}

}  // namespace

std::string_view to_string(SourceOrigin origin) {
  return origin == SourceOrigin::ontology ? "ontology" : "external_retrieval";
}

std::string_view display_label(SourceOrigin origin) {
  return origin == SourceOrigin::ontology ? "Ontology" : "External Retrieval";
}

std::string_view to_string(Parameter p) {
  for (const auto& [value, name] : kParameterNames) {
    if (value == p) return name;
  }
  return "unknown";
}

std::string_view display_name(Parameter p) {
  switch (p) {
    case Parameter::laser_power: return "Laser Power";
    case Parameter::scan_speed: return "Scan Speed";
    case Parameter::layer_thickness: return "Layer Thickness";
    case Parameter::hatch_spacing: return "Hatch Spacing";
    case Parameter::oxygen_level: return "Oxygen Level";
    case Parameter::volumetric_energy_density: return "Volumetric Energy Density (VED)";
    case Parameter::focus_offset: return "Focus Offset";
    case Parameter::gas_flow: return "Gas Flow";
  }
  return "Unknown";
}

std::optional<Parameter> parse_parameter(std::string_view s) {
  for (const auto& [value, name] : kParameterNames) {
    if (name == s) return value;
  }
  return std::nullopt;
}

std::string_view to_string(Directive d) {
  for (const auto& [value, name] : kDirectiveNames) {
    if (value == d) return name;
  }
  return "unknown";
}

std::optional<Directive> parse_directive(std::string_view s) {
  for (const auto& [value, name] : kDirectiveNames) {
    if (name == s) return value;
  }
  return std::nullopt;
}

std::string_view to_string(CausalKind k) {
  return k == CausalKind::factor_leads_to_defect ? "factor_leads_to_defect" : "defect_leads_to_defect";
}

std::string MitigationRule::display_line() const {
  return std::string(display_name(parameter)) + ": " + rationale;
}

std::optional<std::string> KnowledgeBase::canonical_leaf(std::string_view name) const {
  auto it = leaf_index_.find(text::name_key(name));
  if (it == leaf_index_.end()) return std::nullopt;
  return it->second;
}

std::vector<const CategoryNode*> KnowledgeBase::categories_named(std::string_view name) const {
  std::vector<const CategoryNode*> out;
  const auto key = text::name_key(name);
  for (const auto& root : tree_.roots) collect_categories(root, key, out);
  return out;
}

const DefectProfile* KnowledgeBase::profile(std::string_view defect) const {
  const auto key = text::name_key(defect);
  for (const auto& p : profiles_) {
    if (text::name_key(p.defect) == key) return &p;
  }
  return nullptr;
}

bool KnowledgeBase::operator==(const KnowledgeBase& other) const {
  return schema_version_ == other.schema_version_ && tree_ == other.tree_ &&
         profiles_ == other.profiles_ && causal_ == other.causal_ &&
         mitigations_ == other.mitigations_;
}

KnowledgeBase load_knowledge_base(std::istream& source) {
  Json doc;
  try {
    doc = Json::parse(source);
  } catch (const Json::parse_error& e) {
    throw KnowledgeBaseError("document", std::string("malformed JSON: ") + e.what());
  }
  if (!doc.is_object()) throw KnowledgeBaseError("document", "top level must be an object");

  static const std::set<std::string, std::less<>> kKnownKeys{
      "schema_version", "tree", "profiles", "causal", "mitigations", "references"};
  for (const auto& [key, value] : doc.items()) {
    if (!kKnownKeys.contains(key)) throw KnowledgeBaseError(key, "unknown top-level key");
  }

  KnowledgeBase kb;
  const Json& version = require(doc, "schema_version", "document");
  if (!version.is_number_integer()) throw KnowledgeBaseError("schema_version", "must be an integer");
  kb.schema_version_ = version.get<int>();
  if (kb.schema_version_ < 1 || kb.schema_version_ > kSchemaVersion) {
    throw KnowledgeBaseError("schema_version", "unsupported schema_version " +
                                                   std::to_string(kb.schema_version_) +
                                                   " (this build reads up to " +
                                                   std::to_string(kSchemaVersion) + ")");
  }

  const Json& tree = require(doc, "tree", "document");
  if (tree.is_array() && tree.empty()) {
    // an empty list is accepted as the vacuous tree
  } else if (!tree.is_object()) {
    throw KnowledgeBaseError("tree", "must be an object mapping family names to categories");
  } else {
    TreeParser parser(kb.leaf_index_);
    for (const auto& [family, value] : tree.items()) {
      kb.tree_.roots.push_back(parser.parse(family, value, "tree/" + family));
    }
  }

  auto resolve = [&kb](const std::string& name, const std::string& where) {
    auto leaf = kb.canonical_leaf(name);
    if (!leaf) throw KnowledgeBaseError(where, "dangling reference to unknown defect '" + name + "'");
    return *leaf;
  };

  if (auto it = doc.find("profiles"); it != doc.end()) {
    if (!it->is_object()) throw KnowledgeBaseError("profiles", "must be an object keyed by defect");
    std::set<std::string> seen;
    for (const auto& [name, entry] : it->items()) {
      const std::string where = "profiles/" + name;
      DefectProfile p;
      p.defect = resolve(name, where);
      if (!seen.insert(text::name_key(p.defect)).second) {
        throw KnowledgeBaseError(where, "duplicate profile");
      }
      if (!entry.is_object()) throw KnowledgeBaseError(where, "profile must be an object");
      const Json& causes = require(entry, "causes", where);
      if (!causes.is_array()) throw KnowledgeBaseError(where + ".causes", "must be a list");
      for (const auto& c : causes) {
        if (!c.is_string()) throw KnowledgeBaseError(where + ".causes", "causes must be strings");
        p.causes.push_back(c.get<std::string>());
      }
      p.notes = optional_string(entry, "notes", where);
      if (auto hint = optional_string(entry, "image_hint", where); !hint.empty()) p.image_hint = hint;
      p.provenance = optional_string(entry, "provenance", where);
      kb.profiles_.push_back(std::move(p));
    }
  }

  if (auto it = doc.find("causal"); it != doc.end()) {
    if (!it->is_array()) throw KnowledgeBaseError("causal", "must be a list");
    for (std::size_t i = 0; i < it->size(); ++i) {
      const Json& entry = (*it)[i];
      const std::string where = "causal[" + std::to_string(i) + "]";
      if (!entry.is_object()) throw KnowledgeBaseError(where, "relation must be an object");
      CausalRelation r;
      r.source = require_string(entry, "source", where);
      r.target = require_string(entry, "target", where);
      const auto kind = require_string(entry, "kind", where);
      if (kind == "factor_leads_to_defect") {
        r.kind = CausalKind::factor_leads_to_defect;
        r.target = resolve(r.target, where + ".target");
        if (auto leaf = kb.canonical_leaf(r.source)) r.source = *leaf;
      } else if (kind == "defect_leads_to_defect") {
        r.kind = CausalKind::defect_leads_to_defect;
        r.source = resolve(r.source, where + ".source");
        r.target = resolve(r.target, where + ".target");
      } else {
        throw KnowledgeBaseError(where + ".kind", "unknown relation kind '" + kind + "'");
      }
      if (text::name_key(r.source) == text::name_key(r.target)) {
        throw KnowledgeBaseError(where, "self-loop on '" + r.source + "'");
      }
      r.provenance = optional_string(entry, "provenance", where);
      kb.causal_.push_back(std::move(r));
    }
  }

  if (auto it = doc.find("mitigations"); it != doc.end()) {
    if (!it->is_array()) throw KnowledgeBaseError("mitigations", "must be a list");
    for (std::size_t i = 0; i < it->size(); ++i) {
      const Json& entry = (*it)[i];
      const std::string where = "mitigations[" + std::to_string(i) + "]";
      if (!entry.is_object()) throw KnowledgeBaseError(where, "rule must be an object");
      MitigationRule rule;
      rule.material = require_string(entry, "material", where);
      rule.defect = resolve(require_string(entry, "defect", where), where + ".defect");
      const auto param = require_string(entry, "parameter", where);
      auto parsed_param = parse_parameter(param);
      if (!parsed_param) throw KnowledgeBaseError(where + ".parameter", "unknown parameter '" + param + "'");
      rule.parameter = *parsed_param;
      const auto directive = require_string(entry, "directive", where);
      auto parsed_directive = parse_directive(directive);
      if (!parsed_directive) {
        throw KnowledgeBaseError(where + ".directive", "unknown directive '" + directive + "'");
      }
      rule.directive = *parsed_directive;
      rule.units = require_string(entry, "units", where);
      rule.rationale = require_string(entry, "rationale", where);
      rule.provenance = optional_string(entry, "provenance", where);
      if (auto b = entry.find("bounds"); b != entry.end() && !b->is_null()) {
        if (!b->is_object()) throw KnowledgeBaseError(where + ".bounds", "must be an object");
        const Json& low = require(*b, "low", where + ".bounds");
        const Json& high = require(*b, "high", where + ".bounds");
        if (!low.is_number() || !high.is_number()) {
          throw KnowledgeBaseError(where + ".bounds", "low and high must be numbers");
        }
        Bounds bounds{low.get<double>(), high.get<double>()};
        if (bounds.low > bounds.high) throw KnowledgeBaseError(where + ".bounds", "low exceeds high");
        rule.bounds = bounds;
      }
      if (rule.directive == Directive::maintain_within && !rule.bounds) {
        throw KnowledgeBaseError(where, "maintain_within requires bounds");
      }
      if (rule.bounds && rule.directive != Directive::maintain_within && !has_digit(rule.rationale)) {
        throw KnowledgeBaseError(where, "bounds given but rationale states no numeric threshold");
      }
      kb.mitigations_.push_back(std::move(rule));
    }
  }

  return kb;
}

KnowledgeBase load_knowledge_base_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw KnowledgeBaseError(path.string(), "cannot open knowledge base file");
  return load_knowledge_base(in);
}

KnowledgeBase load_knowledge_base_string(std::string_view document) {
  std::istringstream in{std::string(document)};
  return load_knowledge_base(in);
}

DirectoryListing traverse_defect_categories(const KnowledgeBase& kb) {
  DirectoryListing out;
  for (const auto& family : kb.tree().roots) {
    out.push_back({family.name, 0, false});
    traverse_node(family, 1, out);
  }
  return out;
}

std::string render_listing(const DirectoryListing& listing) {
  std::string out;
  for (const auto& e : listing) {
    out.append(static_cast<std::size_t>(e.depth) * 2, ' ');
    out += e.name;
    if (!e.is_leaf) out += ':';
    out += '\n';
  }
  return out;
}

std::optional<CategoryPath> find_path(const KnowledgeBase& kb, std::string_view target) {
  const auto key = text::name_key(target);
  for (const auto& family : kb.tree().roots) {
    if (auto found = find_path_in(family, key, CategoryPath{family.name})) return found;
  }
  return std::nullopt;
}

std::string render_path(const CategoryPath& path) {
  std::string out;
  for (std::size_t i = 0; i < path.size(); ++i) {
    if (i) out += " → ";
    out += path[i];
  }
  return out;
}

std::vector<std::string> flatten_vocabulary(const KnowledgeBase& kb, VocabularyScope scope) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& e : traverse_defect_categories(kb)) {
    if (scope == VocabularyScope::leaves_only && !e.is_leaf) continue;
    if (seen.insert(text::name_key(e.name)).second) out.push_back(e.name);
  }
  return out;
}

std::vector<CausalRelation> causes_of(const KnowledgeBase& kb, std::string_view defect) {
  const auto key = text::name_key(require_leaf(kb, defect));
  std::vector<CausalRelation> out;
  for (const auto& r : kb.causal()) {
    if (text::name_key(r.target) == key) out.push_back(r);
  }
  return out;
}

std::vector<CausalRelation> consequences_of(const KnowledgeBase& kb, std::string_view defect) {
  const auto key = text::name_key(require_leaf(kb, defect));
  std::vector<CausalRelation> out;
  for (const auto& r : kb.causal()) {
    if (text::name_key(r.source) == key) out.push_back(r);
  }
  return out;
}

MitigationLookup mitigation_for(const KnowledgeBase& kb, std::string_view defect,
                                std::string_view material) {
  const auto leaf = require_leaf(kb, defect);
  const auto leaf_key = text::name_key(leaf);
  const auto material_key = text::name_key(material);
  CuratedGuidance guidance{leaf, text::normalize_whitespace(material), {}, SourceOrigin::ontology};
  for (const auto& rule : kb.mitigations()) {
    if (text::name_key(rule.defect) == leaf_key && text::name_key(rule.material) == material_key) {
      guidance.rules.push_back(rule);
    }
  }
  if (guidance.rules.empty()) {
    return FallbackNeeded{leaf, text::normalize_whitespace(material), SourceOrigin::external_retrieval};
  }
  guidance.material = guidance.rules.front().material;
  return guidance;
}

}  // namespace defect_sage::kb

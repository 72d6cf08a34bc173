#pragma once

#include "defect_sage/errors.hpp"

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

/// Hierarchical LPBF defect knowledge base: the defect tree, per-defect
/// profiles, causal relations and material-scoped mitigation rules.
///
/// A KnowledgeBase is immutable once loaded and may be shared freely between
/// threads. All name lookups are case-insensitive and whitespace-normalized;
/// results always use the casing stored in the document.
namespace defect_sage::kb {

inline constexpr int kSchemaVersion = 1;

enum class SourceOrigin { ontology, external_retrieval };

std::string_view to_string(SourceOrigin origin);
std::string_view display_label(SourceOrigin origin);

struct CategoryNode {
  using Subcategories = std::vector<CategoryNode>;
  using Leaves = std::vector<std::string>;

  std::string name;
  std::variant<Subcategories, Leaves> children;

  bool holds_leaves() const { return std::holds_alternative<Leaves>(children); }
  const Subcategories& subcategories() const { return std::get<Subcategories>(children); }
  const Leaves& leaves() const { return std::get<Leaves>(children); }

  bool operator==(const CategoryNode&) const = default;
};

struct DefectTree {
  std::vector<CategoryNode> roots;

  bool operator==(const DefectTree&) const = default;
};

/// Category names from the top-level family down to the leaf's parent.
using CategoryPath = std::vector<std::string>;

struct DefectProfile {
  std::string defect;
  std::vector<std::string> causes;
  std::string notes;
  std::optional<std::string> image_hint;
  std::string provenance;

  bool operator==(const DefectProfile&) const = default;
};

enum class CausalKind { factor_leads_to_defect, defect_leads_to_defect };

struct CausalRelation {
  std::string source;
  std::string target;
  CausalKind kind = CausalKind::factor_leads_to_defect;
  std::string provenance;

  bool operator==(const CausalRelation&) const = default;
};

enum class Parameter {
  laser_power,
  scan_speed,
  layer_thickness,
  hatch_spacing,
  oxygen_level,
  volumetric_energy_density,
  focus_offset,
  gas_flow,
};

enum class Directive { increase, decrease, maintain_within };

std::string_view to_string(Parameter p);
std::string_view display_name(Parameter p);
std::optional<Parameter> parse_parameter(std::string_view s);
std::string_view to_string(Directive d);
std::optional<Directive> parse_directive(std::string_view s);
std::string_view to_string(CausalKind k);

struct Bounds {
  double low = 0.0;
  double high = 0.0;

  bool contains(double v) const { return low <= v && v <= high; }
  bool operator==(const Bounds&) const = default;
};

struct MitigationRule {
  std::string material;
  std::string defect;
  Parameter parameter = Parameter::laser_power;
  Directive directive = Directive::increase;
  std::optional<Bounds> bounds;
  std::string units;
  std::string rationale;
  std::string provenance;

  /// "Layer Thickness: Use thinner layers (30–50 μm)"
  std::string display_line() const;

  bool operator==(const MitigationRule&) const = default;
};

/// Curated guidance for a (defect, material) pair; always ontology-sourced.
struct CuratedGuidance {
  std::string defect;
  std::string material;
  std::vector<MitigationRule> rules;
  SourceOrigin source_origin = SourceOrigin::ontology;
};

/// No curated rules exist; the caller should route to external retrieval.
struct FallbackNeeded {
  std::string defect;
  std::string material;
  SourceOrigin source_origin = SourceOrigin::external_retrieval;
};

using MitigationLookup = std::variant<CuratedGuidance, FallbackNeeded>;

class KnowledgeBaseError : public Error {
 public:
  KnowledgeBaseError(std::string where, const std::string& what)
      : Error(where.empty() ? what : where + ": " + what), where_(std::move(where)) {}
  /// Document path or name of the offending element.
  const std::string& where() const { return where_; }

 private:
  std::string where_;
};

class UnknownDefectError : public Error {
 public:
  explicit UnknownDefectError(const std::string& name)
      : Error("unknown defect '" + name + "'"), name_(name) {}
  const std::string& name() const { return name_; }

 private:
  std::string name_;
};

class KnowledgeBase {
 public:
  int schema_version() const { return schema_version_; }
  const DefectTree& tree() const { return tree_; }
  const std::vector<DefectProfile>& profiles() const { return profiles_; }
  const std::vector<CausalRelation>& causal() const { return causal_; }
  const std::vector<MitigationRule>& mitigations() const { return mitigations_; }

  /// Stored spelling of a leaf, if `name` resolves to one.
  std::optional<std::string> canonical_leaf(std::string_view name) const;
  bool is_leaf(std::string_view name) const { return canonical_leaf(name).has_value(); }

  /// Every category node carrying this name, in document order. "Other" and
  /// "Main" label several nodes in the shipped tree.
  std::vector<const CategoryNode*> categories_named(std::string_view name) const;

  const DefectProfile* profile(std::string_view defect) const;

  std::size_t leaf_count() const { return leaf_index_.size(); }

  bool operator==(const KnowledgeBase& other) const;

 private:
  friend KnowledgeBase load_knowledge_base(std::istream& source);

  int schema_version_ = kSchemaVersion;
  DefectTree tree_;
  std::vector<DefectProfile> profiles_;
  std::vector<CausalRelation> causal_;
  std::vector<MitigationRule> mitigations_;
  std::map<std::string, std::string, std::less<>> leaf_index_;  // key -> stored name
};

KnowledgeBase load_knowledge_base(std::istream& source);
KnowledgeBase load_knowledge_base_file(const std::filesystem::path& path);
KnowledgeBase load_knowledge_base_string(std::string_view document);

struct ListingEntry {
  std::string name;
  int depth = 0;
  bool is_leaf = false;

  bool operator==(const ListingEntry&) const = default;
};

using DirectoryListing = std::vector<ListingEntry>;

/// Depth-annotated preorder walk: families at depth 0, each nested map level
/// one deeper, leaves at the depth of the list holding them.
DirectoryListing traverse_defect_categories(const KnowledgeBase& kb);

/// Two spaces per depth, categories suffixed with ':'.
std::string render_listing(const DirectoryListing& listing);

/// Depth-first search accumulating parent category names. Returns nullopt
/// when no branch contains `target`.
std::optional<CategoryPath> find_path(const KnowledgeBase& kb, std::string_view target);

/// "Surface defects → Main"
std::string render_path(const CategoryPath& path);

enum class VocabularyScope { leaves_only, all_terms };

std::vector<std::string> flatten_vocabulary(const KnowledgeBase& kb, VocabularyScope scope);

std::vector<CausalRelation> causes_of(const KnowledgeBase& kb, std::string_view defect);
std::vector<CausalRelation> consequences_of(const KnowledgeBase& kb, std::string_view defect);

MitigationLookup mitigation_for(const KnowledgeBase& kb, std::string_view defect,
                                std::string_view material);

}  // namespace defect_sage::kb

#pragma once

#include "defect_sage/adapters.hpp"
#include "defect_sage/knowledge_base.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

// Hypothesis-guided micrograph assessment through a multimodal adapter.
// Images are opaque bytes; all feature extraction happens in the model.
namespace defect_sage::vision {

enum class Dimension { morphology, edge_profile, interior_content, layer_orientation };

inline constexpr std::array<Dimension, 4> kDimensions{Dimension::morphology, Dimension::edge_profile,
                                                      Dimension::interior_content, Dimension::layer_orientation};

std::string_view to_string(Dimension d);
std::string_view display_name(Dimension d);
std::optional<Dimension> parse_dimension(std::string_view s);

struct DefectDescriptor {
  std::string defect;
  std::vector<std::pair<Dimension, std::string>> dimensions;  // kDimensions order
  std::string provenance;

  const std::string* feature(Dimension d) const;
  bool operator==(const DefectDescriptor&) const = default;
};

class DescriptorError : public Error {
 public:
  using Error::Error;
};

/// Every descriptor must name a KB leaf and carry all four dimensions.
std::vector<DefectDescriptor> load_descriptors(std::istream& in, const kb::KnowledgeBase& kb);
std::vector<DefectDescriptor> load_descriptors_file(const std::filesystem::path& path, const kb::KnowledgeBase& kb);

enum class Alignment { high, low };

struct FeatureObservation {
  Dimension dimension = Dimension::morphology;
  std::string observed;
  Alignment alignment = Alignment::low;
};

/// Fraction of the descriptor's dimensions observed with high alignment.
/// Missing dimensions count as low; repeated dimensions count once.
double offline_alignment_score(const std::vector<FeatureObservation>& observations,
                               const DefectDescriptor& descriptor);

struct ModelSelector {
  std::vector<std::string> variants;
  std::size_t attempt_index = 0;
};

/// variants[attempt_index % size], then advances. Throws Error when empty.
std::string select_model(ModelSelector& selector);

class UnknownHypothesisError : public Error {
 public:
  explicit UnknownHypothesisError(const std::string& name) : Error("unknown hypothesis '" + name + "'") {}
};

class UnparseableResponseError : public Error {
 public:
  explicit UnparseableResponseError(std::string raw)
      : Error("no defect hypothesis with a score found in model response"), raw_(std::move(raw)) {}
  const std::string& raw() const { return raw_; }

 private:
  std::string raw_;
};

class AllVariantsFailedError : public Error {
 public:
  explicit AllVariantsFailedError(std::vector<std::string> failures);
  const std::vector<std::string>& failures() const { return failures_; }

 private:
  std::vector<std::string> failures_;
};

/// Targeted prompt when `hypothesis` is given, general identification prompt
/// otherwise. `material` adds the curated parameter bounds the model must
/// respect.
std::string build_assessment_prompt(std::string_view image_ref, const std::optional<std::string>& hypothesis,
                                    const std::vector<DefectDescriptor>& descriptors, const kb::KnowledgeBase& kb,
                                    const std::optional<std::string>& material = std::nullopt);

struct Hypothesis {
  std::string defect;    // KB leaf when matched, otherwise the name as written
  std::string raw_name;  // as written by the model, markup stripped
  double score = 0.0;
  std::string evidence;
  std::string reasoning;
  bool matched = false;

  bool operator==(const Hypothesis&) const = default;
};

struct ParsedResponse {
  std::vector<Hypothesis> hypotheses;  // response order
  std::vector<std::string> annotations;
  std::optional<std::string> correction_strategy;
};

/// Reads "Name: 0.85" and "Name: 90% Probability" lines (list markers and
/// bold markup allowed) up to a "Correction Strategy" heading.
ParsedResponse parse_alignment_response(std::string_view raw, const kb::KnowledgeBase& kb);

struct AssessmentMitigation {
  kb::SourceOrigin source_origin = kb::SourceOrigin::ontology;
  std::string defect;
  std::string material;
  std::vector<kb::MitigationRule> rules;  // curated only
  std::string fallback_text;              // model-provided, external only
};

struct AlignmentReport {
  std::string image_ref;
  std::optional<std::string> hypothesis;
  std::string model_id;
  std::vector<Hypothesis> hypotheses;  // score descending
  std::vector<std::string> annotations;
  std::optional<AssessmentMitigation> mitigation;
  std::string raw_response;
};

nlohmann::json to_json(const AlignmentReport& report);

struct AssessmentInput {
  std::string image;  // bytes
  std::string image_ref = "image";
  std::optional<std::string> hypothesis;
  std::optional<std::string> material;
};

/// Each request starts at the selector's first variant and moves to the next
/// one only when the adapter fails, so a given image and hypothesis always
/// reach the same model first.
AlignmentReport assess_image(const AssessmentInput& input, MultimodalAdapter& adapter, const GenerationConfig& config,
                             ModelSelector& selector, const std::vector<DefectDescriptor>& descriptors,
                             const kb::KnowledgeBase& kb);

}  // namespace defect_sage::vision

#pragma once

#include "defect_sage/knowledge_base.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace defect_sage::query {

/// Gestalt (Ratcliff-Obershelp) similarity: 2*M / (|a| + |b|), where M counts
/// characters in the matching blocks found by repeatedly taking the longest
/// common block and recursing on both remainders. For equal-length candidate
/// blocks the one starting earliest in `a` (then in `b`) wins. Operates on
/// Unicode code points; two empty strings compare as 1.0.
double similarity_ratio(std::string_view a, std::string_view b);
double similarity_ratio(std::u32string_view a, std::u32string_view b);

inline constexpr std::size_t kDefaultMatchCount = 3;
inline constexpr double kDefaultCutoff = 0.6;

struct ScoredTerm {
  std::string term;
  double similarity = 0.0;

  bool operator==(const ScoredTerm&) const = default;
};

/// Up to `n` vocabulary terms scoring at least `cutoff` against `term`
/// (both lowercased), best first; ties keep vocabulary order.
std::vector<ScoredTerm> close_matches_scored(std::string_view term,
                                             const std::vector<std::string>& vocabulary,
                                             std::size_t n = kDefaultMatchCount,
                                             double cutoff = kDefaultCutoff);

std::vector<std::string> close_matches(std::string_view term, const std::vector<std::string>& vocabulary,
                                       std::size_t n = kDefaultMatchCount, double cutoff = kDefaultCutoff);

enum class MatchKind { exact_substring, fuzzy, none };

std::string_view to_string(MatchKind kind);

struct QueryInterpretation {
  std::string raw_input;
  std::optional<std::string> resolved_term;
  MatchKind match_kind = MatchKind::none;
  double similarity = 0.0;
  std::vector<ScoredTerm> alternates;
};

/// Terms a free-text query may resolve to: every leaf and category name,
/// minus grouping labels ("Other", "Main") that name several categories and
/// therefore identify no single subtree.
std::vector<std::string> query_vocabulary(const kb::KnowledgeBase& kb);

/// Substring stage first (longest vocabulary term contained in the input),
/// then gestalt matching of the whole input and each word, else no match.
QueryInterpretation interpret_query(std::string_view input, const kb::KnowledgeBase& kb);

struct Disambiguation {
  std::string parent;
  std::vector<std::string> options;
  std::string prompt_text;
};

struct LeafResolved {
  std::string leaf;
};

class UnknownTermError : public Error {
 public:
  explicit UnknownTermError(const std::string& term) : Error("unknown term '" + term + "'") {}
};

/// Leaves win over same-named categories; a category expands to every leaf
/// beneath it (and beneath any other category with the same name), flattened
/// in document order.
std::variant<Disambiguation, LeafResolved> disambiguate(std::string_view term, const kb::KnowledgeBase& kb);

}  // namespace defect_sage::query

#include "defect_sage/query.hpp"

#include "defect_sage/text.hpp"

#include <algorithm>
#include <set>
#include <tuple>
#include <unordered_map>

namespace defect_sage::query {

namespace {

struct Block {
  std::size_t a = 0;
  std::size_t b = 0;
  std::size_t size = 0;
};

// Longest matching block in a[alo, ahi) x b[blo, bhi). Scans a left to right
// and keeps the first strictly longer run, which yields the earliest block in
// `a` among equal-length candidates.
Block longest_match(std::u32string_view a, std::size_t alo, std::size_t ahi,
                    const std::unordered_map<char32_t, std::vector<std::size_t>>& b2j, std::size_t blo,
                    std::size_t bhi) {
  Block best{alo, blo, 0};
  std::unordered_map<std::size_t, std::size_t> run_len;
  std::unordered_map<std::size_t, std::size_t> next_len;
  for (std::size_t i = alo; i < ahi; ++i) {
    next_len.clear();
    auto it = b2j.find(a[i]);
    if (it != b2j.end()) {
      for (std::size_t j : it->second) {
        if (j < blo) continue;
        if (j >= bhi) break;
        std::size_t k = 1;
        if (j > 0) {
          if (auto prev = run_len.find(j - 1); prev != run_len.end()) k = prev->second + 1;
        }
        next_len[j] = k;
        if (k > best.size) best = {i + 1 - k, j + 1 - k, k};
      }
    }
    std::swap(run_len, next_len);
  }
  return best;
}

std::size_t matched_characters(std::u32string_view a, std::u32string_view b) {
  std::unordered_map<char32_t, std::vector<std::size_t>> b2j;
  for (std::size_t j = 0; j < b.size(); ++j) b2j[b[j]].push_back(j);

  std::size_t total = 0;
  std::vector<std::tuple<std::size_t, std::size_t, std::size_t, std::size_t>> pending{{0, a.size(), 0, b.size()}};
  while (!pending.empty()) {
    auto [alo, ahi, blo, bhi] = pending.back();
    pending.pop_back();
    const Block m = longest_match(a, alo, ahi, b2j, blo, bhi);
    if (m.size == 0) continue;
    total += m.size;
    if (alo < m.a && blo < m.b) pending.emplace_back(alo, m.a, blo, m.b);
    if (m.a + m.size < ahi && m.b + m.size < bhi) pending.emplace_back(m.a + m.size, ahi, m.b + m.size, bhi);
  }
  return total;
}

void collect_leaves(const kb::CategoryNode& node, std::vector<std::string>& out) {
  if (node.holds_leaves()) {
    out.insert(out.end(), node.leaves().begin(), node.leaves().end());
  } else {
    for (const auto& sub : node.subcategories()) collect_leaves(sub, out);
  }
}

std::string strip_punctuation(std::string_view word) {
  auto is_edge = [](unsigned char c) { return std::ispunct(c) != 0 && c != '-' && c != '/'; };
  std::size_t lo = 0;
  std::size_t hi = word.size();
  while (lo < hi && is_edge(static_cast<unsigned char>(word[lo]))) ++lo;
  while (hi > lo && is_edge(static_cast<unsigned char>(word[hi - 1]))) --hi;
  return std::string(word.substr(lo, hi - lo));
}

constexpr std::size_t kMinFuzzyWordLength = 3;

}  // namespace

double similarity_ratio(std::u32string_view a, std::u32string_view b) {
  const std::size_t total = a.size() + b.size();
  if (total == 0) return 1.0;
  return 2.0 * static_cast<double>(matched_characters(a, b)) / static_cast<double>(total);
}

double similarity_ratio(std::string_view a, std::string_view b) {
  return similarity_ratio(text::decode_utf8(a), text::decode_utf8(b));
}

std::vector<ScoredTerm> close_matches_scored(std::string_view term, const std::vector<std::string>& vocabulary,
                                             std::size_t n, double cutoff) {
  std::vector<ScoredTerm> scored;
  if (n == 0) return scored;
  const auto needle = text::decode_utf8(text::to_lower(term));
  for (const auto& candidate : vocabulary) {
    const double s = similarity_ratio(needle, text::decode_utf8(text::to_lower(candidate)));
    if (s >= cutoff) scored.push_back({candidate, s});
  }
  std::stable_sort(scored.begin(), scored.end(),
                   [](const ScoredTerm& x, const ScoredTerm& y) { return x.similarity > y.similarity; });
  if (scored.size() > n) scored.resize(n);
  return scored;
}

std::vector<std::string> close_matches(std::string_view term, const std::vector<std::string>& vocabulary,
                                       std::size_t n, double cutoff) {
  std::vector<std::string> out;
  for (auto& s : close_matches_scored(term, vocabulary, n, cutoff)) out.push_back(std::move(s.term));
  return out;
}

std::string_view to_string(MatchKind kind) {
  switch (kind) {
    case MatchKind::exact_substring: return "exact_substring";
    case MatchKind::fuzzy: return "fuzzy";
    case MatchKind::none: return "none";
  }
  return "none";
}

std::vector<std::string> query_vocabulary(const kb::KnowledgeBase& kb) {
  std::vector<std::string> out;
  for (auto& term : flatten_vocabulary(kb, kb::VocabularyScope::all_terms)) {
    if (!kb.is_leaf(term) && kb.categories_named(term).size() > 1) continue;
    out.push_back(std::move(term));
  }
  return out;
}

QueryInterpretation interpret_query(std::string_view input, const kb::KnowledgeBase& kb) {
  QueryInterpretation result;
  result.raw_input = std::string(input);
  const auto normalized = text::name_key(input);
  const auto vocabulary = query_vocabulary(kb);
  if (normalized.empty()) return result;

  // Stage 1: explicit terms embedded in the input.
  const std::string* best = nullptr;
  for (const auto& term : vocabulary) {
    if (normalized.find(text::name_key(term)) == std::string::npos) continue;
    if (!best || term.size() > best->size()) best = &term;
  }
  if (best) {
    result.resolved_term = *best;
    result.match_kind = MatchKind::exact_substring;
    result.similarity = 1.0;
    return result;
  }

  // Stage 2: gestalt matching of the whole input, then each word.
  std::vector<std::string> pieces{normalized};
  for (const auto& word : text::split_words(normalized)) {
    auto w = strip_punctuation(word);
    if (w.size() >= kMinFuzzyWordLength && w != normalized) pieces.push_back(std::move(w));
  }
  std::vector<ScoredTerm> candidates;
  for (const auto& piece : pieces) {
    for (auto& m : close_matches_scored(piece, vocabulary)) {
      auto it = std::find_if(candidates.begin(), candidates.end(),
                             [&](const ScoredTerm& c) { return c.term == m.term; });
      if (it == candidates.end()) {
        candidates.push_back(std::move(m));
      } else {
        it->similarity = std::max(it->similarity, m.similarity);
      }
    }
  }
  if (candidates.empty()) return result;

  auto vocab_rank = [&vocabulary](const std::string& term) {
    return std::find(vocabulary.begin(), vocabulary.end(), term) - vocabulary.begin();
  };
  std::sort(candidates.begin(), candidates.end(), [&](const ScoredTerm& x, const ScoredTerm& y) {
    if (x.similarity != y.similarity) return x.similarity > y.similarity;
    return vocab_rank(x.term) < vocab_rank(y.term);
  });
  result.resolved_term = candidates.front().term;
  result.similarity = candidates.front().similarity;
  result.match_kind = MatchKind::fuzzy;
  result.alternates.assign(candidates.begin() + 1, candidates.end());
  return result;
}

std::variant<Disambiguation, LeafResolved> disambiguate(std::string_view term, const kb::KnowledgeBase& kb) {
  if (auto leaf = kb.canonical_leaf(term)) return LeafResolved{*leaf};
  const auto categories = kb.categories_named(term);
  if (categories.empty()) throw UnknownTermError(std::string(term));

  Disambiguation d;
  d.parent = categories.front()->name;
  for (const auto* node : categories) collect_leaves(*node, d.options);
  d.prompt_text = "Multiple types of '" + d.parent + "':";
  return d;
}

}  // namespace defect_sage::query

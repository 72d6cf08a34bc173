#include "defect_sage/evaluation.hpp"

#include "defect_sage/text.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <future>
#include <set>
#include <sstream>
#include <unordered_map>

namespace defect_sage::eval {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else {
      field += c;
    }
  }
  if (quoted) throw EvaluationError("unterminated quote");
  fields.push_back(std::move(field));
  return fields;
}

std::string fixed4(double v) { return fmt::format("{:.4f}", v); }

}  // namespace

long long ConfusionMatrix::total() const {
  long long t = 0;
  for (const auto& row : counts) {
    for (auto c : row) t += c;
  }
  return t;
}

long long ConfusionMatrix::trace() const {
  long long t = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) t += counts[i][i];
  return t;
}

std::size_t ConfusionMatrix::index_of(std::string_view label) const {
  auto it = std::find(classes.begin(), classes.end(), label);
  if (it == classes.end()) throw EvaluationError("class '" + std::string(label) + "' not in matrix");
  return static_cast<std::size_t>(it - classes.begin());
}

ConfusionMatrix build_confusion(const std::vector<LabeledRecord>& records, const std::vector<std::string>& pinned) {
  if (records.empty()) throw EvaluationError("no records");
  ConfusionMatrix m;
  std::unordered_map<std::string, std::size_t> index;
  auto add = [&](const std::string& label) {
    if (label.empty()) throw EvaluationError("empty class label");
    if (index.emplace(label, m.classes.size()).second) m.classes.push_back(label);
  };
  for (const auto& c : pinned) add(c);
  for (const auto& r : records) {
    add(r.reference);
    add(r.predicted);
  }
  const auto k = m.classes.size();
  m.counts.assign(k, std::vector<long long>(k, 0));
  for (const auto& r : records) ++m.counts[index.at(r.reference)][index.at(r.predicted)];
  return m;
}

MetricsReport compute_metrics(const ConfusionMatrix& matrix) {
  const auto total = matrix.total();
  if (total <= 0) throw EvaluationError("empty confusion matrix");
  const auto k = matrix.classes.size();
  MetricsReport out;
  for (std::size_t c = 0; c < k; ++c) {
    long long tp = matrix.counts[c][c];
    long long row = 0;
    long long col = 0;
    for (std::size_t j = 0; j < k; ++j) {
      row += matrix.counts[c][j];
      col += matrix.counts[j][c];
    }
    ClassMetrics cm;
    cm.precision = col > 0 ? static_cast<double>(tp) / static_cast<double>(col) : 0.0;
    cm.recall = row > 0 ? static_cast<double>(tp) / static_cast<double>(row) : 0.0;
    const double pr = cm.precision + cm.recall;
    cm.f1 = pr > 0.0 ? 2.0 * cm.precision * cm.recall / pr : 0.0;
    out.macro_precision += cm.precision;
    out.macro_recall += cm.recall;
    out.macro_f1 += cm.f1;
    out.per_class[matrix.classes[c]] = cm;
  }
  const auto kd = static_cast<double>(k);
  out.macro_precision /= kd;
  out.macro_recall /= kd;
  out.macro_f1 /= kd;
  out.accuracy = static_cast<double>(matrix.trace()) / static_cast<double>(total);
  return out;
}

KappaResult cohens_kappa(const ConfusionMatrix& matrix) {
  const auto total = matrix.total();
  if (total <= 0) throw EvaluationError("empty confusion matrix");
  const auto k = matrix.classes.size();
  const auto n = static_cast<double>(total);
  KappaResult r;
  r.p_o = static_cast<double>(matrix.trace()) / n;
  for (std::size_t c = 0; c < k; ++c) {
    long long row = 0;
    long long col = 0;
    for (std::size_t j = 0; j < k; ++j) {
      row += matrix.counts[c][j];
      col += matrix.counts[j][c];
    }
    r.p_e += (static_cast<double>(row) / n) * (static_cast<double>(col) / n);
  }
  if (r.p_e >= 1.0) throw DegenerateAgreementError();
  r.kappa = (r.p_o - r.p_e) / (1.0 - r.p_e);
  return r;
}

std::string kappa_band(double kappa) {
  if (kappa < 0.0) return "poor agreement";
  if (kappa < 0.20) return "slight agreement";
  if (kappa < 0.40) return "fair agreement";
  if (kappa < 0.60) return "moderate agreement";
  if (kappa < 0.80) return "substantial agreement";
  return "almost perfect agreement";
}

std::vector<LabeledRecord> read_records(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  std::vector<LabeledRecord> out;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (line.empty()) continue;
    std::vector<std::string> f;
    try {
      f = split_csv_line(line);
    } catch (const EvaluationError& e) {
      throw EvaluationError("line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!header) {
      if (f.size() != 3 || f[0] != "item_id" || f[1] != "reference" || f[2] != "predicted") {
        throw EvaluationError("line " + std::to_string(line_no) + ": expected header item_id,reference,predicted");
      }
      header = true;
      continue;
    }
    if (f.size() != 3) {
      throw EvaluationError("line " + std::to_string(line_no) + ": expected 3 fields, got " +
                            std::to_string(f.size()));
    }
    if (f[1].empty() || f[2].empty()) throw EvaluationError("line " + std::to_string(line_no) + ": empty label");
    out.push_back({f[0], f[1], f[2]});
  }
  if (!header) throw EvaluationError("missing header");
  return out;
}

std::vector<LabeledRecord> read_records_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw EvaluationError("cannot read " + path.string());
  return read_records(in);
}

AblationManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw EvaluationError("cannot read manifest " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw EvaluationError("malformed manifest " + path.string() + ": " + e.what());
  }
  if (!doc.is_object() || !doc.contains("configurations") || !doc["configurations"].is_array()) {
    throw EvaluationError("manifest needs a 'configurations' array");
  }
  AblationManifest m;
  std::set<std::string> ids;
  const auto base = path.parent_path();
  for (const auto& c : doc["configurations"]) {
    ConfigurationSpec spec;
    spec.config_id = c.value("config_id", std::string{});
    spec.description = c.value("description", std::string{});
    const auto rel = c.value("records_path", std::string{});
    if (spec.config_id.empty() || rel.empty()) throw EvaluationError("configuration needs config_id and records_path");
    if (!ids.insert(spec.config_id).second) throw EvaluationError("duplicate config_id '" + spec.config_id + "'");
    std::filesystem::path p(rel);
    spec.records_path = p.is_absolute() ? p : base / p;
    m.configurations.push_back(std::move(spec));
  }
  if (doc.contains("classes")) m.classes = doc["classes"].get<std::vector<std::string>>();
  return m;
}

std::vector<ConfigurationResult> evaluate_manifest(const AblationManifest& manifest) {
  auto evaluate = [&manifest](const ConfigurationSpec& spec) {
    try {
      ConfigurationResult r;
      r.spec = spec;
      const auto records = read_records_file(spec.records_path);
      r.record_count = records.size();
      const auto matrix = build_confusion(records, manifest.classes);
      r.metrics = compute_metrics(matrix);
      r.kappa = cohens_kappa(matrix);
      r.band = kappa_band(r.kappa.kappa);
      return r;
    } catch (const std::exception& e) {
      throw EvaluationError("configuration " + spec.config_id + ": " + e.what());
    }
  };
  std::vector<std::future<ConfigurationResult>> futures;
  for (const auto& spec : manifest.configurations) {
    futures.push_back(std::async(std::launch::async, evaluate, std::cref(spec)));
  }
  std::vector<ConfigurationResult> out;
  std::optional<EvaluationError> first_error;
  for (auto& f : futures) {
    try {
      out.push_back(f.get());
    } catch (const EvaluationError& e) {
      if (!first_error) first_error = e;
    }
  }
  if (first_error) throw *first_error;
  return out;
}

std::string ablation_csv(const std::vector<ConfigurationResult>& results) {
  std::string s = "config_id,accuracy,macro_precision,macro_recall,macro_f1,kappa,kappa_band\n";
  for (const auto& r : results) {
    s += fmt::format("{},{},{},{},{},{},{}\n", r.spec.config_id, fixed4(r.metrics.accuracy),
                     fixed4(r.metrics.macro_precision), fixed4(r.metrics.macro_recall), fixed4(r.metrics.macro_f1),
                     fixed4(r.kappa.kappa), r.band);
  }
  return s;
}

std::string ablation_html(const std::vector<ConfigurationResult>& results) {
  std::string s =
      "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n<title>Ablation report</title>\n"
      "<style>body{font-family:sans-serif;margin:2em}table{border-collapse:collapse}"
      "th,td{border:1px solid #999;padding:4px 8px;text-align:right}th:first-child,td:first-child,"
      "td:nth-child(2),td:last-child{text-align:left}</style>\n</head>\n<body>\n<h1>Ablation report</h1>\n"
      "<table>\n<tr><th>Config</th><th>Description</th><th>Records</th><th>Accuracy</th><th>Macro P</th>"
      "<th>Macro R</th><th>Macro F1</th><th>Kappa</th><th>Agreement</th></tr>\n";
  for (const auto& r : results) {
    s += fmt::format(
        "<tr><td>{}</td><td>{}</td><td>{}</td><td>{}</td><td>{}</td><td>{}</td><td>{}</td><td>{}</td><td>{}</td>"
        "</tr>\n",
        text::html_escape(r.spec.config_id), text::html_escape(r.spec.description), r.record_count,
        fixed4(r.metrics.accuracy), fixed4(r.metrics.macro_precision), fixed4(r.metrics.macro_recall),
        fixed4(r.metrics.macro_f1), fixed4(r.kappa.kappa), text::html_escape(r.band));
  }
  s += "</table>\n</body>\n</html>\n";
  return s;
}

AblationOutcome run_ablation(const AblationManifest& manifest, const std::filesystem::path& out_dir) {
  AblationOutcome out;
  out.results = evaluate_manifest(manifest);
  std::filesystem::create_directories(out_dir);
  out.csv_path = out_dir / "ablation_report.csv";
  out.html_path = out_dir / "ablation_report.html";
  auto write = [](const std::filesystem::path& p, const std::string& body) {
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    if (!f) throw EvaluationError("cannot write " + p.string());
    f << body;
  };
  write(out.csv_path, ablation_csv(out.results));
  write(out.html_path, ablation_html(out.results));
  return out;
}

}  // namespace defect_sage::eval

#pragma once

#include "defect_sage/errors.hpp"

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace defect_sage::eval {

struct LabeledRecord {
  std::string item_id;
  std::string reference;
  std::string predicted;

  bool operator==(const LabeledRecord&) const = default;
};

// Row = reference, column = predicted.
struct ConfusionMatrix {
  std::vector<std::string> classes;
  std::vector<std::vector<long long>> counts;

  long long total() const;
  long long trace() const;
  std::size_t index_of(std::string_view label) const;  // throws when absent
};

class EvaluationError : public Error {
 public:
  using Error::Error;
};

class DegenerateAgreementError : public EvaluationError {
 public:
  DegenerateAgreementError() : EvaluationError("kappa undefined: chance agreement p_e equals 1") {}
};

/// Classes in first-appearance order over (reference, predicted) of each
/// record, unless `pinned` fixes the order. Labels absent from `pinned` are
/// appended after it.
ConfusionMatrix build_confusion(const std::vector<LabeledRecord>& records,
                                const std::vector<std::string>& pinned = {});

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct MetricsReport {
  double accuracy = 0.0;
  std::map<std::string, ClassMetrics> per_class;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
};

/// Zero denominators yield 0 and the class still counts toward the macro mean.
MetricsReport compute_metrics(const ConfusionMatrix& matrix);

struct KappaResult {
  double kappa = 0.0;
  double p_o = 0.0;
  double p_e = 0.0;
};

KappaResult cohens_kappa(const ConfusionMatrix& matrix);

/// poor / slight / fair / moderate / substantial / almost perfect agreement.
std::string kappa_band(double kappa);

/// CSV with header `item_id,reference,predicted`. Fields may be quoted.
std::vector<LabeledRecord> read_records(std::istream& in);
std::vector<LabeledRecord> read_records_file(const std::filesystem::path& path);

struct ConfigurationSpec {
  std::string config_id;
  std::string description;
  std::filesystem::path records_path;  // resolved against the manifest directory
};

struct AblationManifest {
  std::vector<ConfigurationSpec> configurations;
  std::vector<std::string> classes;  // optional pinned order
};

AblationManifest load_manifest(const std::filesystem::path& path);

struct ConfigurationResult {
  ConfigurationSpec spec;
  std::size_t record_count = 0;
  MetricsReport metrics;
  KappaResult kappa;
  std::string band;
};

struct AblationOutcome {
  std::vector<ConfigurationResult> results;
  std::filesystem::path csv_path;
  std::filesystem::path html_path;
};

/// Errors while loading a configuration name it in the message.
std::vector<ConfigurationResult> evaluate_manifest(const AblationManifest& manifest);

std::string ablation_csv(const std::vector<ConfigurationResult>& results);
std::string ablation_html(const std::vector<ConfigurationResult>& results);

/// Evaluates every configuration and writes ablation_report.csv and
/// ablation_report.html into `out_dir`.
AblationOutcome run_ablation(const AblationManifest& manifest, const std::filesystem::path& out_dir);

}  // namespace defect_sage::eval

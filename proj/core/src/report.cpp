#include "defect_sage/report.hpp"

#include "defect_sage/text.hpp"

#include <fmt/format.h>

namespace defect_sage {

namespace {

using text::html_escape;

constexpr std::string_view kStyle =
    "body{font-family:system-ui,sans-serif;max-width:60em;margin:2em auto;color:#222}"
    ".msg{border-left:4px solid #ccc;margin:.8em 0;padding:.3em .8em}"
    ".user{border-color:#2b6cb0;background:#eef4fb}.agent{border-color:#888}"
    ".meta{font-size:.8em;color:#666}pre{white-space:pre-wrap;margin:.3em 0}"
    ".badge{display:inline-block;font-size:.75em;padding:1px 6px;border-radius:3px;margin-left:.5em}"
    ".ontology{background:#c6f6d5;color:#22543d}.external_retrieval{background:#feebc8;color:#7b341e}"
    "table{border-collapse:collapse;margin:.4em 0}th,td{border:1px solid #bbb;padding:3px 8px}"
    ".flag{color:#c53030}";

std::string badge(kb::SourceOrigin origin) {
  return fmt::format("<span class=\"badge {}\">{}</span>", kb::to_string(origin), kb::display_label(origin));
}

std::string alignment_table(const nlohmann::json& report) {
  if (!report.contains("hypotheses") || !report["hypotheses"].is_array()) return {};
  std::string s = "<table><tr><th>Defect</th><th>Score</th><th>Percent</th><th>Visual evidence</th></tr>";
  for (const auto& h : report["hypotheses"]) {
    const double score = h.value("score", 0.0);
    const bool matched = h.value("matched", false);
    s += fmt::format("<tr><td>{}{}</td><td>{:.2f}</td><td>{:.0f}%</td><td>{}</td></tr>",
                     html_escape(h.value("defect", std::string{})),
                     matched ? "" : " <span class=\"flag\">(not in knowledge base)</span>", score, score * 100.0,
                     html_escape(h.value("evidence", std::string{})));
  }
  return s + "</table>";
}

}  // namespace

std::string export_report(const SessionTranscript& transcript) {
  if (transcript.empty()) throw Error("cannot export an empty transcript");

  std::string body;
  std::string audit;
  std::size_t audit_rows = 0;
  for (const auto& m : transcript.entries()) {
    body += fmt::format("<div class=\"msg {}\"><div class=\"meta\">{} &middot; {} &middot; {}{}</div>",
                        to_string(m.role), to_string(m.role), to_string(m.kind), html_escape(m.timestamp),
                        m.source_origin ? badge(*m.source_origin) : "");
    body += "<pre>" + html_escape(m.text) + "</pre>";
    if (m.kind == MessageKind::alignment_report && m.data.contains("report")) {
      body += alignment_table(m.data["report"]);
    }
    if (!m.attachments.empty()) {
      body += "<div class=\"meta\">Attachments:";
      for (const auto& a : m.attachments) body += " " + html_escape(a);
      body += "</div>";
    }
    body += "</div>\n";

    if (m.kind == MessageKind::audit && m.data.contains("records")) {
      for (const auto& r : m.data["records"]) {
        ++audit_rows;
        audit += fmt::format("<tr><td>{}</td><td>{}</td><td>{}</td><td>{}</td><td>{}</td></tr>\n",
                             html_escape(r.value("source_title", std::string{})),
                             html_escape(r.value("source_url", std::string{})),
                             html_escape(r.value("action", std::string{})),
                             html_escape(r.value("reason", std::string{})),
                             html_escape(r.value("timestamp", std::string{})));
      }
    }
  }

  std::string out =
      "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n"
      "<title>LPBF defect session report</title>\n<style>";
  out += kStyle;
  out += "</style>\n</head>\n<body>\n<h1>LPBF defect session report</h1>\n<h2>Transcript</h2>\n";
  out += body;
  out += "<h2>Audit trail</h2>\n";
  if (audit_rows == 0) {
    out += "<p>No external sources were retrieved in this session.</p>\n";
  } else {
    out += "<table>\n<tr><th>Title</th><th>Source</th><th>Action</th><th>Reason</th><th>Time</th></tr>\n";
    out += audit;
    out += "</table>\n";
  }
  out += "</body>\n</html>\n";
  return out;
}

}  // namespace defect_sage

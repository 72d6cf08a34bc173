#include "engine_setup.hpp"

#include <defect_sage/adapters.hpp>
#include <defect_sage/api_server.hpp>
#include <defect_sage/evaluation.hpp>
#include <defect_sage/report.hpp>
#include <defect_sage/text.hpp>

#include <CLI11.hpp>
#include <fmt/format.h>

#include <unistd.h>

#include <fstream>
#include <iostream>

namespace ds = defect_sage;

namespace {

void add_engine_options(CLI::App* cmd, ds::tools::EngineOptions& o) {
  cmd->add_option("--kb", o.kb_path, "Knowledge base JSON (default: $DEFECT_SAGE_KB or the shipped KB)");
  cmd->add_option("--descriptors", o.descriptors_path, "Descriptor table JSON (default: next to the KB)");
  cmd->add_option("--search-transcript", o.search_transcript, "Replay search results from a recorded transcript");
  cmd->add_option("--text-transcript", o.text_transcript, "Replay summary model output from a recorded transcript");
  cmd->add_option("--vision-transcript", o.vision_transcript, "Replay multimodal output from a recorded transcript");
  cmd->add_option("--fixed-clock", o.fixed_clock, "Stamp every message with this timestamp");
  cmd->add_flag("--offline", o.offline, "Knowledge base only: disable retrieval and image analysis");
}

void print(const std::vector<ds::Message>& messages) {
  for (const auto& m : messages) std::cout << m.text << "\n\n";
  std::cout.flush();
}

void write_file(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ds::Error("cannot write " + path);
  out << body;
}

int run_repl(const ds::tools::EngineOptions& options, const std::string& material,
             const std::optional<std::string>& save_path) {
  auto loaded = ds::tools::load_engine(options);
  loaded.config.default_material = material;
  ds::session::Session session(loaded.engine, loaded.config);
  print(session.start());

  const bool interactive = ::isatty(STDIN_FILENO) != 0;
  std::string line;
  while (true) {
    if (interactive) std::cout << "> " << std::flush;
    if (!std::getline(std::cin, line)) break;
    const auto trimmed = ds::text::normalize_whitespace(line);
    if (trimmed == "quit" || trimmed == "exit") break;

    ds::session::Input input = ds::session::Input::from_text(line);
    if (session.state() == ds::session::SessionState::ImageFlow_AwaitUpload && !trimmed.empty() &&
        std::filesystem::is_regular_file(trimmed)) {
      ds::session::ImageUpload upload;
      upload.bytes = ds::read_file_bytes(trimmed);
      upload.filename = std::filesystem::path(trimmed).filename().string();
      input = ds::session::Input::from_image(std::move(upload));
    }
    const auto out = session.submit(input);
    print(out);
    for (const auto& m : out) {
      if (m.kind != ds::MessageKind::export_request) continue;
      const auto file = m.data.value("filename", std::string("defect_report.html"));
      write_file(file, ds::export_report(session.transcript()));
      std::cout << "Report written to " << file << "\n\n";
    }
  }
  if (save_path) session.transcript().save(*save_path);
  return 0;
}

int run_serve(const ds::tools::EngineOptions& options, const std::string& addr) {
  auto loaded = ds::tools::load_engine(options);
  loaded.config.listen_address = addr;
  const auto [host, port] = ds::api::parse_listen_address(addr);
  ds::api::ApiServer server(loaded.engine, loaded.config);
  const int bound = server.bind(host, port);
  std::cout << fmt::format("defect-sage listening on http://{}:{}", host, bound) << std::endl;
  server.listen();
  return 0;
}

int run_eval(const std::string& manifest_path, const std::string& out_dir) {
  const auto manifest = ds::eval::load_manifest(manifest_path);
  const auto outcome = ds::eval::run_ablation(manifest, out_dir);
  std::cout << ds::eval::ablation_csv(outcome.results);
  std::cerr << "wrote " << outcome.csv_path.string() << " and " << outcome.html_path.string() << "\n";
  return 0;
}

int run_export(const std::string& session_path, const std::string& out_path) {
  const auto transcript = ds::SessionTranscript::load(session_path);
  write_file(out_path, ds::export_report(transcript));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LPBF defect decision support"};
  app.set_version_flag("--version", "defect-sage 0.1.0");
  app.require_subcommand(1);

  ds::tools::EngineOptions engine_options;
  std::string material = "IN625";
  std::optional<std::string> save_session;
  auto* repl = app.add_subcommand("repl", "Interactive terminal session");
  add_engine_options(repl, engine_options);
  repl->add_option("--material", material, "Default material for mitigation guidance");
  repl->add_option("--save-session", save_session, "Write the session transcript (JSON) on exit");

  std::string addr = "127.0.0.1:8080";
  auto* serve = app.add_subcommand("serve", "HTTP API for browser clients");
  add_engine_options(serve, engine_options);
  serve->add_option("--addr", addr, "Listen address HOST:PORT");

  std::string manifest;
  std::string out_dir = ".";
  auto* eval = app.add_subcommand("eval", "Metrics and kappa over an ablation manifest");
  eval->add_option("--manifest", manifest, "Manifest JSON")->required();
  eval->add_option("--out", out_dir, "Directory for ablation_report.csv/.html");

  std::string session_file;
  std::string html_out;
  auto* exp = app.add_subcommand("export", "Render a saved session transcript as HTML");
  exp->add_option("--session", session_file, "Transcript JSON written by repl --save-session")->required();
  exp->add_option("--out", html_out, "Output HTML file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (repl->parsed()) return run_repl(engine_options, material, save_session);
    if (serve->parsed()) return run_serve(engine_options, addr);
    if (eval->parsed()) return run_eval(manifest, out_dir);
    if (exp->parsed()) return run_export(session_file, html_out);
  } catch (const std::exception& e) {
    std::cerr << "defect-sage: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

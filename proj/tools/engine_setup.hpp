#pragma once

#include <defect_sage/session.hpp>

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

namespace defect_sage::tools {

struct EngineOptions {
  std::optional<std::filesystem::path> kb_path;
  std::optional<std::filesystem::path> descriptors_path;
  std::optional<std::filesystem::path> search_transcript;
  std::optional<std::filesystem::path> text_transcript;
  std::optional<std::filesystem::path> vision_transcript;
  std::optional<std::string> fixed_clock;
  bool offline = false;
};

/// --kb, then $DEFECT_SAGE_KB, then the shipped knowledge base.
std::filesystem::path resolve_kb_path(const std::optional<std::filesystem::path>& explicit_path);

/// Descriptor table next to the knowledge base unless given.
std::filesystem::path resolve_descriptors_path(const std::optional<std::filesystem::path>& explicit_path,
                                               const std::filesystem::path& kb_path);

struct LoadedEngine {
  std::shared_ptr<const session::Engine> engine;
  session::ServiceConfig config;
};

/// Recorded transcripts replace live clients. Without one, a client reports
/// missing credentials, or that no live client is built when the key is set.
LoadedEngine load_engine(const EngineOptions& options);

}  // namespace defect_sage::tools

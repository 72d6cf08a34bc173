#include "engine_setup.hpp"

#include <defect_sage/adapters.hpp>

namespace defect_sage::tools {

namespace {

// Stand-ins used when no recorded transcript is supplied. They surface the
// credential state instead of silently returning nothing.
class UnavailableSearchClient final : public SearchClient {
 public:
  explicit UnavailableSearchClient(std::string env_var) : env_var_(std::move(env_var)) {}
  std::vector<EvidenceItem> search(const SearchRequest&) override {
    throw TransportError("no live search client in this build; pass --search-transcript");
  }
  bool configured() const override { return env_value(env_var_.c_str()).has_value(); }
  bool concurrent_safe() const override { return true; }

 private:
  std::string env_var_;
};

class UnavailableTextModel final : public TextModel {
 public:
  explicit UnavailableTextModel(std::string env_var) : env_var_(std::move(env_var)) {}
  std::string complete(const TextRequest&) override { throw AdapterError(reason()); }
  bool concurrent_safe() const override { return true; }

 private:
  std::string reason() const {
    if (!env_value(env_var_.c_str())) return MissingCredentialsError(env_var_).what();
    return "no live text model in this build; pass --text-transcript";
  }
  std::string env_var_;
};

class UnavailableVisionModel final : public MultimodalAdapter {
 public:
  explicit UnavailableVisionModel(std::string env_var) : env_var_(std::move(env_var)) {}
  std::string generate(const VisionRequest&) override {
    if (!env_value(env_var_.c_str())) throw AdapterError(MissingCredentialsError(env_var_).what());
    throw AdapterError("no live multimodal model in this build; pass --vision-transcript");
  }
  bool concurrent_safe() const override { return true; }

 private:
  std::string env_var_;
};

}  // namespace

std::filesystem::path resolve_kb_path(const std::optional<std::filesystem::path>& explicit_path) {
  if (explicit_path) return *explicit_path;
  if (auto env = env_value("DEFECT_SAGE_KB")) return *env;
  const std::filesystem::path installed = std::filesystem::path(DEFECT_SAGE_INSTALLED_KB_DIR) / "lpbf_defects.json";
  if (std::filesystem::exists(installed)) return installed;
  return std::filesystem::path(DEFECT_SAGE_SOURCE_KB_DIR) / "lpbf_defects.json";
}

std::filesystem::path resolve_descriptors_path(const std::optional<std::filesystem::path>& explicit_path,
                                               const std::filesystem::path& kb_path) {
  if (explicit_path) return *explicit_path;
  return kb_path.parent_path() / "descriptors.json";
}

LoadedEngine load_engine(const EngineOptions& options) {
  LoadedEngine out;
  auto& config = out.config;
  const auto kb_path = resolve_kb_path(options.kb_path);
  const auto descriptors_path = resolve_descriptors_path(options.descriptors_path, kb_path);
  config.kb_path = kb_path.string();
  config.descriptors_path = descriptors_path.string();
  config.external_retrieval_enabled = !options.offline;
  config.image_flow_enabled = !options.offline;

  auto engine = std::make_shared<session::Engine>();
  engine->kb = std::make_shared<const kb::KnowledgeBase>(kb::load_knowledge_base_file(kb_path));
  engine->descriptors = vision::load_descriptors_file(descriptors_path, *engine->kb);
  if (options.fixed_clock) engine->clock = fixed_clock(*options.fixed_clock);

  if (!options.offline) {
    if (options.search_transcript) {
      engine->search = std::make_shared<RecordedSearchClient>(RecordedSearchClient::from_file(*options.search_transcript));
    } else {
      engine->search = std::make_shared<UnavailableSearchClient>(config.search_env_var);
    }
    if (options.text_transcript) {
      engine->text_model = std::make_shared<RecordedTextModel>(RecordedTextModel::from_file(*options.text_transcript));
    } else {
      engine->text_model = std::make_shared<UnavailableTextModel>(config.model_env_var);
    }
    if (options.vision_transcript) {
      engine->vision =
          std::make_shared<RecordedMultimodalAdapter>(RecordedMultimodalAdapter::from_file(*options.vision_transcript));
    } else {
      engine->vision = std::make_shared<UnavailableVisionModel>(config.model_env_var);
    }
  }
  out.engine = std::move(engine);
  return out;
}

}  // namespace defect_sage::tools

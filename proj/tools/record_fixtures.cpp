// Builds the recorded transcripts under fixtures/ from a readable script.
//
// Search entries are keyed directly from the channel queries. Summary and
// vision entries are captured by running the real exploration and assessment
// code against scripted adapters, so the stored keys always match the prompts
// the engine builds. Golden session transcripts are then replayed from the
// freshly written recordings.

#include "engine_setup.hpp"

#include <defect_sage/adapters.hpp>
#include <defect_sage/evidence.hpp>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <fstream>
#include <iostream>

namespace ds = defect_sage;
using Json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::string_view kMitigationPrompt = "Summarize process-parameter guidance";

Json read_json(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ds::Error("cannot open " + p.string());
  return Json::parse(in);
}

void write_json(const fs::path& p, const Json& j) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw ds::Error("cannot write " + p.string());
  out << j.dump(2) << "\n";
}

class ScriptedTextModel final : public ds::TextModel {
 public:
  explicit ScriptedTextModel(const Json& script) : script_(script) {}
  std::string complete(const ds::TextRequest& request) override {
    const bool mitigation = request.prompt.rfind(kMitigationPrompt, 0) == 0;
    for (const auto& e : script_) {
      const bool wants_mitigation = e.value("focus", "overview") == "mitigation";
      if (wants_mitigation != mitigation) continue;
      if (request.prompt.find("'" + e.at("defect").get<std::string>() + "'") == std::string::npos) continue;
      auto response = e.at("response").get<std::string>();
      recorded_[ds::text_request_key(request)] = {{"response", response}};
      return response;
    }
    throw ds::AdapterError("no scripted summary for prompt");
  }
  const Json& recorded() const { return recorded_; }

 private:
  const Json& script_;
  Json recorded_ = Json::object();
};

class OneShotVision final : public ds::MultimodalAdapter {
 public:
  OneShotVision(std::string response, Json& sink) : response_(std::move(response)), sink_(sink) {}
  std::string generate(const ds::VisionRequest& r) override {
    sink_[ds::vision_request_key(r.model_id, r.prompt, r.image)] = {{"response", response_}};
    return response_;
  }

 private:
  std::string response_;
  Json& sink_;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Regenerate recorded fixtures"};
  std::string script_path;
  std::string kb_path;
  std::string descriptors_path;
  app.add_option("--script", script_path, "Readable recording script")->required();
  app.add_option("--kb", kb_path, "Knowledge base JSON")->required();
  app.add_option("--descriptors", descriptors_path, "Descriptor table JSON")->required();
  CLI11_PARSE(app, argc, argv);

  try {
    const auto script = read_json(script_path);
    const fs::path root = fs::path(script_path).parent_path().parent_path();
    const fs::path search_out = root / script.at("outputs").at("search").get<std::string>();
    const fs::path text_out = root / script.at("outputs").at("text").get<std::string>();
    const fs::path vision_out = root / script.at("outputs").at("vision").get<std::string>();

    ds::tools::EngineOptions options;
    options.kb_path = kb_path;
    options.descriptors_path = descriptors_path;
    options.offline = true;
    auto base = ds::tools::load_engine(options);
    const auto& kb = *base.engine->kb;

    Json search = Json::object();
    for (const auto& e : script.at("search")) {
      const auto channel = ds::parse_channel(e.at("channel").get<std::string>());
      if (!channel) throw ds::Error("bad channel in script");
      const auto defect = e.at("defect").get<std::string>();
      Json items = Json::array();
      for (auto item : e.at("items")) {
        item["channel"] = e.at("channel");
        items.push_back(item);
      }
      search[ds::search_request_key({*channel, ds::evidence::channel_query(*channel, defect)})] = {{"items", items}};
    }
    write_json(search_out, {{"entries", search}});

    auto engine = std::make_shared<ds::session::Engine>(*base.engine);
    engine->clock = ds::fixed_clock(script.value("clock", "2025-01-01T00:00:00.000Z"));
    engine->search = std::make_shared<ds::RecordedSearchClient>(ds::RecordedSearchClient::from_file(search_out));
    auto scripted = std::make_shared<ScriptedTextModel>(script.at("text"));
    engine->text_model = scripted;
    auto config = base.config;
    config.external_retrieval_enabled = true;
    config.image_flow_enabled = true;
    for (const auto& e : script.at("text")) {
      const auto defect = e.at("defect").get<std::string>();
      const auto material = e.at("material").get<std::string>();
      ds::session::ExploreOptions explore;
      explore.augment = e.value("focus", "overview") == "overview";
      ds::session::explore_defect(defect, material, *engine, config, explore);
    }
    write_json(text_out, {{"entries", scripted->recorded()}});

    Json vision = Json::object();
    for (const auto& e : script.at("vision")) {
      OneShotVision adapter(e.at("response").get<std::string>(), vision);
      ds::vision::AssessmentInput in;
      in.image = ds::read_file_bytes(root / e.at("image").get<std::string>());
      in.image_ref = fs::path(e.at("image").get<std::string>()).filename().string();
      if (e.contains("hypothesis") && e["hypothesis"].is_string()) in.hypothesis = e["hypothesis"].get<std::string>();
      if (e.contains("material") && e["material"].is_string()) in.material = e["material"].get<std::string>();
      ds::vision::ModelSelector selector{{config.fast_model, config.pro_model}, 0};
      ds::vision::assess_image(in, adapter, ds::GenerationConfig::locked(), selector, engine->descriptors, kb);
    }
    write_json(vision_out, {{"entries", vision}});

    engine->text_model = std::make_shared<ds::RecordedTextModel>(ds::RecordedTextModel::from_file(text_out));
    engine->vision = std::make_shared<ds::RecordedMultimodalAdapter>(ds::RecordedMultimodalAdapter::from_file(vision_out));
    for (const auto& s : script.at("sessions")) {
      ds::session::Session session(engine, config);
      session.start();
      for (const auto& input : s.at("inputs")) {
        if (input.is_string()) {
          session.submit(ds::session::Input::from_text(input.get<std::string>()));
        } else {
          ds::session::ImageUpload upload;
          const auto image = input.at("image").get<std::string>();
          upload.bytes = ds::read_file_bytes(root / image);
          upload.filename = fs::path(image).filename().string();
          session.submit(ds::session::Input::from_image(std::move(upload)));
        }
      }
      const fs::path out = root / s.at("transcript").get<std::string>();
      fs::create_directories(out.parent_path());
      session.transcript().save(out);
      std::cout << "wrote " << out.string() << " (" << session.transcript().size() << " entries)\n";
    }
    std::cout << "wrote " << search_out.string() << ", " << text_out.string() << ", " << vision_out.string() << "\n";
  } catch (const std::exception& e) {
    std::cerr << "record_fixtures: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

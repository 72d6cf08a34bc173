#include "support.hpp"

#include <defect_sage/adapters.hpp>

#include <fstream>
#include <random>
#include <sstream>
#include <unistd.h>

namespace ds_test {

std::filesystem::path source_dir() { return DEFECT_SAGE_TEST_SOURCE_DIR; }
std::filesystem::path kb_path() { return source_dir() / "kb" / "lpbf_defects.json"; }
std::filesystem::path descriptors_path() { return source_dir() / "kb" / "descriptors.json"; }
std::filesystem::path fixture(const std::string& relative) { return source_dir() / "fixtures" / relative; }

std::shared_ptr<const ds::kb::KnowledgeBase> shipped_kb_ptr() {
  static const auto kb = std::make_shared<const ds::kb::KnowledgeBase>(ds::kb::load_knowledge_base_file(kb_path()));
  return kb;
}

const ds::kb::KnowledgeBase& shipped_kb() { return *shipped_kb_ptr(); }

const std::vector<ds::vision::DefectDescriptor>& shipped_descriptors() {
  static const auto d = ds::vision::load_descriptors_file(descriptors_path(), shipped_kb());
  return d;
}

std::shared_ptr<ds::session::Engine> offline_engine() {
  auto e = std::make_shared<ds::session::Engine>();
  e->kb = shipped_kb_ptr();
  e->descriptors = shipped_descriptors();
  e->clock = ds::fixed_clock(kFixtureClock);
  return e;
}

std::shared_ptr<ds::session::Engine> recorded_engine() {
  auto e = offline_engine();
  e->search = std::make_shared<ds::RecordedSearchClient>(
      ds::RecordedSearchClient::from_file(fixture("recorded/search.json")));
  e->text_model =
      std::make_shared<ds::RecordedTextModel>(ds::RecordedTextModel::from_file(fixture("recorded/text.json")));
  e->vision = std::make_shared<ds::RecordedMultimodalAdapter>(
      ds::RecordedMultimodalAdapter::from_file(fixture("recorded/vision.json")));
  return e;
}

namespace {

struct TrapSearch : ds::SearchClient {
  explicit TrapSearch(std::shared_ptr<std::atomic<int>> c) : calls(std::move(c)) {}
  std::vector<ds::EvidenceItem> search(const ds::SearchRequest&) override {
    ++*calls;
    throw ds::TransportError("network disabled");
  }
  std::shared_ptr<std::atomic<int>> calls;
};

struct TrapText : ds::TextModel {
  explicit TrapText(std::shared_ptr<std::atomic<int>> c) : calls(std::move(c)) {}
  std::string complete(const ds::TextRequest&) override {
    ++*calls;
    throw ds::TransportError("network disabled");
  }
  std::shared_ptr<std::atomic<int>> calls;
};

struct TrapVision : ds::MultimodalAdapter {
  explicit TrapVision(std::shared_ptr<std::atomic<int>> c) : calls(std::move(c)) {}
  std::string generate(const ds::VisionRequest&) override {
    ++*calls;
    throw ds::TransportError("network disabled");
  }
  std::shared_ptr<std::atomic<int>> calls;
};

}  // namespace

std::shared_ptr<ds::session::Engine> trapped_engine(std::shared_ptr<std::atomic<int>> calls) {
  auto e = offline_engine();
  e->search = std::make_shared<TrapSearch>(calls);
  e->text_model = std::make_shared<TrapText>(calls);
  e->vision = std::make_shared<TrapVision>(calls);
  return e;
}

ds::session::ServiceConfig online_config() {
  ds::session::ServiceConfig c;
  c.kb_path = kb_path().string();
  c.descriptors_path = descriptors_path().string();
  return c;
}

ds::session::ServiceConfig offline_config() {
  auto c = online_config();
  c.external_retrieval_enabled = false;
  c.image_flow_enabled = false;
  return c;
}

std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("defect_sage_test_" + std::to_string(::getpid())) / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

const std::map<ds::session::SessionState, std::set<ds::session::SessionState>>& allowed_transitions() {
  using S = ds::session::SessionState;
  static const auto table = [] {
    const std::set<S> from_menu{S::MainMenu,
                                S::ClassifyFlow_AwaitInput,
                                S::ClassifyFlow_AwaitConfirm,
                                S::ClassifyFlow_AwaitSubtype,
                                S::ExploreFlow_AwaitSelection,
                                S::ExploreFlow_ShowingDefect,
                                S::ImageFlow_AwaitHypothesisAnswer,
                                S::Exporting};
    std::map<S, std::set<S>> t{
        {S::Home, from_menu},
        {S::MainMenu, from_menu},
        {S::ClassifyFlow_AwaitInput,
         {S::ClassifyFlow_AwaitConfirm, S::ClassifyFlow_AwaitSubtype, S::ExploreFlow_ShowingDefect}},
        {S::ClassifyFlow_AwaitConfirm,
         {S::ClassifyFlow_AwaitInput, S::ClassifyFlow_AwaitSubtype, S::ExploreFlow_ShowingDefect}},
        {S::ClassifyFlow_AwaitSubtype, {S::ExploreFlow_ShowingDefect}},
        {S::ExploreFlow_AwaitSelection, {S::ExploreFlow_ShowingDefect}},
        {S::ExploreFlow_ShowingDefect, {S::ExploreFlow_AwaitAugment, S::MainMenu}},
        {S::ExploreFlow_AwaitAugment, {S::ExploreFlow_AwaitCausal}},
        {S::ExploreFlow_AwaitCausal, {S::MainMenu}},
        {S::ImageFlow_AwaitHypothesisAnswer, {S::ImageFlow_AwaitUpload}},
        {S::ImageFlow_AwaitUpload, {S::MainMenu}},
        {S::Exporting, {S::MainMenu}},
    };
    for (auto& [from, to] : t) {
      to.insert(from);
      to.insert(S::Home);
    }
    return t;
  }();
  return table;
}

bool is_prompt(ds::MessageKind k) {
  return k == ds::MessageKind::menu || k == ds::MessageKind::question_choice ||
         k == ds::MessageKind::question_text || k == ds::MessageKind::question_yes_no;
}

FuzzOutcome fuzz_session(const ds::session::Engine& engine, const ds::session::ServiceConfig& config,
                         std::uint64_t seed, int steps) {
  namespace s = ds::session;
  static const std::vector<std::string> pool{
      "0",         "1",       "2",        "3",        "4",       "5",       "6",          "7",
      "27",        "28",      "-1",       "",         " ",       "yes",     "no",         "y",
      "N",         "maybe",   "crackng",  "porsity",  "Cracking", "Porosity", "Balling", "Keyhole porosity",
      "IN625",     "Ti-6Al-4V", "report", "What is porosity?", "Main", "Other", "\xff\xfe", "🔥",
      "a\nb",      std::string(300, 'x')};
  std::vector<std::string> images;
  for (const auto* name : {"defect_3.png", "lof_micrograph.png"}) {
    images.push_back(ds::read_file_bytes(fixture(std::string("images/") + name)));
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  std::uniform_int_distribution<int> kind(0, 19);
  std::uniform_int_distribution<int> byte(0, 255);

  FuzzOutcome r;
  auto fail = [&r](int& counter, const std::string& what) {
    ++counter;
    if (r.first_failure.empty()) r.first_failure = what;
  };
  auto ctx = s::initial_context(config);
  s::greeting(ctx, engine);
  const auto& table = allowed_transitions();
  for (int i = 0; i < steps; ++i) {
    s::Input input;
    const int k = kind(rng);
    if (k <= 1) {
      s::ImageUpload u;
      if (k == 0) {
        const auto which = static_cast<std::size_t>(byte(rng)) % images.size();
        u.bytes = images[which];
        u.filename = which == 0 ? "defect_3.png" : "lof_micrograph.png";
        if (byte(rng) % 2) u.hypothesis = "Keyhole porosity";
      } else {
        for (int b = byte(rng) % 16; b >= 0; --b) u.bytes += static_cast<char>(byte(rng));
        u.hypothesis = pool[pick(rng)];
        u.material = pool[pick(rng)];
      }
      input = s::Input::from_image(std::move(u));
    } else if (k == 2) {
      std::string junk;
      for (int b = byte(rng) % 12; b > 0; --b) junk += static_cast<char>(byte(rng));
      input = s::Input::from_text(junk);
    } else {
      input = s::Input::from_text(pool[pick(rng)]);
    }
    const auto before = ctx.state;
    const auto where = "step " + std::to_string(i) + " in " + std::string(s::to_string(before));
    ++r.steps;
    std::vector<ds::Message> out;
    try {
      out = s::handle_input(ctx, input, engine, config);
    } catch (const std::exception& e) {
      fail(r.crashes, where + ": threw " + e.what());
      ctx = s::initial_context(config);
      continue;
    }
    const auto allowed = table.find(before);
    if (static_cast<int>(ctx.state) < 0 || static_cast<int>(ctx.state) >= s::kStateCount ||
        allowed == table.end() || !allowed->second.count(ctx.state)) {
      fail(r.undefined_transitions, where + ": moved to " + std::string(s::to_string(ctx.state)));
    }
    if (out.empty() || !is_prompt(out.back().kind)) fail(r.unprompted_turns, where + ": turn did not end on a prompt");
  }
  return r;
}

}  // namespace ds_test

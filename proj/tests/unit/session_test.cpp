#include "support.hpp"

#include <defect_sage/adapters.hpp>
#include <defect_sage/session.hpp>
#include <defect_sage/text.hpp>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

namespace ds = defect_sage;
namespace s = defect_sage::session;
using State = s::SessionState;

namespace {

bool contains_line(const std::vector<ds::Message>& out, const std::string& needle) {
  for (const auto& m : out) {
    if (m.text.find(needle) != std::string::npos) return true;
  }
  return false;
}

s::Input text(const std::string& t) { return s::Input::from_text(t); }

s::Input image(const std::string& name) {
  s::ImageUpload u;
  u.bytes = ds::read_file_bytes(ds_test::fixture("images/" + name));
  u.filename = name;
  return s::Input::from_image(std::move(u));
}

// Replays one scripted session from the recording script.
ds::SessionTranscript replay(const nlohmann::json& script) {
  s::Session session(ds_test::recorded_engine(), ds_test::online_config());
  session.start();
  for (const auto& input : script.at("inputs")) {
    if (input.is_string()) {
      session.submit(text(input.get<std::string>()));
    } else {
      const std::string path = input.at("image").get<std::string>();
      session.submit(image(std::filesystem::path(path).filename().string()));
    }
  }
  return session.transcript();
}

}  // namespace

TEST(Session, GreetingShowsBannerAndMenu) {
  s::Session session(ds_test::offline_engine(), ds_test::offline_config());
  const auto& g = session.start();
  ASSERT_EQ(g.size(), 2u);
  EXPECT_EQ(g[0].text, "LPBF Defect Agent is (Smart NLP Search & Image Analysis) Ready!");
  EXPECT_EQ(g[1].kind, ds::MessageKind::menu);
  EXPECT_EQ(session.state(), State::Home);
}

TEST(Session, MainMenuLayout) {
  const auto menu = s::render_main_menu();
  const auto lines = ds::text::split_lines(menu);
  ASSERT_EQ(lines.size(), 7u);
  EXPECT_EQ(lines[0], "[1] → Show main defect types");
  EXPECT_EQ(lines[5], "[6] → 📷 Analyze User Image (AI Vision)");
  EXPECT_EQ(lines[6], "[0] → Back to Home");
}

TEST(Session, ExploreMenuIsAlphabetical) {
  s::Session session(ds_test::offline_engine(), ds_test::offline_config());
  const auto out = session.submit(text("4"));
  ASSERT_EQ(session.state(), State::ExploreFlow_AwaitSelection);
  const auto& options = session.context().pending_options;
  ASSERT_EQ(options.size(), 27u);
  EXPECT_EQ(options.front(), "Anisotropy");
  EXPECT_EQ(options[1], "Balling");
  EXPECT_EQ(options.back(), "Warping");
  EXPECT_TRUE(std::is_sorted(options.begin(), options.end()));
  EXPECT_TRUE(contains_line(out, "[1] Anisotropy"));
  EXPECT_TRUE(contains_line(out, "[27] Warping"));
}

TEST(Session, FuzzyClassifyAndDisambiguate) {
  s::Session session(ds_test::offline_engine(), ds_test::offline_config());
  session.submit(text("3"));
  auto out = session.submit(text("crackng"));
  EXPECT_EQ(session.state(), State::ClassifyFlow_AwaitConfirm);
  EXPECT_TRUE(contains_line(out, "Interpreted as 'Cracking'. Proceed? (yes/no)"));
  out = session.submit(text("yes"));
  EXPECT_EQ(session.state(), State::ClassifyFlow_AwaitSubtype);
  EXPECT_TRUE(contains_line(out, "Multiple types of 'Cracking':"));
  EXPECT_TRUE(contains_line(out, "Enter the number of your choice:"));
  EXPECT_EQ(session.context().pending_options.size(), 6u);
  out = session.submit(text("9"));
  EXPECT_EQ(session.state(), State::ClassifyFlow_AwaitSubtype);
  out = session.submit(text("1"));
  EXPECT_EQ(session.state(), State::ExploreFlow_ShowingDefect);
  EXPECT_TRUE(contains_line(out, "Exploring: Solidification cracking"));
}

TEST(Session, RejectedInterpretationAsksAgain) {
  s::Session session(ds_test::offline_engine(), ds_test::offline_config());
  session.submit(text("3"));
  session.submit(text("porsity"));
  session.submit(text("no"));
  EXPECT_EQ(session.state(), State::ClassifyFlow_AwaitInput);
  session.submit(text("Gas porosity"));
  EXPECT_EQ(session.state(), State::ExploreFlow_ShowingDefect);
}

TEST(Session, ExploreCardAndCuratedGuidance) {
  s::Session session(ds_test::recorded_engine(), ds_test::online_config());
  session.submit(text("4"));
  auto out = session.submit(text("2"));
  EXPECT_TRUE(contains_line(out, "Exploring: Balling"));
  EXPECT_TRUE(contains_line(out, "Category: Surface defects → Main"));
  out = session.submit(text(""));
  ASSERT_FALSE(out.empty());
  EXPECT_EQ(out[0].kind, ds::MessageKind::mitigation);
  EXPECT_EQ(out[0].source_origin, ds::kb::SourceOrigin::ontology);
  EXPECT_TRUE(contains_line(out, "Layer Thickness: Use thinner layers (30–50 μm)"));
  EXPECT_EQ(session.state(), State::ExploreFlow_AwaitAugment);
}

TEST(Session, OtherMaterialRoutesToExternalRetrieval) {
  s::Session session(ds_test::recorded_engine(), ds_test::online_config());
  session.submit(text("Balling"));
  ASSERT_EQ(session.state(), State::ExploreFlow_ShowingDefect);
  const auto out = session.submit(text("Ti-6Al-4V"));
  bool external = false;
  for (const auto& m : out) {
    if (m.kind == ds::MessageKind::mitigation || m.kind == ds::MessageKind::summary) {
      external |= m.source_origin == ds::kb::SourceOrigin::external_retrieval;
      EXPECT_NE(m.source_origin, ds::kb::SourceOrigin::ontology);
    }
  }
  EXPECT_TRUE(external);
}

TEST(Session, ImageOutsideUploadIsRejected) {
  s::Session session(ds_test::recorded_engine(), ds_test::online_config());
  const auto out = session.submit(image("defect_3.png"));
  EXPECT_EQ(session.state(), State::Home);
  EXPECT_TRUE(contains_line(out, "No image was expected here"));
  const auto& last = session.transcript().entries();
  EXPECT_EQ(last[2].text, "[image] defect_3.png");
  EXPECT_NE(last[2].attachments.at(0).find("sha256 "), std::string::npos);
}

TEST(Session, ImageFlowWithHypothesis) {
  s::Session session(ds_test::recorded_engine(), ds_test::online_config());
  session.submit(text("6"));
  EXPECT_EQ(session.state(), State::ImageFlow_AwaitHypothesisAnswer);
  session.submit(text("Keyhole porosity"));
  EXPECT_EQ(session.state(), State::ImageFlow_AwaitUpload);
  const auto out = session.submit(image("defect_3.png"));
  EXPECT_EQ(session.state(), State::MainMenu);
  ASSERT_GE(out.size(), 2u);
  EXPECT_EQ(out[0].kind, ds::MessageKind::alignment_report);
  const auto& hyps = out[0].data.at("report").at("hypotheses");
  EXPECT_EQ(hyps[0].at("score").get<double>(), 0.90);
  EXPECT_EQ(hyps[1].at("score").get<double>(), 0.70);
  EXPECT_TRUE(contains_line(out, "Reduce Laser Power"));
}

TEST(Session, ImageFlowFailureReturnsToMenu) {
  auto engine = ds_test::recorded_engine();
  s::Session session(engine, ds_test::online_config());
  session.submit(text("6"));
  session.submit(text("no"));
  const auto out = session.submit(image("defect_3.png"));  // not recorded without a hypothesis
  EXPECT_EQ(session.state(), State::MainMenu);
  ASSERT_FALSE(out.empty());
  EXPECT_EQ(out.front().kind, ds::MessageKind::notice);
  EXPECT_EQ(out.front().text.rfind("Sorry, ", 0), 0u);
  EXPECT_EQ(out.back().kind, ds::MessageKind::menu);
}

TEST(Session, ExportRequest) {
  s::Session session(ds_test::offline_engine(), ds_test::offline_config());
  session.submit(text("5"));
  EXPECT_EQ(session.state(), State::Exporting);
  const auto out = session.submit(text("my_report"));
  ASSERT_FALSE(out.empty());
  EXPECT_EQ(out[0].kind, ds::MessageKind::export_request);
  EXPECT_EQ(out[0].data.at("filename"), "my_report.html");
  EXPECT_EQ(session.state(), State::MainMenu);
}

TEST(Session, ZeroReturnsHomeFromAnywhere) {
  s::Session session(ds_test::offline_engine(), ds_test::offline_config());
  session.submit(text("4"));
  session.submit(text("2"));
  session.submit(text("0"));
  EXPECT_EQ(session.state(), State::Home);
}

TEST(Session, InvalidMenuOption) {
  s::Session session(ds_test::offline_engine(), ds_test::offline_config());
  const auto out = session.submit(text("9"));
  EXPECT_TRUE(contains_line(out, "Invalid option '9'. Choose 0-6."));
  EXPECT_EQ(out.back().kind, ds::MessageKind::menu);
}

TEST(Session, YesNoParsing) {
  EXPECT_EQ(s::parse_yes_no(" YES "), true);
  EXPECT_EQ(s::parse_yes_no("n"), false);
  EXPECT_FALSE(s::parse_yes_no("maybe"));
}

TEST(Session, CausalExpansionOfBalling) {
  const auto m = s::causal_expansion(ds_test::shipped_kb(), "Balling", ds::fixed_clock("t"));
  EXPECT_NE(m.text.find("Energy density → Balling"), std::string::npos);
  EXPECT_NE(m.text.find("Balling → Surface roughness"), std::string::npos);
  EXPECT_EQ(m.source_origin, ds::kb::SourceOrigin::ontology);
}

TEST(Session, GoldenTranscriptsReplayByteIdentical) {
  const auto script = nlohmann::json::parse(ds_test::read_text(ds_test::fixture("source/recordings.json")));
  ASSERT_EQ(script.at("sessions").size(), 3u);
  for (const auto& sess : script.at("sessions")) {
    const auto path = ds_test::fixture(sess.at("transcript").get<std::string>());
    EXPECT_EQ(replay(sess).serialize(), ds_test::read_text(path)) << path;
  }
}

TEST(Session, BallingGoldenHasCategoryAndCausalLines) {
  const auto golden = ds_test::read_text(ds_test::fixture("sessions/balling_explore.json"));
  EXPECT_NE(golden.find("Category: Surface defects → Main"), std::string::npos);
  EXPECT_NE(golden.find("Energy density → Balling"), std::string::npos);
  EXPECT_NE(golden.find("Balling → Surface roughness"), std::string::npos);
}

class SessionFuzz : public ::testing::TestWithParam<bool> {};

TEST_P(SessionFuzz, RandomInputsStayWithinTransitionTable) {
  const bool online = GetParam();
  const auto engine = online ? ds_test::recorded_engine() : ds_test::offline_engine();
  const auto config = online ? ds_test::online_config() : ds_test::offline_config();
  const auto r = ds_test::fuzz_session(*engine, config, online ? 1001 : 2002, 5000);
  EXPECT_EQ(r.steps, 5000);
  EXPECT_EQ(r.crashes, 0) << r.first_failure;
  EXPECT_EQ(r.undefined_transitions, 0) << r.first_failure;
  EXPECT_EQ(r.unprompted_turns, 0) << r.first_failure;
}

TEST(SessionTable, CoversEveryState) {
  const auto& t = ds_test::allowed_transitions();
  EXPECT_EQ(t.size(), static_cast<std::size_t>(s::kStateCount));
  for (int i = 0; i < s::kStateCount; ++i) {
    const auto st = static_cast<State>(i);
    EXPECT_NE(s::to_string(st), "");
    EXPECT_TRUE(t.at(st).count(State::Home));
  }
}

INSTANTIATE_TEST_SUITE_P(Modes, SessionFuzz, ::testing::Values(true, false),
                         [](const auto& info) { return info.param ? "Online" : "Offline"; });

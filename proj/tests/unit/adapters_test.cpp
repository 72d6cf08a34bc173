#include "support.hpp"

#include <defect_sage/adapters.hpp>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <future>

namespace ds = defect_sage;
using Json = nlohmann::json;

TEST(GenerationConfig, LockedDefaults) {
  const auto c = ds::GenerationConfig::locked();
  EXPECT_EQ(c.temperature(), 0.0);
  EXPECT_EQ(c.top_p(), 0.1);
  EXPECT_EQ(c.top_k(), 1);
  EXPECT_FALSE(c.overridden());
  EXPECT_EQ(ds::GenerationConfig{}, c);
}

TEST(GenerationConfig, OverrideIsMarked) {
  const auto c = ds::GenerationConfig::with_override(0.7, 0.9, 40);
  EXPECT_TRUE(c.overridden());
  EXPECT_EQ(c.temperature(), 0.7);
  EXPECT_NE(c, ds::GenerationConfig::locked());
}

TEST(Channel, RoundTrip) {
  for (auto c : {ds::Channel::image, ds::Channel::web, ds::Channel::scholar}) {
    EXPECT_EQ(ds::parse_channel(ds::to_string(c)), c);
  }
  EXPECT_FALSE(ds::parse_channel("video"));
}

TEST(RecordedSearch, ReplaysAndFails) {
  const ds::SearchRequest hit{ds::Channel::web, "q1"};
  const ds::SearchRequest broken{ds::Channel::web, "q2"};
  Json t = {{"entries",
             {{ds::search_request_key(hit),
               {{"items", Json::array({{{"channel", "web"}, {"title", "T"}, {"url", "https://x"}, {"snippet", "s"}}})}}},
              {ds::search_request_key(broken), {{"error", "timeout"}}}}}};
  ds::RecordedSearchClient client(t);
  const auto items = client.search(hit);
  ASSERT_EQ(items.size(), 1u);
  EXPECT_EQ(items[0].title, "T");
  EXPECT_THROW(client.search(broken), ds::TransportError);
  EXPECT_THROW(client.search({ds::Channel::scholar, "q1"}), ds::TransportError);
}

TEST(RecordedText, KeyCoversModelPromptAndSystem) {
  ds::TextRequest r{"sys", "prompt", {}, "m"};
  Json t = {{"entries", {{ds::text_request_key(r), {{"response", "ok"}}}}}};
  ds::RecordedTextModel model(t);
  EXPECT_EQ(model.complete(r), "ok");
  auto other = r;
  other.system_prompt = "sys2";
  EXPECT_THROW(model.complete(other), ds::AdapterError);
  other = r;
  other.model_id = "m2";
  EXPECT_THROW(model.complete(other), ds::AdapterError);
}

TEST(RecordedVision, KeyCoversImageBytes) {
  Json t = {{"entries", {{ds::vision_request_key("m", "p", "img"), {{"response", "r"}}}}}};
  ds::RecordedMultimodalAdapter a(t);
  EXPECT_EQ(a.generate({"p", "img", {}, "m"}), "r");
  EXPECT_THROW(a.generate({"p", "img2", {}, "m"}), ds::AdapterError);
  EXPECT_NE(ds::vision_request_key("m", "ab", "c"), ds::vision_request_key("m", "a", "bc"));
}

TEST(RecordedTranscript, RejectsMalformed) {
  EXPECT_THROW(ds::RecordedTextModel(Json::array()), ds::Error);
  EXPECT_THROW(ds::RecordedTextModel(Json{{"entries", {{"k", Json::object()}}}}), ds::Error);
  EXPECT_THROW(ds::RecordedTextModel::from_file("/nonexistent/transcript.json"), ds::Error);
}

namespace {

class CountingVision final : public ds::MultimodalAdapter {
 public:
  std::string generate(const ds::VisionRequest&) override {
    const int now = ++inside_;
    max_ = std::max(max_, now);
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
    --inside_;
    return "x";
  }
  std::atomic<int> inside_{0};
  int max_ = 0;
};

}  // namespace

TEST(MakeConcurrent, SerializesUnsafeAdapters) {
  auto inner = std::make_shared<CountingVision>();
  auto safe = ds::make_concurrent(std::shared_ptr<ds::MultimodalAdapter>(inner));
  EXPECT_TRUE(safe->concurrent_safe());
  std::vector<std::future<void>> jobs;
  for (int i = 0; i < 8; ++i) {
    jobs.push_back(std::async(std::launch::async, [&] { safe->generate({}); }));
  }
  for (auto& j : jobs) j.get();
  EXPECT_EQ(inner->max_, 1);
}

TEST(MakeConcurrent, PassesSafeAdaptersThrough) {
  auto recorded = std::make_shared<ds::RecordedTextModel>(Json{{"entries", Json::object()}});
  EXPECT_EQ(ds::make_concurrent(std::shared_ptr<ds::TextModel>(recorded)).get(), recorded.get());
}

TEST(Environment, EmptyCountsAsUnset) {
  ::setenv("DEFECT_SAGE_TEST_ENV", "", 1);
  EXPECT_FALSE(ds::env_value("DEFECT_SAGE_TEST_ENV"));
  ::setenv("DEFECT_SAGE_TEST_ENV", "k", 1);
  EXPECT_EQ(ds::env_value("DEFECT_SAGE_TEST_ENV"), "k");
  ::unsetenv("DEFECT_SAGE_TEST_ENV");
}

TEST(ReadFileBytes, BinarySafe) {
  const auto bytes = ds::read_file_bytes(ds_test::fixture("images/defect_3.png"));
  ASSERT_GT(bytes.size(), 8u);
  EXPECT_EQ(bytes.substr(1, 3), "PNG");
}

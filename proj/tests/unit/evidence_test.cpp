#include "support.hpp"

#include <defect_sage/evidence.hpp>
#include <defect_sage/text.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

namespace ds = defect_sage;
namespace ev = defect_sage::evidence;
namespace kb = defect_sage::kb;
using ds_test::shipped_kb;

namespace {

const ds::Clock kClock = ds::fixed_clock("2025-01-01T00:00:00.000Z");

ev::ParameterClaim claim(kb::Parameter p, double v, std::string units, std::string title = "src") {
  ev::ParameterClaim c;
  c.parameter = p;
  c.value = v;
  c.units = std::move(units);
  c.source_title = std::move(title);
  c.source_url = "https://example.org/" + c.source_title;
  return c;
}

class ScriptedSearch final : public ds::SearchClient {
 public:
  std::vector<ds::EvidenceItem> search(const ds::SearchRequest& r) override {
    queries.push_back(r);
    if (fail_channel && *fail_channel == r.channel) throw ds::TransportError("HTTP 503");
    return {{r.channel, std::string(ds::to_string(r.channel)) + " balling result", "https://example.org/" +
                                                                                       std::string(ds::to_string(r.channel)),
             "balling at 250 W and 900 mm/s"}};
  }
  bool configured() const override { return configured_; }
  std::vector<ds::SearchRequest> queries;
  std::optional<ds::Channel> fail_channel;
  bool configured_ = true;
};

class CapturingText final : public ds::TextModel {
 public:
  std::string complete(const ds::TextRequest& r) override {
    requests.push_back(r);
    if (fail) throw ds::AdapterError("model down");
    return "summary text";
  }
  std::vector<ds::TextRequest> requests;
  bool fail = false;
};

}  // namespace

TEST(Queries, Templates) {
  EXPECT_EQ(ev::base_query("Balling"), "Balling laser powder bed fusion");
  EXPECT_EQ(ev::channel_query(ds::Channel::scholar, "Balling"), "Balling laser powder bed fusion");
  const auto web = ev::channel_query(ds::Channel::web, "Balling");
  EXPECT_EQ(web.rfind("Balling laser powder bed fusion ", 0), 0u);
  EXPECT_NE(web.find("site:sciencedirect.com"), std::string::npos);
}

TEST(FetchEvidence, AllChannelsInFixedOrder) {
  ScriptedSearch client;
  const auto b = ev::fetch_evidence("Balling", {ds::Channel::scholar, ds::Channel::web, ds::Channel::image}, client,
                                    kClock);
  ASSERT_EQ(b.items.size(), 3u);
  EXPECT_EQ(b.items[0].channel, ds::Channel::image);
  EXPECT_EQ(b.items[1].channel, ds::Channel::web);
  EXPECT_EQ(b.items[2].channel, ds::Channel::scholar);
  EXPECT_EQ(b.claims.size(), 6u);
  for (const auto& c : b.claims) {
    EXPECT_TRUE(std::any_of(b.items.begin(), b.items.end(),
                            [&](const ds::EvidenceItem& i) { return i.title == c.source_title && i.url == c.source_url; }));
  }
  EXPECT_TRUE(b.audit.empty());
}

TEST(FetchEvidence, NoChannelsIsEmpty) {
  ScriptedSearch client;
  client.configured_ = false;
  const auto b = ev::fetch_evidence("Balling", {}, client, kClock);
  EXPECT_TRUE(b.items.empty());
  EXPECT_TRUE(b.audit.empty());
  EXPECT_TRUE(client.queries.empty());
}

TEST(FetchEvidence, FailingChannelIsAuditedAndOthersContinue) {
  ScriptedSearch client;
  client.fail_channel = ds::Channel::web;
  const auto only_web = ev::fetch_evidence("Balling", {ds::Channel::web}, client, kClock);
  EXPECT_TRUE(only_web.items.empty());
  ASSERT_EQ(only_web.audit.size(), 1u);
  EXPECT_EQ(only_web.audit[0].action, ev::AuditAction::unverified);
  EXPECT_EQ(only_web.audit[0].timestamp, "2025-01-01T00:00:00.000Z");

  const auto all = ev::fetch_evidence("Balling", {ds::Channel::image, ds::Channel::web, ds::Channel::scholar}, client,
                                      kClock);
  EXPECT_EQ(all.items.size(), 2u);
  EXPECT_EQ(all.audit.size(), 1u);
}

TEST(FetchEvidence, MissingCredentials) {
  ScriptedSearch client;
  client.configured_ = false;
  EXPECT_THROW(ev::fetch_evidence("Balling", {ds::Channel::web}, client, kClock), ds::MissingCredentialsError);
}

TEST(FetchEvidence, RecordedBallingFixture) {
  auto client = ds::RecordedSearchClient::from_file(ds_test::fixture("recorded/search.json"));
  const auto b = ev::fetch_evidence("Balling", {ds::Channel::web, ds::Channel::scholar, ds::Channel::image}, client,
                                    kClock);
  for (auto c : {ds::Channel::image, ds::Channel::web, ds::Channel::scholar}) {
    EXPECT_TRUE(std::any_of(b.items.begin(), b.items.end(), [&](const ds::EvidenceItem& i) { return i.channel == c; }));
  }
  const auto web = std::find_if(b.items.begin(), b.items.end(),
                                [](const ds::EvidenceItem& i) { return i.channel == ds::Channel::web; });
  ASSERT_NE(web, b.items.end());
  EXPECT_NE(ds::text::to_lower(web->title).find("balling"), std::string::npos);
}

TEST(ExtractClaims, Examples) {
  const auto one = ev::extract_parameter_claims({ds::Channel::web, "t", "u", "density achieved at 120 J/mm³"});
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].parameter, kb::Parameter::volumetric_energy_density);
  EXPECT_EQ(one[0].value, 120);
  EXPECT_EQ(one[0].units, "J/mm³");
  EXPECT_TRUE(ev::extract_parameter_claims({ds::Channel::web, "t", "u", "no numbers at all"}).empty());
  const auto two = ev::extract_parameter_claims({ds::Channel::web, "t", "u", "250 W and 900 mm/s"});
  ASSERT_EQ(two.size(), 2u);
  EXPECT_EQ(two[0].parameter, kb::Parameter::laser_power);
  EXPECT_EQ(two[1].parameter, kb::Parameter::scan_speed);
  EXPECT_EQ(two[1].value, 900);
}

TEST(ExtractClaims, UnitsAndBoundaries) {
  const auto c = ev::extract_parameter_claims({ds::Channel::web, "t", "u", "layers of 40 μm, 0.05 % O2, 3 Watts, 2 mm"});
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c[0].parameter, kb::Parameter::layer_thickness);
  EXPECT_EQ(c[1].parameter, kb::Parameter::oxygen_level);
  EXPECT_DOUBLE_EQ(c[1].value, 0.05);
}

TEST(ResolveConflicts, EnergyDensityBounds) {
  const auto r = ev::resolve_conflicts({claim(kb::Parameter::volumetric_energy_density, 120, "J/mm³", "high"),
                                        claim(kb::Parameter::volumetric_energy_density, 75, "J/mm³", "mid")},
                                       shipped_kb(), "Lack of fusion porosity", "IN625", kClock);
  ASSERT_EQ(r.discarded.size(), 1u);
  EXPECT_EQ(r.discarded[0].value, 120);
  ASSERT_EQ(r.kept.size(), 1u);
  EXPECT_EQ(r.kept[0].value, 75);
  EXPECT_TRUE(r.unverified.empty());
  ASSERT_EQ(r.audit.size(), 2u);
  EXPECT_EQ(r.audit[0].action, ev::AuditAction::discarded);
  EXPECT_NE(r.audit[0].reason.find("65–90 J/mm³"), std::string::npos);
  EXPECT_EQ(r.audit[0].source_title, "high");
  EXPECT_EQ(r.audit[1].action, ev::AuditAction::used);
}

TEST(ResolveConflicts, UnboundedParameterIsUnverified) {
  const auto r = ev::resolve_conflicts({claim(kb::Parameter::focus_offset, 2, "mm")}, shipped_kb(),
                                       "Lack of fusion porosity", "IN625", kClock);
  EXPECT_TRUE(r.kept.empty());
  EXPECT_TRUE(r.discarded.empty());
  ASSERT_EQ(r.unverified.size(), 1u);
  ASSERT_EQ(r.audit.size(), 1u);
  EXPECT_EQ(r.audit[0].action, ev::AuditAction::unverified);
}

TEST(ResolveConflicts, OtherMaterialHasNoBounds) {
  const auto r = ev::resolve_conflicts({claim(kb::Parameter::volumetric_energy_density, 120, "J/mm³")}, shipped_kb(),
                                       "Lack of fusion porosity", "Ti-6Al-4V", kClock);
  EXPECT_EQ(r.unverified.size(), 1u);
}

TEST(ResolveConflicts, PartitionIsExactAndOrderInvariant) {
  std::mt19937_64 rng(99);
  const std::vector<std::pair<kb::Parameter, std::string>> kinds{
      {kb::Parameter::volumetric_energy_density, "J/mm³"}, {kb::Parameter::laser_power, "W"},
      {kb::Parameter::scan_speed, "mm/s"},                 {kb::Parameter::layer_thickness, "μm"},
      {kb::Parameter::oxygen_level, "%"},                  {kb::Parameter::focus_offset, "mm"},
      {kb::Parameter::laser_power, "kW"}};
  std::uniform_int_distribution<std::size_t> kind(0, kinds.size() - 1);
  std::uniform_real_distribution<double> value(0, 1500);
  for (int round = 0; round < 200; ++round) {
    std::vector<ev::ParameterClaim> claims;
    for (int i = 0; i < 12; ++i) {
      const auto& [p, u] = kinds[kind(rng)];
      claims.push_back(claim(p, std::round(value(rng)), u, "s" + std::to_string(i)));
    }
    for (const auto* defect : {"Lack of fusion porosity", "Balling", "Keyhole porosity"}) {
      const auto r = ev::resolve_conflicts(claims, shipped_kb(), defect, "IN625", kClock);
      ASSERT_EQ(r.kept.size() + r.discarded.size() + r.unverified.size(), claims.size());
      ASSERT_EQ(r.audit.size(), claims.size());
      for (const auto& c : claims) {
        const int hits = static_cast<int>(std::count(r.kept.begin(), r.kept.end(), c) +
                                          std::count(r.discarded.begin(), r.discarded.end(), c) +
                                          std::count(r.unverified.begin(), r.unverified.end(), c));
        ASSERT_EQ(hits, 1);
      }
      auto shuffled = claims;
      std::shuffle(shuffled.begin(), shuffled.end(), rng);
      const auto s = ev::resolve_conflicts(shuffled, shipped_kb(), defect, "IN625", kClock);
      auto key = [](std::vector<ev::ParameterClaim> v) {
        std::vector<std::string> ids;
        for (const auto& c : v) ids.push_back(c.source_title);
        std::sort(ids.begin(), ids.end());
        return ids;
      };
      EXPECT_EQ(key(r.kept), key(s.kept));
      EXPECT_EQ(key(r.discarded), key(s.discarded));
      EXPECT_EQ(key(r.unverified), key(s.unverified));
      for (const auto& a : r.audit) {
        if (a.action == ev::AuditAction::discarded) {
          EXPECT_NE(a.reason.find("violates "), std::string::npos);
        }
      }
    }
  }
}

TEST(ResolveConflicts, Deterministic) {
  const std::vector<ev::ParameterClaim> claims{claim(kb::Parameter::laser_power, 400, "W"),
                                               claim(kb::Parameter::scan_speed, 500, "mm/s")};
  const auto a = ev::resolve_conflicts(claims, shipped_kb(), "Lack of fusion porosity", "IN625", kClock);
  const auto b = ev::resolve_conflicts(claims, shipped_kb(), "Lack of fusion porosity", "IN625", kClock);
  EXPECT_EQ(a.kept, b.kept);
  EXPECT_EQ(a.discarded, b.discarded);
  EXPECT_EQ(a.audit, b.audit);
}

TEST(Summary, DiscardedValuesNeverReachTheModel) {
  const ds::EvidenceItem item{ds::Channel::web, "Energy study", "https://example.org/e",
                              "Full density at 120 J/mm³; porosity rose below 60 J/mm³ and stayed low at 75 J/mm³."};
  ev::EvidenceBundle bundle;
  bundle.items = {item};
  bundle.claims = ev::extract_parameter_claims(item);
  const auto r = ev::resolve_conflicts(bundle.claims, shipped_kb(), "Lack of fusion porosity", "IN625", kClock);
  ASSERT_EQ(r.discarded.size(), 2u);
  ev::SummaryOptions options;
  options.model_id = "m";
  options.discarded = r.discarded;
  const auto prompt = ev::summary_prompt(bundle, "Lack of fusion porosity", options);
  EXPECT_EQ(prompt.find("120 J/mm³"), std::string::npos);
  EXPECT_EQ(prompt.find("60 J/mm³"), std::string::npos);
  EXPECT_NE(prompt.find("75 J/mm³"), std::string::npos);
}

TEST(Summary, SystemPromptCarriesBounds) {
  const auto lookup = kb::mitigation_for(shipped_kb(), "Lack of fusion porosity", "IN625");
  ev::SummaryOptions options;
  options.bounds = std::get<kb::CuratedGuidance>(lookup).rules;
  const auto sys = ev::summary_system_prompt(options);
  EXPECT_NE(sys.find("65–90 J/mm³"), std::string::npos);
  EXPECT_NE(sys.find("discard"), std::string::npos);
}

TEST(Summary, ReferencesAndAuditCoverEveryItem) {
  ScriptedSearch client;
  const auto bundle = ev::fetch_evidence("Balling", {ds::Channel::image, ds::Channel::web, ds::Channel::scholar},
                                         client, kClock);
  CapturingText model;
  ev::SummaryOptions options;
  options.model_id = "text-summary";
  const auto s = ev::consolidate_summary(bundle, "Balling", model, options, kClock);
  ASSERT_TRUE(s.text);
  ASSERT_EQ(model.requests.size(), 1u);
  EXPECT_EQ(model.requests[0].config, ds::GenerationConfig::locked());
  ASSERT_EQ(s.references.size(), bundle.items.size());
  for (const auto& item : bundle.items) {
    EXPECT_TRUE(std::any_of(s.audit.begin(), s.audit.end(), [&](const ev::AuditRecord& a) {
      return a.source_title == item.title && a.source_url == item.url;
    }));
  }
}

TEST(Summary, EmptyBundleSkipsModel) {
  CapturingText model;
  const auto s = ev::consolidate_summary({}, "Balling", model, {}, kClock);
  EXPECT_FALSE(s.text);
  EXPECT_TRUE(s.references.empty());
  EXPECT_TRUE(model.requests.empty());
}

TEST(Summary, ModelFailureKeepsBundleAudit) {
  ScriptedSearch client;
  client.fail_channel = ds::Channel::image;
  const auto bundle = ev::fetch_evidence("Balling", {ds::Channel::image, ds::Channel::web}, client, kClock);
  CapturingText model;
  model.fail = true;
  const auto s = ev::consolidate_summary(bundle, "Balling", model, {}, kClock);
  EXPECT_FALSE(s.text);
  EXPECT_TRUE(s.error);
  EXPECT_TRUE(s.references.empty());
  EXPECT_EQ(bundle.audit.size(), 1u);
}

TEST(Summary, RecordedBallingSummaryIsDeterministic) {
  auto search = ds::RecordedSearchClient::from_file(ds_test::fixture("recorded/search.json"));
  auto text = ds::RecordedTextModel::from_file(ds_test::fixture("recorded/text.json"));
  const auto bundle = ev::fetch_evidence("Balling", {ds::Channel::image, ds::Channel::web, ds::Channel::scholar},
                                         search, kClock);
  const auto config = ds_test::online_config();
  ev::SummaryOptions options;
  options.model_id = config.summary_model;
  options.discarded = ev::resolve_conflicts(bundle.claims, shipped_kb(), "Balling", "IN625", kClock).discarded;
  const auto lookup = kb::mitigation_for(shipped_kb(), "Balling", "IN625");
  for (const auto& r : std::get<kb::CuratedGuidance>(lookup).rules) {
    if (r.bounds) options.bounds.push_back(r);
  }
  const auto a = ev::consolidate_summary(bundle, "Balling", text, options, kClock);
  const auto b = ev::consolidate_summary(bundle, "Balling", text, options, kClock);
  ASSERT_TRUE(a.text) << a.error.value_or("");
  EXPECT_EQ(a.text, b.text);
  const auto scholar = std::count_if(a.references.begin(), a.references.end(),
                                     [](const ev::Reference& r) { return r.channel == ds::Channel::scholar; });
  EXPECT_EQ(scholar, 3);
}

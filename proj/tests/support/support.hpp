#pragma once

#include <defect_sage/knowledge_base.hpp>
#include <defect_sage/session.hpp>
#include <defect_sage/vision.hpp>

#include <atomic>
#include <filesystem>
#include <map>
#include <set>
#include <memory>
#include <string>
#include <vector>

namespace ds_test {

namespace ds = defect_sage;

inline constexpr const char* kFixtureClock = "2025-01-01T00:00:00.000Z";

std::filesystem::path source_dir();
std::filesystem::path kb_path();
std::filesystem::path descriptors_path();
std::filesystem::path fixture(const std::string& relative);

const ds::kb::KnowledgeBase& shipped_kb();
std::shared_ptr<const ds::kb::KnowledgeBase> shipped_kb_ptr();
const std::vector<ds::vision::DefectDescriptor>& shipped_descriptors();

/// Engine replaying fixtures/recorded/*, stamped with the fixture clock.
std::shared_ptr<ds::session::Engine> recorded_engine();

/// Engine with no external clients at all.
std::shared_ptr<ds::session::Engine> offline_engine();

/// Engine whose external clients count each call and then fail. Used to show
/// that nothing external is reached while the feature flags are off.
std::shared_ptr<ds::session::Engine> trapped_engine(std::shared_ptr<std::atomic<int>> calls);

ds::session::ServiceConfig online_config();
ds::session::ServiceConfig offline_config();

std::string read_text(const std::filesystem::path& p);

/// Scratch directory unique to the running test.
std::filesystem::path scratch_dir(const std::string& name);

/// Every state reachable in one step from each state, written out by hand.
/// Includes staying put (invalid input) and Home ("0").
const std::map<ds::session::SessionState, std::set<ds::session::SessionState>>& allowed_transitions();

/// Kinds a turn may end on: the next thing the user answers.
bool is_prompt(ds::MessageKind kind);

struct FuzzOutcome {
  int steps = 0;
  int crashes = 0;                 // handle_input threw
  int undefined_transitions = 0;   // outside allowed_transitions()
  int unprompted_turns = 0;        // empty output or not ending on a prompt
  std::string first_failure;
};

/// Drives handle_input with random text, junk bytes and image uploads.
FuzzOutcome fuzz_session(const ds::session::Engine& engine, const ds::session::ServiceConfig& config,
                         std::uint64_t seed, int steps);

}  // namespace ds_test

#pragma once

#include "defect_sage/transcript.hpp"

#include <string>

namespace defect_sage {

/// Self-contained HTML rendering of a transcript: messages with source
/// badges, alignment score tables and the reference audit trail. Identical
/// transcripts produce identical bytes. Throws Error on an empty transcript.
std::string export_report(const SessionTranscript& transcript);

}  // namespace defect_sage

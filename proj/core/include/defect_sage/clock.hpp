#pragma once

#include <functional>
#include <string>

namespace defect_sage {

/// Produces the timestamp stamped onto audit records and transcript entries.
using Clock = std::function<std::string()>;

/// UTC wall clock, ISO-8601 with millisecond precision.
Clock system_clock();

/// Always returns `stamp`; used for byte-reproducible replays.
Clock fixed_clock(std::string stamp);

}  // namespace defect_sage

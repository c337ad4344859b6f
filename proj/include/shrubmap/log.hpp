#pragma once

#include <iosfwd>
#include <string>

namespace shrubmap {

/// Notices (warnings, fallbacks, resolved configs) go to this stream;
/// stderr by default, nullptr silences them.
void set_log_stream(std::ostream* out);
void log_notice(const std::string& message);

}  // namespace shrubmap

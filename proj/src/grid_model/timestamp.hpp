#pragma once

#include <string>
#include <string_view>

namespace carbonshift::detail {

/// Seconds since 1970-01-01 for "YYYY-MM-DD HH:MM[:SS]" (a 'T' separator is
/// accepted). Throws ParseError on anything else.
long long parse_timestamp(std::string_view text);
std::string format_timestamp(long long seconds);

}  // namespace carbonshift::detail

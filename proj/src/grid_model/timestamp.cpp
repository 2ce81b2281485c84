#include "timestamp.hpp"

#include "carbonshift/errors.hpp"

#include <chrono>
#include <cstdio>

namespace carbonshift::detail {

long long parse_timestamp(std::string_view text)
{
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  char sep = 0;
  const std::string str(text);
  const int n = std::sscanf(str.c_str(), "%4d-%2d-%2d%c%2d:%2d:%2d", &y, &mo, &d, &sep, &h, &mi, &s);
  if (n < 6 || (sep != ' ' && sep != 'T'))
    throw ParseError("invalid timestamp '" + str + "' (expected YYYY-MM-DD HH:MM[:SS])");
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || s > 59) throw ParseError("invalid timestamp '" + str + "'");
  const auto days = sys_days{ymd}.time_since_epoch().count();
  return static_cast<long long>(days) * 86400 + h * 3600 + mi * 60 + s;
}

std::string format_timestamp(long long seconds)
{
  using namespace std::chrono;
  const long long day_count = seconds >= 0 ? seconds / 86400 : (seconds - 86399) / 86400;
  const long long rem = seconds - day_count * 86400;
  const year_month_day ymd{sys_days{days{day_count}}};
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u %02lld:%02lld:%02lld", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), rem / 3600,
                (rem / 60) % 60, rem % 60);
  return buf;
}

}  // namespace carbonshift::detail

#pragma once

#include <chrono>
#include <charconv>
#include <compare>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

namespace explirec {

// Calendar date stored as days since 1970-01-01.
class Date {
 public:
  constexpr Date() = default;

  static Date from_ymd(int y, unsigned m, unsigned d) {
    std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m},
                                    std::chrono::day{d}};
    return Date(std::chrono::sys_days{ymd}.time_since_epoch().count());
  }

  // Accepts YYYY-MM-DD, optionally followed by a time of day which is ignored.
  static std::optional<Date> parse(std::string_view text) {
    if (text.size() < 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
    if (text.size() > 10 && text[10] != ' ' && text[10] != 'T') return std::nullopt;
    int y = 0;
    unsigned m = 0, d = 0;
    auto field = [&](std::size_t pos, std::size_t len, auto& out) {
      for (std::size_t k = pos; k < pos + len; ++k)
        if (text[k] < '0' || text[k] > '9') return false;
      auto res = std::from_chars(text.data() + pos, text.data() + pos + len, out);
      return res.ec == std::errc{};
    };
    if (!field(0, 4, y) || !field(5, 2, m) || !field(8, 2, d)) return std::nullopt;
    std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m},
                                    std::chrono::day{d}};
    if (!ymd.ok()) return std::nullopt;
    return Date(std::chrono::sys_days{ymd}.time_since_epoch().count());
  }

  constexpr long days() const noexcept { return days_; }

  std::string to_string() const {
    std::chrono::year_month_day ymd{std::chrono::sys_days{std::chrono::days{days_}}};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
  }

  friend constexpr auto operator<=>(const Date&, const Date&) = default;

 private:
  constexpr explicit Date(long days) : days_(days) {}
  long days_ = 0;
};

}  // namespace explirec

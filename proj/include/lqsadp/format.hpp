#ifndef LQSADP_FORMAT_HPP
#define LQSADP_FORMAT_HPP

#include <charconv>
#include <string>
#include <system_error>

namespace lqsadp {

/// Shortest decimal representation that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  if (res.ec != std::errc()) return "nan";
  return std::string(buf, res.ptr);
}

}  // namespace lqsadp

#endif  // LQSADP_FORMAT_HPP

#pragma once

#include <cstdio>
#include <ostream>
#include <string>
#include <string_view>

namespace guq::csv {

/// Fixed-format number text so reruns produce byte-identical files.
inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

/// Writes fields separated by commas and ends the line.
class Row {
 public:
  explicit Row(std::ostream& out) : out_(out) {}
  Row(const Row&) = delete;
  ~Row() { out_ << '\n'; }

  Row& operator<<(double v) { return put(num(v)); }
  Row& operator<<(int v) { return put(std::to_string(v)); }
  Row& operator<<(unsigned v) { return put(std::to_string(v)); }
  Row& operator<<(long v) { return put(std::to_string(v)); }
  Row& operator<<(unsigned long v) { return put(std::to_string(v)); }
  Row& operator<<(unsigned long long v) { return put(std::to_string(v)); }
  Row& operator<<(std::string_view s) { return put(s); }
  Row& operator<<(const char* s) { return put(s); }

 private:
  Row& put(std::string_view s) {
    if (!first_) out_ << ',';
    out_ << s;
    first_ = false;
    return *this;
  }

  std::ostream& out_;
  bool first_ = true;
};

}  // namespace guq::csv

#pragma once

// Builds one compact JSON object with control over numeric formatting, which
// nlohmann::json does not expose (it always prints shortest round-trip form).

#include <cstdio>
#include <string>
#include <string_view>

#include <json.hpp>

namespace pixeltag {

inline std::string fixed(double value, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, value);
  std::string s(buf);
  if (s.starts_with('-') && s.find_first_not_of("0.", 1) == std::string::npos) {
    s.erase(0, 1);  // -0.000 -> 0.000
  }
  return s;
}

inline std::string quoted(std::string_view s) { return nlohmann::json(std::string(s)).dump(); }

class JsonLine {
 public:
  JsonLine& raw(std::string_view key, std::string_view json_value) {
    text_ += text_.empty() ? "{" : ",";
    text_ += quoted(key);
    text_ += ':';
    text_ += json_value;
    return *this;
  }
  JsonLine& str(std::string_view key, std::string_view value) { return raw(key, quoted(value)); }
  JsonLine& num(std::string_view key, double value, int decimals) { return raw(key, fixed(value, decimals)); }
  JsonLine& integer(std::string_view key, long long value) { return raw(key, std::to_string(value)); }
  JsonLine& boolean(std::string_view key, bool value) { return raw(key, value ? "true" : "false"); }

  std::string done() const { return text_.empty() ? "{}" : text_ + "}"; }

 private:
  std::string text_;
};

}  // namespace pixeltag

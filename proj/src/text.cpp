#include "ifteval/text.hpp"

#include <cctype>

namespace ifteval::text {

namespace {
bool is_ascii_punct(unsigned char c) { return c < 0x80 && std::ispunct(c); }
bool is_ascii_space(unsigned char c) { return c < 0x80 && std::isspace(c); }
}  // namespace

std::string to_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    unsigned char u = static_cast<unsigned char>(c);
    if (u < 0x80) c = static_cast<char>(std::tolower(u));
  }
  return out;
}

std::string strip_punct(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (is_ascii_punct(static_cast<unsigned char>(c))) c = ' ';
  }
  return out;
}

std::string collapse_ws(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char c : s) {
    if (is_ascii_space(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
    } else {
      if (pending_space) out.push_back(' ');
      pending_space = false;
      out.push_back(c);
    }
  }
  return out;
}

std::string normalize(std::string_view s) {
  return collapse_ws(strip_punct(to_lower(s)));
}

std::vector<std::string> tokenize(std::string_view s) {
  std::string norm = normalize(s);
  std::vector<std::string> tokens;
  size_t pos = 0;
  while (pos < norm.size()) {
    size_t next = norm.find(' ', pos);
    if (next == std::string::npos) next = norm.size();
    if (next > pos) tokens.emplace_back(norm.substr(pos, next - pos));
    pos = next + 1;
  }
  return tokens;
}

std::string fill_placeholder(std::string tmpl, std::string_view placeholder,
                             std::string_view value) {
  size_t pos = 0;
  while ((pos = tmpl.find(placeholder, pos)) != std::string::npos) {
    tmpl.replace(pos, placeholder.size(), value);
    pos += value.size();
  }
  return tmpl;
}

}  // namespace ifteval::text

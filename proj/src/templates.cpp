#include "gvc/templates.hpp"

#include <algorithm>
#include <array>
#include <utility>

#include "gvc/errors.hpp"
#include "gvc/hash.hpp"

namespace gvc {

namespace {

struct Entry {
  std::string_view name;
  std::string_view text;
};

constexpr Entry kTemplates[] = {
#include "gvc/template_data.inc"
};

}  // namespace

std::string_view template_text(std::string_view name) {
  for (const auto& e : kTemplates)
    if (e.name == name) return e.text;
  throw ConfigError("unknown template '" + std::string(name) + "'");
}

std::vector<std::string> template_names() {
  std::vector<std::string> names;
  for (const auto& e : kTemplates) names.emplace_back(e.name);
  std::sort(names.begin(), names.end());
  return names;
}

std::string template_sha256(std::string_view name) { return sha256_hex(template_text(name)); }

std::string render_template(std::string_view name, const SlotMap& slots) {
  const auto text = template_text(name);
  std::string out;
  out.reserve(text.size() + 128);
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto open = text.find("{{", pos);
    if (open == std::string_view::npos) {
      out.append(text.substr(pos));
      break;
    }
    out.append(text.substr(pos, open - pos));
    const auto close = text.find("}}", open + 2);
    if (close == std::string_view::npos)
      throw ConfigError("unterminated slot in template '" + std::string(name) + "'");
    const auto slot = text.substr(open + 2, close - open - 2);
    auto it = slots.find(slot);
    if (it == slots.end())
      throw ConfigError("template '" + std::string(name) + "' slot '" + std::string(slot) +
                        "' is unbound");
    out.append(it->second);
    pos = close + 2;
  }
  return out;
}

}  // namespace gvc

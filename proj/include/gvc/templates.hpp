#pragma once

// Prompt templates compiled in from templates/v1/*.tmpl. Slots are written
// as {{name}}; every slot must be bound when rendering.

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace gvc {

inline constexpr std::string_view kTemplateVersion = "v1";

using SlotMap = std::map<std::string, std::string, std::less<>>;

// Throws ConfigError for unknown template names.
std::string_view template_text(std::string_view name);
std::vector<std::string> template_names();
std::string template_sha256(std::string_view name);

// Throws ConfigError on unbound or unterminated slots.
std::string render_template(std::string_view name, const SlotMap& slots);

}  // namespace gvc

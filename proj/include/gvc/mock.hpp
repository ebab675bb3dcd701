#pragma once

// Deterministic stand-ins for a language model. Every reply is a pure
// function of (prompt, behavior, seed).
//
//   oracle         answers every generator prompt correctly (and its
//                  incorrect-answer variants deliberately wrong) and judges
//                  every validator prompt by recomputing the truth
//   always_affirm  oracle generator; validators always give the affirming
//                  label (True / A / "No" harm), judges always say Yes
//   coin_flip      oracle generator; validator labels are hash coin flips
//   noisy          oracle, with each validator verdict flipped with a fixed
//                  probability
//   scripted       replies looked up by SHA-256 of the prompt from a JSON
//                  fixture, falling back to the oracle or to a default

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace gvc {

enum class MockBehavior { oracle, always_affirm, coin_flip, noisy, scripted };

struct MockSpec {
  MockBehavior behavior = MockBehavior::oracle;
  std::uint64_t seed = 0;
  double flip_probability = 0.0;
  std::filesystem::path script;

  // "mock:oracle", "mock:coin_flip:7", "mock:noisy:0.25:7", "mock:scripted:<path>"
  std::string describe() const;
};

// Parses the part after "mock:". Throws ConfigError.
MockSpec parse_mock_spec(std::string_view text);

enum class PromptKind {
  unknown,
  arithmetic_gen,
  arithmetic_val,
  plan_gen_pos,
  plan_gen_neg,
  plan_val,
  qa_gen,
  qa_val,
  harmful_gen_pos,
  harmful_gen_neg,
  harmful_val,
  priority_gen,
  priority_val,
  style_gen,
  style_val,
  judge_style,
  judge_priority,
  judge_harmful,
};

PromptKind classify_prompt(std::string_view prompt);
bool is_generator_prompt(PromptKind kind);

// The oracle's reply, including chain-of-thought text for CoT prompts.
std::string oracle_reply(std::string_view prompt);

// +1 when the oracle would give the positive label (True / A / not harmful /
// judge Yes) to a validator or judge prompt; nullopt for anything else.
std::optional<int> oracle_verdict(std::string_view prompt);

class MockModel {
 public:
  // Loads the script for the scripted behavior; throws ConfigError.
  explicit MockModel(MockSpec spec);

  std::string reply(std::string_view prompt) const;
  const MockSpec& spec() const { return spec_; }

 private:
  std::string label(PromptKind kind, int verdict) const;

  MockSpec spec_;
  std::map<std::string, std::string, std::less<>> script_;
  std::optional<std::string> script_default_;
  bool script_falls_back_to_oracle_ = true;
};

}  // namespace gvc

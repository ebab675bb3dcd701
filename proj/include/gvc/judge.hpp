#pragma once

// LM-judge adapter for the tasks without a deterministic oracle
// (style_transfer, priority_prompt, harmful_q). The judge is asked one
// binary success question per generator answer; Yes scores 1, No scores 0.

#include <optional>
#include <string>

#include "gvc/core.hpp"
#include "gvc/lmclient.hpp"

namespace gvc {

bool is_judged_task(TaskId task);

// Throws ConfigError for tasks without a judge template or a mismatched answer.
std::string render_judge(TaskId task, const Payload& payload, const GeneratorAnswer& answer);

// nullopt when the judge reply has no usable Yes/No or the request failed.
std::optional<double> judge_quality(LMClient& judge, TaskId task, const Payload& payload,
                                    const GeneratorAnswer& answer);

// Judge-backed ground truth for validator accuracy on judged tasks:
// the verdict a correct validator would give if the judge is right.
std::optional<int> judged_reference_verdict(LMClient& judge, const GVRecord& record);

}  // namespace gvc

#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "sparsedet/scene.hpp"

namespace sparsedet {

/// Per-scene foreground category set. An empty set encodes "none".
struct ClassPrompt {
  int scene_id = 0;
  std::set<int> classes;

  bool operator==(const ClassPrompt&) const = default;
};

enum class PredictionOutcome { kNone, kExact, kPartly, kError };

struct PromptStats {
  int64_t none_count = 0;
  int64_t exact_count = 0;
  int64_t partly_count = 0;
  int64_t error_count = 0;

  int64_t total() const { return none_count + exact_count + partly_count + error_count; }
};

/// The instruction sent to the predictor:
/// "Choose categories presented in the image: <name_1>, ..., <name_C>, none.
///  Choose one or several classes. Answer in one word or a short phrase."
/// Throws std::invalid_argument on an empty name list.
std::string build_instruction(const std::vector<std::string>& category_names);

struct ParsedResponse {
  std::set<int> classes;
  int unrecognized_tokens = 0;
  bool warning = false;  // set when nothing in the reply could be matched
};

/// Lenient, case-insensitive reply parser. Tokens are split on commas,
/// newlines, semicolons and the word "and"; surrounding punctuation is
/// stripped. A literal "none" contributes no classes; unknown tokens are
/// ignored but counted.
ParsedResponse parse_response(const std::string& text,
                              const std::vector<std::string>& category_names);

/// Union with the classes of the kept annotations; scenes without kept
/// annotations are treated as unlabeled and pass through unchanged.
/// Throws std::invalid_argument on a scene-id mismatch.
ClassPrompt refine_prompt(const ClassPrompt& pred, const SparseAnnotations& sparse);

/// Partition of (pred, gt) pairs:
///   None   both empty
///   Exact  equal and non-empty
///   Partly non-empty proper subset of gt
///   Error  anything else (a spurious class, or empty pred vs non-empty gt)
PredictionOutcome classify_prediction(const std::set<int>& pred, const std::set<int>& gt);

/// Outcome counts over a corpus; predictions are matched to ground truth by
/// scene id and every gt scene must have exactly one prediction.
PromptStats compute_stats(const std::vector<ClassPrompt>& predictions,
                          const std::vector<std::pair<int, std::set<int>>>& gt_sets);

const char* outcome_name(PredictionOutcome o);

}  // namespace sparsedet

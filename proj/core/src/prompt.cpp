#include "sparsedet/prompt.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <stdexcept>

namespace sparsedet {

namespace {

std::string to_lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string strip(const std::string& s) {
  const char* punct = " \t\r\n.!?:;\"'()";
  const size_t b = s.find_first_not_of(punct);
  if (b == std::string::npos) return {};
  const size_t e = s.find_last_not_of(punct);
  return s.substr(b, e - b + 1);
}

// Split on commas, semicolons, newlines and the standalone word "and".
std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> parts;
  std::string cur;
  for (char ch : text) {
    if (ch == ',' || ch == ';' || ch == '\n') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  parts.push_back(cur);

  std::vector<std::string> tokens;
  for (const std::string& part : parts) {
    // Further split on " and " as a word boundary.
    std::string low = to_lower(part);
    size_t pos = 0;
    size_t start = 0;
    while ((pos = low.find("and", pos)) != std::string::npos) {
      const bool left_ok = pos == 0 || std::isspace(static_cast<unsigned char>(low[pos - 1]));
      const bool right_ok =
          pos + 3 >= low.size() || std::isspace(static_cast<unsigned char>(low[pos + 3]));
      if (left_ok && right_ok) {
        tokens.push_back(strip(part.substr(start, pos - start)));
        start = pos + 3;
      }
      pos += 3;
    }
    tokens.push_back(strip(part.substr(start)));
  }

  std::vector<std::string> out;
  for (std::string& t : tokens) {
    if (!t.empty()) out.push_back(std::move(t));
  }
  return out;
}

}  // namespace

std::string build_instruction(const std::vector<std::string>& category_names) {
  if (category_names.empty()) {
    throw std::invalid_argument("build_instruction: no category names");
  }
  std::string out = "Choose categories presented in the image: ";
  for (const std::string& name : category_names) {
    out += name;
    out += ", ";
  }
  out += "none. Choose one or several classes. Answer in one word or a short phrase.";
  return out;
}

ParsedResponse parse_response(const std::string& text,
                              const std::vector<std::string>& category_names) {
  std::map<std::string, int> by_name;
  for (size_t i = 0; i < category_names.size(); ++i) {
    by_name[to_lower(category_names[i])] = static_cast<int>(i);
  }

  ParsedResponse out;
  int recognized = 0;
  for (const std::string& token : tokenize(text)) {
    const std::string low = to_lower(token);
    if (low == "none") {
      ++recognized;
      continue;
    }
    auto it = by_name.find(low);
    if (it != by_name.end()) {
      out.classes.insert(it->second);
      ++recognized;
    } else {
      ++out.unrecognized_tokens;
    }
  }
  out.warning = recognized == 0;
  return out;
}

ClassPrompt refine_prompt(const ClassPrompt& pred, const SparseAnnotations& sparse) {
  if (pred.scene_id != sparse.scene_id) {
    throw std::invalid_argument("refine_prompt: scene id mismatch");
  }
  if (sparse.kept.empty()) return pred;  // unlabeled: predictions stay unchanged
  ClassPrompt out = pred;
  for (const Instance& inst : sparse.kept) out.classes.insert(inst.class_id);
  return out;
}

PredictionOutcome classify_prediction(const std::set<int>& pred, const std::set<int>& gt) {
  if (pred.empty() && gt.empty()) return PredictionOutcome::kNone;
  if (!pred.empty() && pred == gt) return PredictionOutcome::kExact;
  const bool subset = std::includes(gt.begin(), gt.end(), pred.begin(), pred.end());
  if (!pred.empty() && subset && pred != gt) return PredictionOutcome::kPartly;
  return PredictionOutcome::kError;
}

PromptStats compute_stats(const std::vector<ClassPrompt>& predictions,
                          const std::vector<std::pair<int, std::set<int>>>& gt_sets) {
  std::map<int, const std::set<int>*> by_scene;
  for (const ClassPrompt& p : predictions) by_scene[p.scene_id] = &p.classes;

  PromptStats stats;
  for (const auto& [scene_id, gt] : gt_sets) {
    auto it = by_scene.find(scene_id);
    if (it == by_scene.end()) {
      throw std::invalid_argument("compute_stats: missing prediction for scene " +
                                  std::to_string(scene_id));
    }
    switch (classify_prediction(*it->second, gt)) {
      case PredictionOutcome::kNone: ++stats.none_count; break;
      case PredictionOutcome::kExact: ++stats.exact_count; break;
      case PredictionOutcome::kPartly: ++stats.partly_count; break;
      case PredictionOutcome::kError: ++stats.error_count; break;
    }
  }
  return stats;
}

const char* outcome_name(PredictionOutcome o) {
  switch (o) {
    case PredictionOutcome::kNone: return "none";
    case PredictionOutcome::kExact: return "exact";
    case PredictionOutcome::kPartly: return "partly";
    case PredictionOutcome::kError: return "error";
  }
  return "unknown";
}

}  // namespace sparsedet

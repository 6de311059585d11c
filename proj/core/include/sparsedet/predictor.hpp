#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "sparsedet/prompt.hpp"
#include "sparsedet/scene.hpp"

namespace sparsedet {

/// Abstract foreground-category predictor. Implementations return the raw
/// text reply for one scene; transport problems surface as TransportError.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual std::string name() const = 0;
  virtual std::string complete(int scene_id, const std::string& instruction) = 0;
};

/// Seeded stochastic stand-in for the real predictor. With probability
/// `accuracy` it answers with the scene's exact ground-truth class set;
/// otherwise it corrupts the answer (spurious class, dropped class, or a
/// wrong "none"). Replies are deterministic per (seed, scene_id). Explicit
/// per-scene replies can be pinned for fixtures.
class MockPredictor : public Predictor {
 public:
  MockPredictor(std::map<int, std::set<int>> gt_classes_by_scene,
                std::vector<std::string> category_names, double accuracy,
                uint64_t seed);

  void set_fixed_reply(int scene_id, std::string reply);

  std::string name() const override { return "mock"; }
  std::string complete(int scene_id, const std::string& instruction) override;

 private:
  std::map<int, std::set<int>> gt_;
  std::vector<std::string> names_;
  double accuracy_;
  uint64_t seed_;
  std::map<int, std::string> fixed_;
};

struct HttpPredictorConfig {
  std::string endpoint;        // e.g. http://127.0.0.1:8080/predict
  double timeout_seconds = 10.0;
  int max_retries = 3;
  std::string auth_token;      // sent as a bearer token when non-empty
};

/// POSTs {"scene_id": ..., "instruction": ...} as JSON and expects
/// {"response": "<text>"} back. Retries transient failures up to
/// max_retries times, then throws TransportError with the failure kind.
class HttpPredictor : public Predictor {
 public:
  explicit HttpPredictor(HttpPredictorConfig cfg);

  std::string name() const override { return "http"; }
  std::string complete(int scene_id, const std::string& instruction) override;

 private:
  HttpPredictorConfig cfg_;
  std::string host_;
  int port_ = 80;
  std::string path_;
};

/// Queries the predictor for one scene and parses the reply into a prompt.
/// Transport failures propagate; a reply with no recognizable category
/// yields an empty class set (the parser is lenient by contract).
ClassPrompt query_predictor(Predictor& predictor, const Scene& scene,
                            const std::vector<std::string>& category_names);

/// Environment variable names honored by the CLI when building an
/// HttpPredictor.
constexpr const char* kEnvEndpoint = "SPARSEDET_PREDICTOR_ENDPOINT";
constexpr const char* kEnvAuthToken = "SPARSEDET_PREDICTOR_TOKEN";
constexpr const char* kEnvTimeout = "SPARSEDET_PREDICTOR_TIMEOUT_S";

}  // namespace sparsedet

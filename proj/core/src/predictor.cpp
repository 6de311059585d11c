#include "sparsedet/predictor.hpp"

#include <stdexcept>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "sparsedet/errors.hpp"
#include "sparsedet/rng.hpp"

namespace sparsedet {

namespace {

constexpr uint64_t kTagMock = 0x30c4;

std::string join_names(const std::set<int>& classes,
                       const std::vector<std::string>& names) {
  if (classes.empty()) return "none";
  std::string out;
  for (int c : classes) {
    if (!out.empty()) out += ", ";
    out += names.at(c);
  }
  return out;
}

}  // namespace

MockPredictor::MockPredictor(std::map<int, std::set<int>> gt_classes_by_scene,
                             std::vector<std::string> category_names,
                             double accuracy, uint64_t seed)
    : gt_(std::move(gt_classes_by_scene)),
      names_(std::move(category_names)),
      accuracy_(accuracy),
      seed_(seed) {
  if (accuracy_ < 0.0 || accuracy_ > 1.0) {
    throw std::invalid_argument("MockPredictor: accuracy must be in [0, 1]");
  }
}

void MockPredictor::set_fixed_reply(int scene_id, std::string reply) {
  fixed_[scene_id] = std::move(reply);
}

std::string MockPredictor::complete(int scene_id, const std::string& /*instruction*/) {
  if (auto it = fixed_.find(scene_id); it != fixed_.end()) return it->second;

  auto git = gt_.find(scene_id);
  if (git == gt_.end()) {
    throw std::invalid_argument("MockPredictor: unknown scene " + std::to_string(scene_id));
  }
  const std::set<int>& gt = git->second;

  Rng rng(derive_seed(seed_, kTagMock, static_cast<uint64_t>(scene_id)));
  if (rng.uniform() < accuracy_) return join_names(gt, names_);

  // Corrupt the answer. Empty ground truth can only be wrong via a spurious
  // class; otherwise pick among spurious / dropped / "none".
  const int num_classes = static_cast<int>(names_.size());
  auto spurious = [&]() -> std::string {
    std::vector<int> absent;
    for (int c = 0; c < num_classes; ++c) {
      if (gt.count(c) == 0) absent.push_back(c);
    }
    if (absent.empty()) return join_names(gt, names_);  // every class present; give up
    std::set<int> out = gt;
    out.insert(absent[rng.uniform_int(0, static_cast<int>(absent.size()) - 1)]);
    return join_names(out, names_);
  };

  if (gt.empty()) return spurious();
  switch (rng.uniform_int(0, 2)) {
    case 0:
      return spurious();
    case 1: {
      // Drop one class; a singleton ground truth degrades to "none".
      std::vector<int> classes(gt.begin(), gt.end());
      const int victim = classes[rng.uniform_int(0, static_cast<int>(classes.size()) - 1)];
      std::set<int> out = gt;
      out.erase(victim);
      return join_names(out, names_);
    }
    default:
      return "none";
  }
}

HttpPredictor::HttpPredictor(HttpPredictorConfig cfg) : cfg_(std::move(cfg)) {
  // Accept http://host:port/path with optional port and path.
  std::string rest = cfg_.endpoint;
  const std::string scheme = "http://";
  if (rest.rfind(scheme, 0) != 0) {
    throw std::invalid_argument("HttpPredictor: endpoint must start with http://");
  }
  rest = rest.substr(scheme.size());
  const size_t slash = rest.find('/');
  path_ = slash == std::string::npos ? "/" : rest.substr(slash);
  std::string hostport = rest.substr(0, slash);
  const size_t colon = hostport.find(':');
  if (colon == std::string::npos) {
    host_ = hostport;
    port_ = 80;
  } else {
    host_ = hostport.substr(0, colon);
    port_ = std::stoi(hostport.substr(colon + 1));
  }
}

std::string HttpPredictor::complete(int scene_id, const std::string& instruction) {
  nlohmann::json body{{"scene_id", scene_id}, {"instruction", instruction}};
  const std::string payload = body.dump();

  httplib::Client client(host_, port_);
  const auto timeout_s = static_cast<time_t>(cfg_.timeout_seconds);
  const auto timeout_us =
      static_cast<time_t>((cfg_.timeout_seconds - static_cast<double>(timeout_s)) * 1e6);
  client.set_connection_timeout(timeout_s, timeout_us);
  client.set_read_timeout(timeout_s, timeout_us);
  client.set_write_timeout(timeout_s, timeout_us);
  if (!cfg_.auth_token.empty()) client.set_bearer_token_auth(cfg_.auth_token);

  httplib::Error last_err = httplib::Error::Success;
  for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
    auto res = client.Post(path_, payload, "application/json");
    if (!res) {
      last_err = res.error();
      continue;
    }
    if (res->status != 200) {
      throw TransportError(TransportError::Kind::Http,
                           "predictor returned HTTP " + std::to_string(res->status));
    }
    nlohmann::json reply = nlohmann::json::parse(res->body, nullptr, false);
    if (reply.is_discarded() || !reply.contains("response") ||
        !reply["response"].is_string()) {
      throw TransportError(TransportError::Kind::Malformed,
                           "predictor reply is not {\"response\": <string>}");
    }
    return reply["response"].get<std::string>();
  }

  const auto kind = (last_err == httplib::Error::ConnectionTimeout ||
                     last_err == httplib::Error::Read || last_err == httplib::Error::Write)
                        ? TransportError::Kind::Timeout
                        : TransportError::Kind::Connection;
  throw TransportError(kind, "predictor unreachable after " +
                                 std::to_string(cfg_.max_retries + 1) + " attempts (" +
                                 httplib::to_string(last_err) + ")");
}

ClassPrompt query_predictor(Predictor& predictor, const Scene& scene,
                            const std::vector<std::string>& category_names) {
  const std::string instruction = build_instruction(category_names);
  const std::string reply = predictor.complete(scene.id, instruction);
  const ParsedResponse parsed = parse_response(reply, category_names);
  return ClassPrompt{scene.id, parsed.classes};
}

}  // namespace sparsedet

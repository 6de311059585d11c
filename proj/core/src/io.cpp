#include "sparsedet/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace sparsedet::io {

static_assert(std::endian::native == std::endian::little,
              "file formats assume a little-endian host");

using nlohmann::json;

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json parse_json(const std::string& text, const std::string& what) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw std::invalid_argument("malformed JSON in " + what);
  return j;
}

void expect_format(const json& j, const std::string& format) {
  if (!j.contains("format") || j["format"] != format) {
    throw std::invalid_argument("expected format '" + format + "'");
  }
}

json box_to_json(const OrientedBox& box) {
  return json{{"cx", box.cx()}, {"cy", box.cy()}, {"w", box.w()},
              {"h", box.h()},   {"theta", box.theta()}};
}

OrientedBox box_from_json(const json& j) {
  return OrientedBox(j.at("cx").get<double>(), j.at("cy").get<double>(),
                     j.at("w").get<double>(), j.at("h").get<double>(),
                     j.at("theta").get<double>());
}

json instances_to_json(const std::vector<Instance>& instances) {
  json arr = json::array();
  for (const Instance& inst : instances) {
    json b = box_to_json(inst.box);
    b["class"] = inst.class_id;
    arr.push_back(b);
  }
  return arr;
}

std::vector<Instance> instances_from_json(const json& arr) {
  std::vector<Instance> out;
  for (const json& j : arr) {
    out.push_back({j.at("class").get<int>(), box_from_json(j)});
  }
  return out;
}

std::string doubles_to_bytes(const std::vector<double>& v) {
  std::string out(v.size() * sizeof(double), '\0');
  std::memcpy(out.data(), v.data(), out.size());
  return out;
}

}  // namespace

void atomic_write_file(const std::filesystem::path& path, const std::string& content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

uint64_t file_hash(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  return fnv1a64(bytes.data(), bytes.size());
}

// --------------------------------------------------------------------------

namespace {

json corpus_config_to_json(const CorpusConfig& c) {
  return json{{"grid_h", c.grid_h},
              {"grid_w", c.grid_w},
              {"noise_sigma", c.noise_sigma},
              {"clutter_channels", c.clutter_channels},
              {"clutter_density", c.clutter_density},
              {"clutter_amp", c.clutter_amp},
              {"clutter_bleed", c.clutter_bleed},
              {"aspect_min", c.aspect_min},
              {"aspect_max", c.aspect_max},
              {"geometry_channels", c.geometry_channels}};
}

CorpusConfig corpus_config_from_json(const json& j) {
  CorpusConfig c;
  c.grid_h = j.value("grid_h", c.grid_h);
  c.grid_w = j.value("grid_w", c.grid_w);
  c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
  c.clutter_channels = j.value("clutter_channels", c.clutter_channels);
  c.clutter_density = j.value("clutter_density", c.clutter_density);
  c.clutter_amp = j.value("clutter_amp", c.clutter_amp);
  c.clutter_bleed = j.value("clutter_bleed", c.clutter_bleed);
  c.aspect_min = j.value("aspect_min", c.aspect_min);
  c.aspect_max = j.value("aspect_max", c.aspect_max);
  c.geometry_channels = j.value("geometry_channels", c.geometry_channels);
  return c;
}

json specs_to_json(const std::vector<CategorySpec>& specs) {
  json arr = json::array();
  for (const CategorySpec& s : specs) {
    arr.push_back(json{{"id", s.id},
                       {"name", s.name},
                       {"frequency_weight", s.frequency_weight},
                       {"size_min", s.size_min},
                       {"size_max", s.size_max},
                       {"detectability", s.detectability}});
  }
  return arr;
}

std::vector<CategorySpec> specs_from_json(const json& arr) {
  std::vector<CategorySpec> out;
  for (const json& j : arr) {
    CategorySpec s;
    s.id = j.at("id").get<int>();
    s.name = j.at("name").get<std::string>();
    s.frequency_weight = j.value("frequency_weight", 1.0);
    s.size_min = j.value("size_min", 2.5);
    s.size_max = j.value("size_max", 5.0);
    s.detectability = j.value("detectability", 1.0);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

void write_corpus(const std::filesystem::path& json_path, const CorpusFile& corpus) {
  const std::filesystem::path blob_path =
      json_path.parent_path() / (json_path.stem().string() + ".rasters.bin");

  std::string blob;
  json scenes = json::array();
  for (const Scene& scene : corpus.scenes) {
    json s{{"id", scene.id},
           {"grid_h", scene.grid_h},
           {"grid_w", scene.grid_w},
           {"num_classes", scene.num_classes},
           {"feature_dim", scene.features.c},
           {"raster_offset", blob.size()},
           {"instances", instances_to_json(scene.instances)}};
    blob += doubles_to_bytes(scene.features.data);
    scenes.push_back(std::move(s));
  }

  json root{{"format", "sparsedet-corpus"},
            {"version", 1},
            {"seed", corpus.seed},
            {"raster_blob", blob_path.filename().string()},
            {"config", corpus_config_to_json(corpus.config)},
            {"categories", specs_to_json(corpus.specs)},
            {"scenes", std::move(scenes)}};

  atomic_write_file(blob_path, blob);
  atomic_write_file(json_path, root.dump(2) + "\n");
}

CorpusFile read_corpus(const std::filesystem::path& json_path) {
  const json root = parse_json(read_file(json_path), json_path.string());
  expect_format(root, "sparsedet-corpus");

  CorpusFile out;
  out.seed = root.value("seed", 0ull);
  out.config = corpus_config_from_json(root.at("config"));
  out.specs = specs_from_json(root.at("categories"));

  const std::filesystem::path blob_path =
      json_path.parent_path() / root.at("raster_blob").get<std::string>();
  const std::string blob = read_file(blob_path);

  for (const json& s : root.at("scenes")) {
    Scene scene;
    scene.id = s.at("id").get<int>();
    scene.grid_h = s.at("grid_h").get<int>();
    scene.grid_w = s.at("grid_w").get<int>();
    scene.num_classes = s.at("num_classes").get<int>();
    const int fdim = s.at("feature_dim").get<int>();
    scene.features = Grid3<double>(scene.grid_h, scene.grid_w, fdim);
    const size_t offset = s.at("raster_offset").get<size_t>();
    const size_t nbytes = scene.features.size() * sizeof(double);
    if (offset + nbytes > blob.size()) {
      throw std::invalid_argument("corpus raster blob truncated");
    }
    std::memcpy(scene.features.data.data(), blob.data() + offset, nbytes);
    scene.instances = instances_from_json(s.at("instances"));
    out.scenes.push_back(std::move(scene));
  }
  return out;
}

std::vector<std::string> category_names(const std::vector<CategorySpec>& specs) {
  std::vector<std::string> names;
  names.reserve(specs.size());
  for (const CategorySpec& s : specs) names.push_back(s.name);
  return names;
}

// --------------------------------------------------------------------------

void write_annotations(const std::filesystem::path& path, const AnnotationsFile& file) {
  json scenes = json::array();
  for (const SparseAnnotations& ann : file.annotations) {
    scenes.push_back(json{{"scene_id", ann.scene_id},
                          {"removed_count", ann.removed_count},
                          {"kept", instances_to_json(ann.kept)}});
  }
  json root{{"format", "sparsedet-annotations"},
            {"version", 1},
            {"rate", file.rate},
            {"at_least_one_per_class", file.at_least_one_per_class},
            {"seed", file.seed},
            {"corpus_hash", file.corpus_hash},
            {"scenes", std::move(scenes)}};
  atomic_write_file(path, root.dump(2) + "\n");
}

AnnotationsFile read_annotations(const std::filesystem::path& path) {
  const json root = parse_json(read_file(path), path.string());
  expect_format(root, "sparsedet-annotations");

  AnnotationsFile out;
  out.rate = root.value("rate", 0.0);
  out.at_least_one_per_class = root.value("at_least_one_per_class", false);
  out.seed = root.value("seed", 0ull);
  out.corpus_hash = root.value("corpus_hash", 0ull);
  for (const json& s : root.at("scenes")) {
    SparseAnnotations ann;
    ann.scene_id = s.at("scene_id").get<int>();
    ann.removed_count = s.at("removed_count").get<int>();
    ann.kept = instances_from_json(s.at("kept"));
    out.annotations.push_back(std::move(ann));
  }
  return out;
}

// --------------------------------------------------------------------------

void write_prompts(const std::filesystem::path& path, const PromptsFile& file) {
  json scenes = json::array();
  for (const ClassPrompt& p : file.prompts) {
    std::vector<std::string> names;
    for (int c : p.classes) names.push_back(file.categories.at(c));
    std::sort(names.begin(), names.end());
    scenes.push_back(json{{"scene_id", p.scene_id}, {"classes", names}});
  }
  json root{{"format", "sparsedet-prompts"},
            {"version", 1},
            {"predictor", file.predictor},
            {"seed", file.seed},
            {"categories", file.categories},
            {"scenes", std::move(scenes)}};
  atomic_write_file(path, root.dump(2) + "\n");
}

PromptsFile read_prompts(const std::filesystem::path& path) {
  const json root = parse_json(read_file(path), path.string());
  expect_format(root, "sparsedet-prompts");

  PromptsFile out;
  out.predictor = root.value("predictor", "");
  out.seed = root.value("seed", 0ull);
  out.categories = root.at("categories").get<std::vector<std::string>>();

  std::map<std::string, int> by_name;
  for (size_t i = 0; i < out.categories.size(); ++i) {
    by_name[out.categories[i]] = static_cast<int>(i);
  }
  for (const json& s : root.at("scenes")) {
    ClassPrompt p;
    p.scene_id = s.at("scene_id").get<int>();
    for (const json& name : s.at("classes")) {
      auto it = by_name.find(name.get<std::string>());
      if (it == by_name.end()) {
        throw std::invalid_argument("prompts file references unknown category " +
                                    name.get<std::string>());
      }
      p.classes.insert(it->second);
    }
    out.prompts.push_back(std::move(p));
  }
  return out;
}

std::map<int, ClassPrompt> prompt_map(const PromptsFile& file) {
  std::map<int, ClassPrompt> out;
  for (const ClassPrompt& p : file.prompts) out[p.scene_id] = p;
  return out;
}

// --------------------------------------------------------------------------

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const ModelShape& shape = ckpt.state.student.shape();
  std::ostringstream header;
  header << "sparsedet-checkpoint v1\n";
  header << "feature_dim " << shape.feature_dim << "\n";
  header << "num_classes " << shape.num_classes << "\n";
  header << "hidden_dim " << shape.hidden_dim << "\n";
  header << "iteration " << ckpt.state.iteration << "\n";
  header << "phase " << (ckpt.state.phase == Phase::kBurnIn ? "burn-in" : "mutual") << "\n";
  header << "config_hash " << ckpt.config_hash << "\n";
  header << "param_count " << shape.param_count() << "\n";
  header << "blob student teacher velocity\n";

  std::string content = header.str();
  content += doubles_to_bytes(ckpt.state.student.flat());
  content += doubles_to_bytes(ckpt.state.teacher.flat());
  content += doubles_to_bytes(ckpt.state.velocity.flat());
  atomic_write_file(path, content);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  const std::string content = read_file(path);
  std::istringstream in(content);
  std::string line;
  if (!std::getline(in, line) || line != "sparsedet-checkpoint v1") {
    throw std::invalid_argument("not a sparsedet checkpoint: " + path.string());
  }

  ModelShape shape;
  Checkpoint ckpt;
  size_t param_count = 0;
  std::string phase = "burn-in";
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "feature_dim") ls >> shape.feature_dim;
    else if (key == "num_classes") ls >> shape.num_classes;
    else if (key == "hidden_dim") ls >> shape.hidden_dim;
    else if (key == "iteration") ls >> ckpt.state.iteration;
    else if (key == "phase") ls >> phase;
    else if (key == "config_hash") ls >> ckpt.config_hash;
    else if (key == "param_count") ls >> param_count;
    else if (key == "blob") break;
    else throw std::invalid_argument("unknown checkpoint header key: " + key);
  }
  if (param_count != shape.param_count()) {
    throw std::invalid_argument("checkpoint param_count disagrees with shapes");
  }
  ckpt.state.phase = phase == "mutual" ? Phase::kMutual : Phase::kBurnIn;

  const size_t blob_off = static_cast<size_t>(in.tellg());
  const size_t nbytes = param_count * sizeof(double);
  if (content.size() != blob_off + 3 * nbytes) {
    throw std::invalid_argument("checkpoint blob has wrong size");
  }
  auto read_params = [&](size_t index) {
    ModelParams p(shape);
    std::memcpy(p.flat().data(), content.data() + blob_off + index * nbytes, nbytes);
    return p;
  };
  ckpt.state.student = read_params(0);
  ckpt.state.teacher = read_params(1);
  ckpt.state.velocity = read_params(2);
  return ckpt;
}

// --------------------------------------------------------------------------

void write_manifest(const std::filesystem::path& path, const RunManifest& manifest) {
  json artifacts = json::object();
  for (const auto& [name, ref] : manifest.artifacts) {
    artifacts[name] = json{{"path", ref.path}, {"hash", ref.hash}};
  }
  json root{{"format", "sparsedet-manifest"},
            {"version", 1},
            {"seed", manifest.seed},
            {"config_hash", manifest.config_hash},
            {"artifacts", std::move(artifacts)}};
  atomic_write_file(path, root.dump(2) + "\n");
}

RunManifest read_manifest(const std::filesystem::path& path) {
  const json root = parse_json(read_file(path), path.string());
  expect_format(root, "sparsedet-manifest");

  RunManifest out;
  out.seed = root.value("seed", 0ull);
  out.config_hash = root.value("config_hash", 0ull);
  for (const auto& [name, ref] : root.at("artifacts").items()) {
    out.artifacts[name] = ArtifactRef{ref.at("path").get<std::string>(),
                                      ref.at("hash").get<uint64_t>()};
  }
  return out;
}

void record_artifact(RunManifest& manifest, const std::string& name,
                     const std::filesystem::path& manifest_dir,
                     const std::filesystem::path& file) {
  manifest.artifacts[name] =
      ArtifactRef{std::filesystem::relative(file, manifest_dir).string(),
                  file_hash(file)};
}

std::filesystem::path resolve_artifact(const RunManifest& manifest,
                                       const std::string& name,
                                       const std::filesystem::path& manifest_dir) {
  auto it = manifest.artifacts.find(name);
  if (it == manifest.artifacts.end()) {
    throw std::invalid_argument("manifest has no artifact '" + name + "'");
  }
  const std::filesystem::path path = manifest_dir / it->second.path;
  const uint64_t actual = file_hash(path);
  if (actual != it->second.hash) {
    throw std::invalid_argument("artifact '" + name + "' hash mismatch (" +
                                path.string() + " changed since it was recorded)");
  }
  return path;
}

// --------------------------------------------------------------------------

std::string selection_to_text(const SelectionSet& sel) {
  std::ostringstream os;
  os << "# y x class score tags\n";
  for (const SelectionEntry& e : sel.entries()) {
    os << e.y << " " << e.x << " " << e.class_id << " " << e.score << " ";
    std::string tags;
    if (e.tags & kTagFg) tags += "fg,";
    if (e.tags & kTagConf) tags += "conf,";
    if (e.tags & kTagPerClass) tags += "per-class,";
    if (e.tags & kTagGt) tags += "gt,";
    if (!tags.empty()) tags.pop_back();
    os << (tags.empty() ? "-" : tags) << "\n";
  }
  return os.str();
}

std::string selection_to_pgm(const SelectionSet& sel, int grid_h, int grid_w) {
  std::string pixels(static_cast<size_t>(grid_h) * grid_w, '\0');
  for (const SelectionEntry& e : sel.entries()) {
    if (e.y >= 0 && e.y < grid_h && e.x >= 0 && e.x < grid_w) {
      pixels[static_cast<size_t>(e.y) * grid_w + e.x] = static_cast<char>(255);
    }
  }
  std::ostringstream os;
  os << "P5\n" << grid_w << " " << grid_h << "\n255\n";
  return os.str() + pixels;
}

// --------------------------------------------------------------------------

namespace {

std::string assignment_name(AssignmentStrategy a) {
  return a == AssignmentStrategy::kCla ? "cla" : "global-topk";
}

AssignmentStrategy assignment_from(const std::string& s) {
  if (s == "cla") return AssignmentStrategy::kCla;
  if (s == "global-topk") return AssignmentStrategy::kGlobalTopk;
  throw std::invalid_argument("unknown assignment strategy: " + s);
}

std::string prompt_mode_name(PromptMode m) {
  switch (m) {
    case PromptMode::kNoPrompt: return "no-prompt";
    case PromptMode::kPredictor: return "predictor";
    case PromptMode::kGtPrompt: return "gt-prompt";
  }
  return "predictor";
}

PromptMode prompt_mode_from(const std::string& s) {
  if (s == "no-prompt") return PromptMode::kNoPrompt;
  if (s == "predictor") return PromptMode::kPredictor;
  if (s == "gt-prompt") return PromptMode::kGtPrompt;
  throw std::invalid_argument("unknown prompt mode: " + s);
}

std::string ahr_mode_name(AhrMode m) {
  return m == AhrMode::kAsWritten ? "as-written" : "standard-focal";
}

AhrMode ahr_mode_from(const std::string& s) {
  if (s == "as-written") return AhrMode::kAsWritten;
  if (s == "standard-focal") return AhrMode::kStandardFocal;
  throw std::invalid_argument("unknown ahr mode: " + s);
}

}  // namespace

std::string train_config_to_json(const TrainConfig& cfg) {
  json root{
      {"total_iters", cfg.total_iters},
      {"burn_in_iters", cfg.burn_in_iters},
      {"batch_size", cfg.batch_size},
      {"ema_momentum", cfg.ema_momentum},
      {"unsup_weight", cfg.unsup_weight},
      {"assignment", assignment_name(cfg.assignment)},
      {"prompt_mode", prompt_mode_name(cfg.prompt_mode)},
      {"ahr",
       {{"alpha", cfg.ahr.alpha},
        {"gamma", cfg.ahr.gamma},
        {"thr", cfg.ahr.thr},
        {"w", cfg.ahr.w},
        {"mode", ahr_mode_name(cfg.ahr.mode)}}},
      {"cla", {{"thr", cfg.cla.thr}, {"k", cfg.cla.k}, {"k_j", cfg.cla.k_j}}},
      {"optimizer",
       {{"lr", cfg.optimizer.lr},
        {"momentum", cfg.optimizer.momentum},
        {"weight_decay", cfg.optimizer.weight_decay}}},
      {"views",
       {{"noise_sigma", cfg.views.noise_sigma}, {"flip_prob", cfg.views.flip_prob}}},
      {"decode",
       {{"score_thr", cfg.decode.score_thr}, {"nms_thr", cfg.decode.nms_thr}}},
      {"hidden_dim", cfg.hidden_dim},
      {"init_scale", cfg.init_scale},
      {"eval_interval", cfg.eval_interval},
      {"log_interval", cfg.log_interval},
      {"checkpoint_interval", cfg.checkpoint_interval},
      {"seed", cfg.seed},
  };
  return root.dump(2) + "\n";
}

TrainConfig train_config_from_json(const std::string& text) {
  const json j = parse_json(text, "train config");
  TrainConfig cfg;
  cfg.total_iters = j.value("total_iters", cfg.total_iters);
  cfg.burn_in_iters = j.value("burn_in_iters", cfg.burn_in_iters);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.ema_momentum = j.value("ema_momentum", cfg.ema_momentum);
  cfg.unsup_weight = j.value("unsup_weight", cfg.unsup_weight);
  if (j.contains("assignment")) cfg.assignment = assignment_from(j["assignment"]);
  if (j.contains("prompt_mode")) cfg.prompt_mode = prompt_mode_from(j["prompt_mode"]);
  if (j.contains("ahr")) {
    const json& a = j["ahr"];
    cfg.ahr.alpha = a.value("alpha", cfg.ahr.alpha);
    cfg.ahr.gamma = a.value("gamma", cfg.ahr.gamma);
    cfg.ahr.thr = a.value("thr", cfg.ahr.thr);
    cfg.ahr.w = a.value("w", cfg.ahr.w);
    if (a.contains("mode")) cfg.ahr.mode = ahr_mode_from(a["mode"]);
  }
  if (j.contains("cla")) {
    const json& c = j["cla"];
    cfg.cla.thr = c.value("thr", cfg.cla.thr);
    cfg.cla.k = c.value("k", cfg.cla.k);
    cfg.cla.k_j = c.value("k_j", cfg.cla.k_j);
  }
  if (j.contains("optimizer")) {
    const json& o = j["optimizer"];
    cfg.optimizer.lr = o.value("lr", cfg.optimizer.lr);
    cfg.optimizer.momentum = o.value("momentum", cfg.optimizer.momentum);
    cfg.optimizer.weight_decay = o.value("weight_decay", cfg.optimizer.weight_decay);
  }
  if (j.contains("views")) {
    const json& v = j["views"];
    cfg.views.noise_sigma = v.value("noise_sigma", cfg.views.noise_sigma);
    cfg.views.flip_prob = v.value("flip_prob", cfg.views.flip_prob);
  }
  if (j.contains("decode")) {
    const json& d = j["decode"];
    cfg.decode.score_thr = d.value("score_thr", cfg.decode.score_thr);
    cfg.decode.nms_thr = d.value("nms_thr", cfg.decode.nms_thr);
  }
  cfg.hidden_dim = j.value("hidden_dim", cfg.hidden_dim);
  cfg.init_scale = j.value("init_scale", cfg.init_scale);
  cfg.eval_interval = j.value("eval_interval", cfg.eval_interval);
  cfg.log_interval = j.value("log_interval", cfg.log_interval);
  cfg.checkpoint_interval = j.value("checkpoint_interval", cfg.checkpoint_interval);
  cfg.seed = j.value("seed", cfg.seed);
  return cfg;
}

std::string gen_config_to_json(const GenConfig& cfg) {
  json root{{"categories", specs_to_json(cfg.specs)},
            {"corpus", corpus_config_to_json(cfg.corpus)},
            {"n_scenes", cfg.n_scenes},
            {"density", cfg.density}};
  return root.dump(2) + "\n";
}

GenConfig gen_config_from_json(const std::string& text) {
  const json j = parse_json(text, "gen config");
  GenConfig cfg;
  cfg.specs = specs_from_json(j.at("categories"));
  if (j.contains("corpus")) cfg.corpus = corpus_config_from_json(j["corpus"]);
  cfg.n_scenes = j.value("n_scenes", cfg.n_scenes);
  cfg.density = j.value("density", cfg.density);
  return cfg;
}

uint64_t config_hash(const std::string& canonical_json) {
  return fnv1a64(canonical_json.data(), canonical_json.size());
}

}  // namespace sparsedet::io

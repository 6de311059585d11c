#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sparsedet/assign.hpp"
#include "sparsedet/prompt.hpp"
#include "sparsedet/scene.hpp"
#include "sparsedet/teacher.hpp"

namespace sparsedet::io {

/// Writes content to <path>.tmp in the same directory, then renames over
/// path. Readers never observe partial files.
void atomic_write_file(const std::filesystem::path& path, const std::string& content);

uint64_t file_hash(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Corpus: a JSON index plus a raw little-endian float64 raster blob.

struct CorpusFile {
  std::vector<CategorySpec> specs;
  CorpusConfig config;
  uint64_t seed = 0;
  std::vector<Scene> scenes;
};

void write_corpus(const std::filesystem::path& json_path, const CorpusFile& corpus);
CorpusFile read_corpus(const std::filesystem::path& json_path);

std::vector<std::string> category_names(const std::vector<CategorySpec>& specs);

// ---------------------------------------------------------------------------
// Sparse annotations.

struct AnnotationsFile {
  double rate = 0.0;
  bool at_least_one_per_class = false;
  uint64_t seed = 0;
  uint64_t corpus_hash = 0;  // hash of the corpus JSON these were drawn from
  std::vector<SparseAnnotations> annotations;
};

void write_annotations(const std::filesystem::path& path, const AnnotationsFile& file);
AnnotationsFile read_annotations(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Prompts: scene id -> sorted class-name list (empty list encodes "none").

struct PromptsFile {
  std::string predictor;  // "mock" or "http"
  uint64_t seed = 0;
  std::vector<std::string> categories;
  std::vector<ClassPrompt> prompts;
};

void write_prompts(const std::filesystem::path& path, const PromptsFile& file);
PromptsFile read_prompts(const std::filesystem::path& path);

std::map<int, ClassPrompt> prompt_map(const PromptsFile& file);

// ---------------------------------------------------------------------------
// Checkpoints: text header then a float64 blob of student/teacher/velocity.

struct Checkpoint {
  TrainState state;
  uint64_t config_hash = 0;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Run manifest: artifact paths + content hashes. Consumers verify hashes
// before using an artifact and abort on mismatch.

struct ArtifactRef {
  std::string path;  // relative to the manifest's directory
  uint64_t hash = 0;
};

struct RunManifest {
  uint64_t seed = 0;
  uint64_t config_hash = 0;
  std::map<std::string, ArtifactRef> artifacts;
};

void write_manifest(const std::filesystem::path& path, const RunManifest& manifest);
RunManifest read_manifest(const std::filesystem::path& path);

/// Records name -> (relative path, content hash) in the manifest.
void record_artifact(RunManifest& manifest, const std::string& name,
                     const std::filesystem::path& manifest_dir,
                     const std::filesystem::path& file);

/// Returns the absolute path after checking the stored content hash.
/// Throws std::invalid_argument on a missing entry or hash mismatch.
std::filesystem::path resolve_artifact(const RunManifest& manifest,
                                       const std::string& name,
                                       const std::filesystem::path& manifest_dir);

// ---------------------------------------------------------------------------
// Selection-map exports.

std::string selection_to_text(const SelectionSet& sel);
/// Binary PGM (P5); selected cells render white on black.
std::string selection_to_pgm(const SelectionSet& sel, int grid_h, int grid_w);

// ---------------------------------------------------------------------------
// Config serialization (exact key names documented in docs/FORMATS.md).

std::string train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const std::string& text);

struct GenConfig {
  std::vector<CategorySpec> specs;
  CorpusConfig corpus;
  int n_scenes = 200;
  double density = 5.0;
};

std::string gen_config_to_json(const GenConfig& cfg);
GenConfig gen_config_from_json(const std::string& text);

uint64_t config_hash(const std::string& canonical_json);

}  // namespace sparsedet::io

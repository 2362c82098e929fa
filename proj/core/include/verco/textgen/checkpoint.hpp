#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "verco/textgen/model.hpp"
#include "verco/textgen/vocabulary.hpp"

namespace verco::textgen {

inline constexpr int kCheckpointVersion = 1;

// Versioned flat container: a JSON header (attributes, slot names, tensor
// directory) followed by row-major little-endian f64 tensor data.
struct Checkpoint {
  std::map<std::string, std::string> attributes;
  std::map<std::string, Tensor> tensors;

  // Written to a temporary file first and renamed into place.
  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

  const std::string& attribute(const std::string& key) const;
};

// Model weights, model hyperparameters and the vocabulary.
void store_model(const LanguageModel& model, const Vocabulary& vocab, Checkpoint& out);
LanguageModel restore_model(const Checkpoint& ckpt);
Vocabulary restore_vocabulary(const Checkpoint& ckpt);

}  // namespace verco::textgen

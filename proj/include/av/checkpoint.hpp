#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "av/tensor.hpp"

namespace av::nn {

// Version-tagged textual checkpoint: named (shape, values) triples plus the
// seed and step that produced them, and free-form metadata lines. Values are
// written with enough digits to round-trip doubles exactly.
struct Checkpoint {
  uint64_t seed = 0;
  int64_t step = 0;
  std::map<std::string, std::string> meta;
  std::vector<std::pair<std::string, Mat>> tensors;

  void add(const std::string& name, const Mat& m);
  void add(const Tensor& t);  // uses t.name()
  const Mat& get(const std::string& name) const;
  bool has(const std::string& name) const;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

  // Copies values into same-named parameters; throws on missing or
  // shape-mismatched entries.
  void restore_into(std::vector<Tensor>& params) const;
};

}  // namespace av::nn

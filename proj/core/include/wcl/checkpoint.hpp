#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "wcl/autodiff.hpp"

namespace wcl {

struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

// On disk: an 8-byte little-endian header length, a JSON header
// {"format", "version", "meta", "tensors": [{name, shape, offset, count}]},
// then every tensor as 64-bit little-endian reals. Offsets are in bytes
// from the start of the data block.
struct Checkpoint {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<CheckpointEntry> tensors;

  const CheckpointEntry* find(const std::string& name) const;
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace wcl

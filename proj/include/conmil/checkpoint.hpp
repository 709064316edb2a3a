#pragma once

#include <filesystem>
#include <stdexcept>

#include "conmil/model.hpp"

namespace conmil {
namespace mil {

// Raised when a file is not a model checkpoint this build can read
// (bad magic or unsupported version).
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Checkpoint layout: the magic string "CONMIL1", a little-endian uint64
// byte length, a UTF-8 JSON header (config, seed, epoch, tensor name ->
// shape/offset/count table), then the tensors as concatenated
// little-endian float32 blobs in header order. Saving a freshly loaded
// model reproduces the file byte for byte.
void save_checkpoint(const MilModel& model, const std::filesystem::path& path);
MilModel load_checkpoint(const std::filesystem::path& path);

}  // namespace mil
}  // namespace conmil

#pragma once

#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "compdial/hrl.hpp"

namespace compdial {

inline constexpr int kCheckpointVersion = 1;

/// Binary container: 8-byte magic "CDLGCKPT", u64 header length, JSON header
/// (version, metadata, tensor keys and shapes, payload digest), then every
/// tensor as little-endian IEEE-754 doubles in key order.
struct Checkpoint {
  int version = kCheckpointVersion;
  std::string fingerprint;                   // ontology fingerprint
  std::map<std::string, std::string> meta;   // family, ontology name, rng state, ...
  std::map<std::string, long> counters;
  std::map<std::string, Matrix> tensors;     // "<net>:<param key>[#m|#v|#t]"
};

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path);
/// Throws IoError ("corrupt checkpoint", unsupported version, unreadable file).
Checkpoint load_checkpoint(const std::string& path);

/// Networks in a checkpoint: "top", "low", "top_target", "low_target".
std::vector<std::string> checkpoint_networks();

/// Full trainer state: parameters of all four networks, Adam state of the
/// online networks, counters and the training RNG.
Checkpoint capture_agent(const HierarchicalAgent& agent, const std::string& fingerprint);
/// Inverse of capture_agent; the agent must have the same architecture.
void restore_agent(const Checkpoint& checkpoint, HierarchicalAgent& agent);

/// Prints a warning when the checkpoint was written for another ontology.
/// Returns true when the fingerprints agree.
bool check_fingerprint(const Checkpoint& checkpoint, const std::string& fingerprint, std::ostream& warnings);

struct TransferReport {
  std::size_t copied = 0;
  std::vector<std::string> missing;     // needed by the target, absent from the checkpoint
  std::vector<std::string> mismatched;  // present with a different shape
  std::vector<std::string> unused;      // in the checkpoint, not needed by the target
};

/// Copies the online parameters of `checkpoint` into `agent`, syncs the
/// targets and resets optimizer state, buffers and counters. Throws
/// ConfigError listing the offending keys on any missing or mismatched key.
TransferReport transfer_load(const Checkpoint& checkpoint, HierarchicalAgent& agent);

}  // namespace compdial

#pragma once

#include <string>

#include "r2upp/graph.hpp"

namespace r2upp {

// Thrown when a checkpoint does not match the expected architecture;
// maps to exit code 5.
struct CheckpointError : std::runtime_error {
    explicit CheckpointError(const std::string& msg) : std::runtime_error(msg) {}
};

// Format: magic "R2UPP1\0", little-endian u64 header length, JSON header
// (architecture config + ordered name/shape/offset table), then 32-bit
// little-endian float payloads in table order.
void save_checkpoint(const Model& model, const std::string& path);

Model load_checkpoint(const std::string& path);

std::string arch_to_json(const ArchitectureConfig& config);
ArchitectureConfig arch_from_json(const std::string& json_text);

}  // namespace r2upp

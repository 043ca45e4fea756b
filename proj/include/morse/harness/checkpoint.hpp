#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "morse/diffusion.hpp"
#include "morse/mlp.hpp"
#include "morse/shared_dot.hpp"

namespace morse::harness {

enum class CheckpointKind : std::uint32_t { DashMlp = 1, SharedDot = 2 };

std::string to_string(CheckpointKind k);

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Self-describing parameter container. Byte layout, all integers and floats little-endian:
///   "MORSECKP" | u32 version | u32 kind | u64 seed | u64 iterations | u64 schedule fingerprint
///   | u64 n + n bytes of architecture JSON | u64 m + m f64 parameters | u64 FNV-1a of all preceding bytes
struct Checkpoint {
    std::uint32_t version = kCheckpointVersion;
    CheckpointKind kind = CheckpointKind::DashMlp;
    std::uint64_t seed = 0;
    std::uint64_t iterations = 0;
    std::uint64_t fingerprint = 0;
    std::string architecture;  // JSON text
    Vector payload;
};

std::vector<unsigned char> encode_checkpoint(const Checkpoint& ckpt);
/// IntegrityError on bad magic, version, length, or checksum.
Checkpoint decode_checkpoint(const std::vector<unsigned char>& bytes);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);
/// As load_checkpoint, plus a kind-tag check.
Checkpoint load_checkpoint(const std::string& path, CheckpointKind expected);

/// IntegrityError naming both fingerprints when the checkpoint was trained under another schedule.
void require_fingerprint(const Checkpoint& ckpt, const NoiseSchedule<double>& sched);

Checkpoint dash_checkpoint(const MlpDenoiser& dash, const NoiseSchedule<double>& sched, std::uint64_t seed,
                           std::uint64_t iterations);
MlpDenoiser dash_from_checkpoint(const Checkpoint& ckpt, const NoiseSchedule<double>& sched);

/// Payload: frozen base parameters followed by the trainable parameters.
Checkpoint dot_checkpoint(const SharedDot& dot, const NoiseSchedule<double>& sched, std::uint64_t seed,
                          std::uint64_t iterations);
SharedDot dot_from_checkpoint(const Checkpoint& ckpt, const NoiseSchedule<double>& sched);

std::string hex64(std::uint64_t v);

}  // namespace morse::harness

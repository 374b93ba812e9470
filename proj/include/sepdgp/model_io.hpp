#pragma once

#include <string>

#include "sepdgp/network.hpp"
#include "sepdgp/trainer.hpp"

namespace sepdgp::model_io {

struct TrainingMeta {
    std::uint64_t seed = 0;
    long iterations = 0;
    std::string config_hash;
};

/// Versioned on-disk model: architecture, standardizer, per-layer parameters
/// and per-site natural parameters. Serialized as JSON with lossless float
/// round-tripping, so save -> load -> save is byte identical.
struct ModelFile {
    static constexpr int kFormatVersion = 1;

    std::string architecture;
    network::DgpModel model;
    network::InferenceState state;
    TrainingMeta meta;
};

void save_model(const ModelFile& file, const std::string& path);
ModelFile load_model(const std::string& path);

/// FNV-1a hash of the canonical configuration rendering; stable across runs.
std::string config_hash(const trainer::TrainConfig& cfg);

/// Lossless formatting for CSV output (17 significant digits).
std::string format_double(double v);

/// Per-iteration training log, RFC-4180 with a header row.
void write_history_csv(const std::string& path,
                       const std::vector<trainer::IterationRecord>& history);

}  // namespace sepdgp::model_io

#pragma once

#include "catgan/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

namespace catgan {

inline constexpr int kModelFormatVersion = 1;
inline constexpr int kReportSchemaVersion = 1;

/// Metadata kept next to the weights so evaluation can redo the labeled split.
struct ModelFile {
  TrainedModel model;
  std::uint64_t seed = 0;
  int labeled_target_per_class = 10;
};

/// JSON model document; layout is described in docs/formats.md.
std::string model_to_json(const ModelFile& file);
ModelFile model_from_json(const std::string& text);

void save_model(const ModelFile& file, const std::filesystem::path& path);
ModelFile load_model(const std::filesystem::path& path);

/// Report JSON. Wall-clock time is only emitted when `include_timing` is set,
/// which keeps default reports byte-reproducible.
std::string report_to_json(const TrainReport& report, const std::optional<AccuracyReport>& accuracy,
                           bool include_timing = false);

std::string accuracy_to_json(const AccuracyReport& accuracy);

}  // namespace catgan

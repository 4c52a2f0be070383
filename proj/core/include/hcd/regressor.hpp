#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "hcd/gp.hpp"
#include "hcd/hpt.hpp"
#include "hcd/model.hpp"
#include "hcd/raster.hpp"
#include "hcd/rf.hpp"
#include "hcd/svr.hpp"

namespace hcd {

using Hyperparameters = std::variant<GpHyper, SvrHyper, RfHyper, HptHyper>;

/// Method choice plus its hyperparameters. The method is the active
/// alternative of `hyper`, so the two can never disagree. `seed` drives
/// every stochastic stage of fitting (GP restarts, RF bootstraps).
struct RegressorSpec {
  Hyperparameters hyper = RfHyper{};
  std::uint64_t seed = 0;

  [[nodiscard]] Method method() const noexcept { return static_cast<Method>(hyper.index()); }
};

/// Spec holding the default hyperparameters of `method`.
RegressorSpec default_spec(Method method, std::uint64_t seed = 0);

std::unique_ptr<Model> fit(const RegressorSpec& spec, const TrainingSet& set);

/// Applies the model to every pixel vector of `raster`.
Raster predict_raster(const Model& model, const Raster& raster);

/// Short "key=value;..." description of the hyperparameters, free of commas
/// so it can sit unquoted in a CSV column.
std::string describe(const RegressorSpec& spec);

/// JSON object text {"method": ..., "seed": ..., "<method>": {...}}.
std::string spec_to_json(const RegressorSpec& spec);
/// Parses the object written by spec_to_json(); missing keys keep defaults.
RegressorSpec spec_from_json(const std::string& json_text);

// HCDM container: "HCDM", u32 version, u32 method tag, u32 input_dim,
// u32 output_dim, then the back-end payload.
std::vector<std::byte> serialize_model(const Model& model);
std::unique_ptr<Model> deserialize_model(std::span<const std::byte> bytes);
void save_model(const Model& model, const std::filesystem::path& path);
std::unique_ptr<Model> load_model(const std::filesystem::path& path);

}  // namespace hcd

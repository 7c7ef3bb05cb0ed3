#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "s2s/pipeline.hpp"
#include "s2s/simulation.hpp"

// One JSON file drives every subcommand. Sections: scene, acaf, cgg,
// phase_linking, pipeline, power, sgrid. Missing keys keep their defaults,
// unknown keys are rejected so typos do not pass silently.
namespace s2s {

struct Config {
  SceneSpec scene;
  PipelineConfig pipeline;
  PowerSetup power;
  DecayParams power_reference{20.0, 0.3};
  std::vector<DecayParams> power_grid;
  SGridSetup sgrid;

  void validate() const;
};

/// Library defaults; `paper_scale` selects the 30-acquisition 200 x 200 scene.
Config default_config(bool paper_scale = false);

/// Defaults overlaid with the file. Throws FormatError on malformed JSON,
/// unknown keys or wrongly typed values.
Config load_config(const std::filesystem::path& path, bool paper_scale = false);
Config parse_config(const std::string& text, bool paper_scale = false);

/// Every setting, in the file format (round trips through parse_config).
std::string dump_config(const Config& config);

}  // namespace s2s

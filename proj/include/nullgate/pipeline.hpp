// Copyright 2026 The nullgate Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "nullgate/gated_adapter.hpp"
#include "nullgate/inlp.hpp"
#include "nullgate/probes.hpp"
#include "nullgate/synth.hpp"

namespace nullgate {

enum ExitCode : int {
  kExitOk = 0,
  kExitInput = 2,
  kExitNonConvergence = 3,
  kExitDivergence = 4,
};

struct RffSettings {
  Eigen::Index D = 2048;  // 0 disables the Fourier features
  std::optional<double> sigma;  // empty means median heuristic
  double eta = 0.05;
  std::uint64_t seed = 0;
};

struct PipelineConfig {
  std::string out_dir = "nullgate_out";
  std::string embeddings;  // defaults to <out>/synth/data.ndbs
  std::string items;       // defaults to <out>/synth/truth.json
  std::vector<std::string> attributes;  // empty means every attribute
  double test_fraction = 0.25;
  RffSettings rff;
  InlpConfig inlp;
  MlpConfig audit;
  AdapterTrainConfig adapter;
  Eigen::Index adapter_rank = 8;
  int negatives = 99;
  SynthConfig synth;
  std::uint64_t seed = 0;
  bool quiet = false;
};

// Every key a config file may set, with its default value.
nlohmann::json default_config_json();
// Merges the file (if any) over the defaults. Unknown keys are rejected.
nlohmann::json load_config_json(const std::string& path);
// Sets a dotted key ("inlp.tau") from a command-line string. The value is
// read as JSON when it parses, otherwise as a plain string.
void apply_override(nlohmann::json& config, const std::string& dotted_key,
                    const std::string& value);
PipelineConfig parse_config(const nlohmann::json& config);

int cmd_synth(const PipelineConfig& config, std::ostream& log);
int cmd_probe(const PipelineConfig& config, std::ostream& log);
int cmd_debias(const PipelineConfig& config, std::ostream& log);
int cmd_train_adapter(const PipelineConfig& config, std::ostream& log);
int cmd_report(const PipelineConfig& config, std::ostream& log);

// Dispatches by command name and maps errors to exit codes, printing the
// message to err.
int run_command(const std::string& command, const PipelineConfig& config,
                std::ostream& log, std::ostream& err);

}  // namespace nullgate

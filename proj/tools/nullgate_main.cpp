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

// Command-line entry point: nullgate <command> [--config f] [--key.path v].

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nullgate/pipeline.hpp"

namespace {

// Discards everything written to it.
class NullBuffer : public std::streambuf {
 protected:
  int overflow(int c) override { return c; }
};

// Turns leftover "--a.b value" / "--a.b=value" arguments into overrides.
void apply_extras(nlohmann::json& config, const std::vector<std::string>& extras) {
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& arg = extras[i];
    if (arg.rfind("--", 0) != 0 || arg.size() <= 2) {
      throw nullgate::InputError("unexpected argument '" + arg + "'");
    }
    std::string key = arg.substr(2);
    std::string value;
    if (const auto eq = key.find('='); eq != std::string::npos) {
      value = key.substr(eq + 1);
      key = key.substr(0, eq);
    } else {
      if (i + 1 >= extras.size()) {
        throw nullgate::InputError("option '" + arg + "' needs a value");
      }
      value = extras[++i];
    }
    nullgate::apply_override(config, key, value);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nullgate: kernelized null-space debiasing with a gated adapter"};
  app.allow_extras();
  app.fallthrough();
  app.require_subcommand(1, 1);

  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool quiet = false;
  app.add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "Master seed");
  app.add_option("--out", out_dir, "Output directory");
  app.add_flag("--quiet", quiet, "Suppress progress output");

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"synth", "Generate a synthetic benchmark dataset"},
      {"probe", "Audit raw embeddings for attribute leakage"},
      {"debias", "Fit per-attribute and composite null-space projectors"},
      {"train-adapter", "Train the gated low-rank adapter"},
      {"report", "Consolidated leakage and Hit@k report"},
  };
  for (const auto& [name, help] : commands) {
    app.add_subcommand(name, help)->allow_extras();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : nullgate::kExitInput;
  }
  CLI::App* sub = app.get_subcommands().front();

  nullgate::PipelineConfig config;
  try {
    nlohmann::json raw = nullgate::load_config_json(config_path);
    std::vector<std::string> extras = app.remaining(true);
    apply_extras(raw, extras);
    if (*seed_opt) raw["seed"] = seed;
    if (!out_dir.empty()) raw["paths"]["out"] = out_dir;
    config = nullgate::parse_config(raw);
    config.quiet = quiet;
  } catch (const nullgate::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return nullgate::kExitInput;
  }

  NullBuffer null_buffer;
  std::ostream null_stream(&null_buffer);
  std::ostream& log = quiet ? null_stream : std::cout;
  return nullgate::run_command(sub->get_name(), config, log, std::cerr);
}

#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "exitrack/cli/config.hpp"
#include "exitrack/data/sequence.hpp"
#include "exitrack/inference/tracker.hpp"

namespace exitrack::cli {

// Runs the exitrack command line (args excludes the program name). Returns the
// process exit code; failures are reported on `err` and yield a nonzero code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Dataset layout written by gen-data: <root>/{train,val,test}/<sequence>/.
void generate_dataset(const RunConfig& config, const std::filesystem::path& root);

// A trained model with the configuration stored in its checkpoint.
struct LoadedModel {
  RunConfig config;
  inference::Model model;
};
LoadedModel load_checkpoint(const std::filesystem::path& path);

inference::TrackOptions track_options(const RunConfig& config);
// Training settings with crop sizes and seed synchronised to the model.
objectives::TrainConfig train_config(const RunConfig& config);

}  // namespace exitrack::cli

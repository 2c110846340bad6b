#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "p3d/train.hpp"

namespace p3d::cli {

enum ExitCode : int {
    kOk = 0,
    kUsage = 2,
    kData = 3,
    kNumeric = 4,
};

/// Parses arguments, runs one subcommand and maps failures to exit codes.
int run(int argc, const char* const* argv);

/// Pairs `<id>.clean.vol` with `<id>.corrupt.vol` in `dir`, sorted by id.
std::vector<VolumePair> load_dataset(const std::filesystem::path& dir, std::vector<std::string>* ids = nullptr);

}  // namespace p3d::cli

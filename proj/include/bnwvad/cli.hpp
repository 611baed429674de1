#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "bnwvad/data.hpp"
#include "bnwvad/trainer.hpp"

namespace bnwvad::cli {

/// Runs one command. Returns 0 on success, 2 on a usage error and 1 on a
/// runtime error (diagnostic on `err`).
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// video_id,snippet_index,pred,dfm1,dfm2,score
std::string score_csv(const Dataset& ds, const std::vector<ScoredVideo>& scored);
/// Fused score column of a score CSV, keyed by video id, ordered by snippet.
std::map<std::string, std::vector<double>> read_score_csv(const std::string& text);

}  // namespace bnwvad::cli

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "pixeltag/scoring.hpp"
#include "pixeltag/selection.hpp"
#include "pixeltag/distill.hpp"

namespace pixeltag::cli {

// Exit codes.
constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kDataError = 3;

// Runs the command line; JSON lines go to `out`, human summaries to `err`.
// `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Output line formats shared by the subcommands and their tests.
std::string score_line(const std::string& sample_id, const TagScores& scores);
std::string selection_line(const std::string& sample_id, const TagScores& scores,
                           const SelectionPolicy& policy, const SelectionResult& result);
std::string loss_line(const std::string& sample_id, const std::vector<std::string>& selected,
                      const LossReport& report);

}  // namespace pixeltag::cli

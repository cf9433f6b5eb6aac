#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "ptgan/evaluation.hpp"

namespace ptgan::cli {

enum ExitCode : int { kOk = 0, kValidation = 2, kRuntime = 3 };

/// Runs one invocation. `args` excludes the program name. Relative paths are
/// resolved against --workspace, then $PTGAN_WORKSPACE, then the current directory.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// One row of the comparison table.
struct ReportRow {
  std::string name;
  std::string train;
  std::string eval;
  double rank1 = 0.0;
  double rank10 = 0.0;
  double map = 0.0;
};

ReportRow row_from_report(const std::string& name, const EvalReport& report);
std::string format_table(const std::vector<ReportRow>& rows);
void write_rows_csv(const std::vector<ReportRow>& rows, const std::filesystem::path& path);
std::vector<ReportRow> read_rows_csv(const std::filesystem::path& path);

}  // namespace ptgan::cli

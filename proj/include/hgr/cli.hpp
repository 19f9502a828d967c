#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace hgr {

/// Runs one `hgr` command line. args[0] is the program name.
/// Returns 0 on success, 1 on a domain error (one line on `err`), 2 on a
/// usage error (usage text on `err`).
int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hgr

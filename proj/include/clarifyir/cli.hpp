#pragma once

#include <ostream>

namespace clarifyir {

// Exit codes: 0 ok, 1 runtime error, 2 usage error. Runtime errors print a
// single line "<E_CODE>: <message>" to `err`.
int cli_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace clarifyir

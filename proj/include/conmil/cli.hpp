#pragma once

#include <string>
#include <vector>

namespace conmil {
namespace cli {

// Exit codes: 0 success, 2 usage/config error, 3 artifact incompatibility,
// 4 runtime numeric failure.
int run(const std::vector<std::string>& args);
int run(int argc, char** argv);

}  // namespace cli
}  // namespace conmil

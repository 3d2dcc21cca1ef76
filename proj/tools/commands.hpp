#pragma once

#include <string>

#include "cli_common.hpp"

namespace repdiff::cli {

int cmd_verify(const CommonArgs& args);
int cmd_train(const CommonArgs& args);
int cmd_sample(const CommonArgs& args, const std::string& checkpoint, long count);
int cmd_eval(const CommonArgs& args, const std::string& checkpoint);
int cmd_tvscaling(const CommonArgs& args);
int cmd_gradcheck(const CommonArgs& args);
int cmd_bound(const CommonArgs& args);

}  // namespace repdiff::cli

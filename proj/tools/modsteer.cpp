#include <iostream>

#include <spdlog/cfg/env.h>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "modsteer/cli.hpp"

int main(int argc, char ** argv) {
    // stdout carries command results; logs go to stderr. SPDLOG_LEVEL=debug for more.
    spdlog::set_default_logger(spdlog::stderr_logger_mt("modsteer"));
    spdlog::cfg::load_env_levels();
    return modsteer::run_cli({argv, argv + argc}, std::cout, std::cerr);
}

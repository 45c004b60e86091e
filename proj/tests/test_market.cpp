#include <catch2/catch_amalgamated.hpp>
#include "regmarket/experiments.hpp"
#include "regmarket/replay.hpp"

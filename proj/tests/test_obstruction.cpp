#include "doctest.h"

TEST_SUITE("obstruction") {}

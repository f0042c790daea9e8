#include "doctest.h"

TEST_SUITE("return_method") {}

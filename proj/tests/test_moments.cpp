#include "doctest.h"

TEST_SUITE("moments") {}

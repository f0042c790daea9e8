#include "doctest.h"

TEST_SUITE("linearized") {}

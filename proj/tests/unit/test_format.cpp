#include "tvflcm/format.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

using namespace tvflcm;

TEST_SUITE("format") {

TEST_CASE("shortest round trip") {
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(2.0) == "2");
  CHECK(format_double(-3.5) == "-3.5");
  CHECK(format_double(std::numeric_limits<double>::infinity()) == "inf");
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 1000; ++i) {
    const double v = u(rng) / 7.0;
    double back = 0;
    REQUIRE(parse_double(format_double(v), back));
    CHECK(back == v);
  }
}

TEST_CASE("parse rejects junk") {
  double v = 0;
  CHECK_FALSE(parse_double("", v));
  CHECK_FALSE(parse_double("1.5x", v));
  CHECK_FALSE(parse_double("abc", v));
  CHECK(parse_double(" 2.5 ", v));
  CHECK(v == 2.5);
  CHECK(parse_double("inf", v));
  CHECK(std::isinf(v));
}

TEST_CASE("split and trim") {
  const auto f = split_fields("a, b,,c");
  REQUIRE(f.size() == 4);
  CHECK(trim(f[1]) == "b");
  CHECK(f[2].empty());
}

}

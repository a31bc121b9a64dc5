#include "cvp/error.hpp"
#include "cvp/params.hpp"

#include <doctest.h>

using cvp::InvalidInput;
using cvp::ParamFile;

TEST_CASE("parses numbers, lists, flags and comments") {
  const auto pf = ParamFile::from_string(
      "# model\nsigma = 0.2   # annual\nmu=-1e-2\nlist = 1, 2.5 ,-3\nflag = yes\nname = rational\nn = 400\n");
  CHECK(pf.number("sigma") == 0.2);
  CHECK(pf.number("mu") == -0.01);
  CHECK(pf.numbers("list", 3) == std::vector<double>{1.0, 2.5, -3.0});
  CHECK(pf.flag("flag", false));
  CHECK(pf.text("name") == "rational");
  CHECK(pf.count("n") == 400);
  CHECK(pf.number("absent", 7.0) == 7.0);
  CHECK_NOTHROW(pf.check_all_used("test"));
}

TEST_CASE("unknown keys are reported with line numbers") {
  const auto pf = ParamFile::from_string("sigma = 0.2\nlamda = 0.5\n");
  pf.number("sigma");
  try {
    pf.check_all_used("bsm");
    FAIL("expected InvalidInput");
  } catch (const InvalidInput& e) {
    CHECK(std::string(e.what()).find("line 2: 'lamda'") != std::string::npos);
  }
}

TEST_CASE("malformed files are rejected") {
  CHECK_THROWS_AS(ParamFile::from_string("a = 1\na = 2\n"), InvalidInput);
  CHECK_THROWS_AS(ParamFile::from_string("just text\n"), InvalidInput);
  CHECK_THROWS_AS(ParamFile::from_string("a =\n"), InvalidInput);
  const auto pf = ParamFile::from_string("x = abc\nn = 2.5\nl = 1,,2\nb = maybe\n");
  CHECK_THROWS_AS(pf.number("x"), InvalidInput);
  CHECK_THROWS_AS(pf.count("n"), InvalidInput);
  CHECK_THROWS_AS(pf.numbers("l"), InvalidInput);
  CHECK_THROWS_AS(pf.flag("b", false), InvalidInput);
  CHECK_THROWS_AS(pf.number("missing"), InvalidInput);
  CHECK_THROWS_AS(ParamFile::from_string("l = 1,2\n").numbers("l", 3), InvalidInput);
}

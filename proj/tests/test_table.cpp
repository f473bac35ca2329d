#include <cmath>
#include <sstream>

#include "doctest.h"
#include "redirect/table.hpp"
#include "support.hpp"

using namespace redirect;

TEST_CASE("number formatting") {
  CHECK(format_number(0.1) == "0.1");
  CHECK(format_number(-0.0) == "0");
  CHECK(format_number(1e-20) == "1e-20");
  CHECK(format_number(3.0) == "3");
  CHECK(format_number(NAN) == "");
  CHECK(format_number(INFINITY) == "inf");
  CHECK(format_number(-INFINITY) == "-inf");
  CHECK(format_number(std::size_t{42}) == "42");
  // Shortest form round-trips.
  const double v = 0.7310585786300049;
  CHECK(std::stod(format_number(v)) == v);
}

TEST_CASE("csv quoting") {
  CHECK(csv_field("plain") == "plain");
  CHECK(csv_field("a,b") == "\"a,b\"");
  CHECK(csv_field("say \"hi\"") == "\"say \"\"hi\"\"\"");
  CHECK(csv_field("two\nlines") == "\"two\nlines\"");
  std::ostringstream out;
  CsvWriter w(out);
  w.row({"a", "b,c"});
  w.row(std::vector<std::string>{"1", ""});
  CHECK(out.str() == "a,\"b,c\"\n1,\n");
}

TEST_CASE("write_file replaces the target") {
  const auto dir = redirect::testing::scratch_dir("table");
  write_file(dir / "x.txt", "first");
  write_file(dir / "x.txt", "second");
  CHECK(redirect::testing::read_text(dir / "x.txt") == "second");
  CHECK_FALSE(std::filesystem::exists(dir / "x.txt.tmp"));
  std::filesystem::remove_all(dir);
}

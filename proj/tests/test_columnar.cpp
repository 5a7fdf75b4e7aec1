#include <catch2/catch_amalgamated.hpp>

#include <cstdint>
#include <string>
#include <vector>

#include "apx/columnar.hpp"

#include "test_util.hpp"

using namespace apx;
using testutil::TempDir;
using testutil::write_file;

namespace {

std::string two_table_manifest() {
  return R"({
  "tables": [
    {
      "name": "trips",
      "file": "trips.csv",
      "partition_key": "user",
      "columns": [
        {"name": "user", "type": "int64"},
        {"name": "fare", "type": "float64"},
        {"name": "city", "type": "category"}
      ]
    },
    {
      "name": "plain",
      "file": "plain.csv",
      "columns": [{"name": "x", "type": "float64"}]
    }
  ]
})";
}

}  // namespace

TEST_CASE("load_dataset groups rows per partition key and keeps their order",
          "[columnar]") {
  TempDir dir;
  // Keys arrive interleaved; grouping must be a stable reorder.
  write_file(dir.file("trips.csv"),
             "user,fare,city\n"
             "7,1.5,sf\n"
             "3,2.0,nyc\n"
             "7,2.5,sf\n"
             "3,9.0,la\n"
             "7,0.5,nyc\n");
  write_file(dir.file("plain.csv"), "x\n1\n2\n");
  write_file(dir.file("m.json"), two_table_manifest());

  const Dataset ds = load_dataset(dir.file("m.json"));
  const Table& trips = ds.table("trips");
  REQUIRE(trips.row_count == 5);

  RowRange r3 = trips.int_key_index.at(3);
  RowRange r7 = trips.int_key_index.at(7);
  CHECK(r3.size() == 2);
  CHECK(r7.size() == 3);

  const Column& fare = trips.column("fare");
  // Stable grouping: within a key, rows keep file order.
  CHECK(fare.f64[r3.begin] == 2.0);
  CHECK(fare.f64[r3.begin + 1] == 9.0);
  CHECK(fare.f64[r7.begin] == 1.5);
  CHECK(fare.f64[r7.begin + 1] == 2.5);
  CHECK(fare.f64[r7.begin + 2] == 0.5);

  // Ranges tile the table without overlap.
  CHECK(r3.end - r3.begin + (r7.end - r7.begin) == trips.row_count);
}

TEST_CASE("string columns are dictionary-encoded", "[columnar]") {
  TempDir dir;
  write_file(dir.file("trips.csv"),
             "user,fare,city\n1,1.0,sf\n1,2.0,nyc\n1,3.0,sf\n");
  write_file(dir.file("plain.csv"), "x\n1\n");
  write_file(dir.file("m.json"), two_table_manifest());
  const Dataset ds = load_dataset(dir.file("m.json"));
  const Column& city = ds.table("trips").column("city");
  REQUIRE(city.dict.size() == 2);
  CHECK(city.codes.size() == 3);
  CHECK(city.codes[0] == city.codes[2]);
  CHECK(city.codes[0] != city.codes[1]);
  CHECK(city.code_of("sf").has_value());
  CHECK_FALSE(city.code_of("berlin").has_value());
}

TEST_CASE("loader errors carry file, row, and column context", "[columnar]") {
  TempDir dir;
  write_file(dir.file("plain.csv"), "x\n1\noops\n");
  write_file(dir.file("trips.csv"), "user,fare,city\n1,1.0,sf\n");
  write_file(dir.file("m.json"), two_table_manifest());
  try {
    load_dataset(dir.file("m.json"));
    FAIL("expected an error");
  } catch (const Error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("plain.csv:3") != std::string::npos);
    CHECK(msg.find("'x'") != std::string::npos);
  }
}

TEST_CASE("non-finite float cells are rejected", "[columnar]") {
  TempDir dir;
  write_file(dir.file("plain.csv"), "x\nnan\n");
  write_file(dir.file("trips.csv"), "user,fare,city\n1,1.0,sf\n");
  write_file(dir.file("m.json"), two_table_manifest());
  CHECK_THROWS_WITH(load_dataset(dir.file("m.json")),
                    Catch::Matchers::ContainsSubstring("finite"));
}

TEST_CASE("schema problems are reported by name", "[columnar]") {
  TempDir dir;

  SECTION("missing declared column") {
    write_file(dir.file("t.csv"), "g,w\n1,2\n");
    CHECK_THROWS_WITH(
        load_table("t", dir.file("t.csv"),
                   {{"g", ColumnType::Int64}, {"v", ColumnType::Float64}}, "g"),
        Catch::Matchers::ContainsSubstring("'v'"));
  }

  SECTION("extra undeclared column") {
    write_file(dir.file("t.csv"), "g,v,extra\n1,2,3\n");
    CHECK_THROWS_AS(
        load_table("t", dir.file("t.csv"),
                   {{"g", ColumnType::Int64}, {"v", ColumnType::Float64}}, "g"),
        Error);
  }

  SECTION("float partition keys are rejected") {
    write_file(dir.file("t.csv"), "g,v\n1.5,2\n");
    CHECK_THROWS_WITH(
        load_table("t", dir.file("t.csv"),
                   {{"g", ColumnType::Float64}, {"v", ColumnType::Float64}}, "g"),
        Catch::Matchers::ContainsSubstring("partition key"));
  }

  SECTION("duplicate table names in the manifest") {
    write_file(dir.file("trips.csv"), "user,fare,city\n1,1.0,sf\n");
    write_file(dir.file("m.json"), R"({
  "tables": [
    {"name": "t", "file": "trips.csv", "partition_key": "user",
     "columns": [{"name": "user", "type": "int64"},
                 {"name": "fare", "type": "float64"},
                 {"name": "city", "type": "category"}]},
    {"name": "t", "file": "trips.csv", "partition_key": "user",
     "columns": [{"name": "user", "type": "int64"},
                 {"name": "fare", "type": "float64"},
                 {"name": "city", "type": "category"}]}
  ]
})");
    CHECK_THROWS_WITH(load_dataset(dir.file("m.json")),
                      Catch::Matchers::ContainsSubstring("duplicate table 't'"));
  }
}

TEST_CASE("string partition keys group by value", "[columnar]") {
  TempDir dir;
  write_file(dir.file("t.csv"), "city,v\nsf,1\nnyc,2\nsf,3\n");
  const Table t = load_table(
      "t", dir.file("t.csv"),
      {{"city", ColumnType::StringKey}, {"v", ColumnType::Float64}}, "city");
  const RowRange r = t.str_key_index.at("sf");
  CHECK(r.size() == 2);
  CHECK(t.column("v").f64[r.begin] == 1.0);
  CHECK(t.column("v").f64[r.begin + 1] == 3.0);
  CHECK(t.str_key_index.at("nyc").size() == 1);
}

#pragma once

// In-memory columnar store. Tables are loaded from CSV via a JSON schema
// manifest, rows are regrouped so each partition key owns a contiguous
// row-index range, and a per-table key index maps key value -> range.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "apx/common.hpp"
#include "apx/csv.hpp"

namespace apx {

enum class ColumnType : std::uint8_t { Float64, Int64, Category, StringKey };

inline ColumnType column_type_from_string(const std::string& s) {
  if (s == "float64") return ColumnType::Float64;
  if (s == "int64") return ColumnType::Int64;
  if (s == "category") return ColumnType::Category;
  if (s == "string-key") return ColumnType::StringKey;
  fail("unknown column type: '" + s + "'");
}

inline const char* column_type_name(ColumnType t) {
  switch (t) {
    case ColumnType::Float64: return "float64";
    case ColumnType::Int64: return "int64";
    case ColumnType::Category: return "category";
    case ColumnType::StringKey: return "string-key";
  }
  return "?";
}

// One column. Exactly one of the value vectors is populated, chosen by type;
// category and string-key columns are dictionary-encoded.
struct Column {
  std::string name;
  ColumnType type = ColumnType::Float64;
  std::vector<double> f64;
  std::vector<std::int64_t> i64;
  std::vector<std::uint32_t> codes;
  std::vector<std::string> dict;
  std::unordered_map<std::string, std::uint32_t> dict_index;

  std::size_t size() const {
    switch (type) {
      case ColumnType::Float64: return f64.size();
      case ColumnType::Int64: return i64.size();
      default: return codes.size();
    }
  }

  bool is_string() const {
    return type == ColumnType::Category || type == ColumnType::StringKey;
  }

  std::uint32_t intern(const std::string& value) {
    auto it = dict_index.find(value);
    if (it != dict_index.end()) return it->second;
    const auto code = static_cast<std::uint32_t>(dict.size());
    dict.push_back(value);
    dict_index.emplace(value, code);
    return code;
  }

  // Code for an existing dictionary entry; nullopt when the value never
  // occurs in the column (callers treat that as a never-matching literal).
  std::optional<std::uint32_t> code_of(const std::string& value) const {
    auto it = dict_index.find(value);
    if (it == dict_index.end()) return std::nullopt;
    return it->second;
  }

  // Numeric view used by aggregation; only valid for numeric columns.
  double value_as_double(std::size_t row) const {
    return type == ColumnType::Float64 ? f64[row]
                                       : static_cast<double>(i64[row]);
  }
};

struct RowRange {
  std::uint64_t begin = 0;
  std::uint64_t end = 0;
  std::uint64_t size() const { return end - begin; }
};

struct Table {
  std::string name;
  std::vector<Column> columns;
  std::unordered_map<std::string, std::size_t> column_index;
  std::string partition_key;
  std::uint64_t row_count = 0;
  // Key index; one of the maps is populated depending on the key column type.
  std::unordered_map<std::int64_t, RowRange> int_key_index;
  std::unordered_map<std::string, RowRange> str_key_index;

  const Column* find_column(const std::string& col) const {
    auto it = column_index.find(col);
    return it == column_index.end() ? nullptr : &columns[it->second];
  }

  const Column& column(const std::string& col) const {
    const Column* c = find_column(col);
    if (c == nullptr) fail("table '" + name + "' has no column '" + col + "'");
    return *c;
  }
};

struct Dataset {
  std::unordered_map<std::string, Table> tables;

  const Table& table(const std::string& name) const {
    auto it = tables.find(name);
    if (it == tables.end()) fail("dataset has no table '" + name + "'");
    return it->second;
  }
};

namespace detail {

inline void parse_cell(Column& col, const std::string& cell, const std::string& where) {
  switch (col.type) {
    case ColumnType::Float64: {
      const double v = parse_f64(cell, where);
      require(std::isfinite(v), where + ": non-finite float64 value '" + cell + "'");
      col.f64.push_back(v);
      break;
    }
    case ColumnType::Int64:
      col.i64.push_back(parse_i64(cell, where));
      break;
    case ColumnType::Category:
    case ColumnType::StringKey:
      col.codes.push_back(col.intern(cell));
      break;
  }
}

// Reorders rows so equal partition keys are contiguous (stable by original
// row order within a key) and builds the key -> range index.
inline void build_partition_index(Table& table, const std::string& where) {
  const Column& key = table.column(table.partition_key);
  require(key.type != ColumnType::Float64,
          where + ": partition key column '" + key.name + "' must not be float64");

  std::vector<std::uint64_t> order(table.row_count);
  std::iota(order.begin(), order.end(), 0);
  if (key.type == ColumnType::Int64) {
    std::stable_sort(order.begin(), order.end(),
                     [&](std::uint64_t a, std::uint64_t b) { return key.i64[a] < key.i64[b]; });
  } else {
    std::stable_sort(order.begin(), order.end(), [&](std::uint64_t a, std::uint64_t b) {
      return key.dict[key.codes[a]] < key.dict[key.codes[b]];
    });
  }

  for (Column& col : table.columns) {
    switch (col.type) {
      case ColumnType::Float64: {
        std::vector<double> next(col.f64.size());
        for (std::size_t i = 0; i < order.size(); ++i) next[i] = col.f64[order[i]];
        col.f64 = std::move(next);
        break;
      }
      case ColumnType::Int64: {
        std::vector<std::int64_t> next(col.i64.size());
        for (std::size_t i = 0; i < order.size(); ++i) next[i] = col.i64[order[i]];
        col.i64 = std::move(next);
        break;
      }
      default: {
        std::vector<std::uint32_t> next(col.codes.size());
        for (std::size_t i = 0; i < order.size(); ++i) next[i] = col.codes[order[i]];
        col.codes = std::move(next);
        break;
      }
    }
  }

  const Column& sorted_key = table.column(table.partition_key);
  std::uint64_t begin = 0;
  for (std::uint64_t row = 0; row <= table.row_count; ++row) {
    bool boundary = row == table.row_count;
    if (!boundary) {
      if (sorted_key.type == ColumnType::Int64) {
        boundary = row > 0 && sorted_key.i64[row] != sorted_key.i64[row - 1];
      } else {
        boundary = row > 0 && sorted_key.codes[row] != sorted_key.codes[row - 1];
      }
    }
    if (boundary && row > begin) {
      if (sorted_key.type == ColumnType::Int64) {
        table.int_key_index.emplace(sorted_key.i64[begin], RowRange{begin, row});
      } else {
        table.str_key_index.emplace(sorted_key.dict[sorted_key.codes[begin]],
                                    RowRange{begin, row});
      }
      begin = row;
    }
  }
}

}  // namespace detail

// Loads a table from CSV against a declared schema. Columns listed in the
// schema must all be present in the header; extra CSV columns are rejected
// so schema drift surfaces at load time.
inline Table load_table(const std::string& name, const std::string& csv_path,
                        const std::vector<std::pair<std::string, ColumnType>>& schema,
                        const std::string& partition_key) {
  CsvTable csv = read_csv(csv_path);
  require(csv.header.size() == schema.size(),
          csv_path + ": header has " + std::to_string(csv.header.size()) +
              " columns, schema declares " + std::to_string(schema.size()));

  Table table;
  table.name = name;
  table.partition_key = partition_key;
  table.columns.resize(schema.size());
  std::vector<std::size_t> csv_pos(schema.size());
  for (std::size_t i = 0; i < schema.size(); ++i) {
    table.columns[i].name = schema[i].first;
    table.columns[i].type = schema[i].second;
    table.column_index.emplace(schema[i].first, i);
    auto it = std::find(csv.header.begin(), csv.header.end(), schema[i].first);
    require(it != csv.header.end(),
            csv_path + ": missing declared column '" + schema[i].first + "'");
    csv_pos[i] = static_cast<std::size_t>(it - csv.header.begin());
  }

  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    const auto& row = csv.rows[r];
    for (std::size_t c = 0; c < schema.size(); ++c) {
      detail::parse_cell(table.columns[c], row[csv_pos[c]],
                         csv_path + ":" + std::to_string(r + 2) + ": column '" +
                             schema[c].first + "'");
    }
  }
  table.row_count = csv.rows.size();

  if (!partition_key.empty()) {
    require(table.find_column(partition_key) != nullptr,
            csv_path + ": partition key '" + partition_key + "' is not a declared column");
    detail::build_partition_index(table, csv_path);
  }
  return table;
}

// Manifest format:
//   {"tables": [{"name": ..., "file": ..., "partition_key": ...,
//                "columns": [{"name": ..., "type": ...}, ...]}, ...]}
// File paths are resolved relative to the manifest's directory.
inline Dataset load_dataset(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  require(in.good(), "cannot open manifest: " + manifest_path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const std::exception& e) {
    fail(manifest_path + ": invalid JSON: " + e.what());
  }
  require(doc.is_object() && doc.contains("tables") && doc["tables"].is_array(),
          manifest_path + ": manifest must be an object with a 'tables' array");

  const auto base = std::filesystem::path(manifest_path).parent_path();
  Dataset ds;
  for (const auto& t : doc["tables"]) {
    require(t.contains("name") && t.contains("file") && t.contains("columns"),
            manifest_path + ": table entry needs 'name', 'file', 'columns'");
    const std::string name = t["name"].get<std::string>();
    require(ds.tables.find(name) == ds.tables.end(),
            manifest_path + ": duplicate table '" + name + "'");
    std::vector<std::pair<std::string, ColumnType>> schema;
    for (const auto& c : t["columns"]) {
      require(c.contains("name") && c.contains("type"),
              manifest_path + ": column entry needs 'name' and 'type'");
      schema.emplace_back(c["name"].get<std::string>(),
                          column_type_from_string(c["type"].get<std::string>()));
    }
    const std::string partition_key =
        t.contains("partition_key") ? t["partition_key"].get<std::string>() : "";
    const auto file = (base / t["file"].get<std::string>()).string();
    ds.tables.emplace(name, load_table(name, file, schema, partition_key));
  }
  return ds;
}

}  // namespace apx

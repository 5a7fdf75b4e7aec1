#pragma once

// Aggregation feature declarations: operators, predicates, request records,
// the shared accumulation kernel, and the exact full-scan evaluator.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "apx/columnar.hpp"
#include "apx/common.hpp"

namespace apx {

enum class AggOp : std::uint8_t { Sum, Count, Avg, Var, Std, Median, Quantile };

inline AggOp agg_op_from_string(const std::string& s) {
  if (s == "SUM") return AggOp::Sum;
  if (s == "COUNT") return AggOp::Count;
  if (s == "AVG") return AggOp::Avg;
  if (s == "VAR") return AggOp::Var;
  if (s == "STD") return AggOp::Std;
  if (s == "MEDIAN") return AggOp::Median;
  if (s == "QUANTILE") return AggOp::Quantile;
  // Named so config errors point at the operator, not at a parse failure.
  fail("unsupported aggregation operator: '" + s + "'");
}

inline const char* agg_op_name(AggOp op) {
  switch (op) {
    case AggOp::Sum: return "SUM";
    case AggOp::Count: return "COUNT";
    case AggOp::Avg: return "AVG";
    case AggOp::Var: return "VAR";
    case AggOp::Std: return "STD";
    case AggOp::Median: return "MEDIAN";
    case AggOp::Quantile: return "QUANTILE";
  }
  return "?";
}

inline bool is_holistic(AggOp op) {
  return op == AggOp::Median || op == AggOp::Quantile;
}

using FieldValue = std::variant<double, std::int64_t, std::string>;

struct RequestRecord {
  std::int64_t id = 0;
  std::unordered_map<std::string, FieldValue> fields;

  const FieldValue& field(const std::string& name) const {
    auto it = fields.find(name);
    if (it == fields.end()) fail("request is missing field '" + name + "'");
    return it->second;
  }
};

inline double field_as_double(const FieldValue& v, const std::string& name) {
  if (std::holds_alternative<double>(v)) return std::get<double>(v);
  if (std::holds_alternative<std::int64_t>(v))
    return static_cast<double>(std::get<std::int64_t>(v));
  fail("request field '" + name + "' is not numeric");
}

enum class CmpOp : std::uint8_t { Eq, Ne, Lt, Le, Gt, Ge };

inline CmpOp cmp_op_from_string(const std::string& s) {
  if (s == "==") return CmpOp::Eq;
  if (s == "!=") return CmpOp::Ne;
  if (s == "<") return CmpOp::Lt;
  if (s == "<=") return CmpOp::Le;
  if (s == ">") return CmpOp::Gt;
  if (s == ">=") return CmpOp::Ge;
  fail("unknown comparison operator: '" + s + "'");
}

inline const char* cmp_op_name(CmpOp op) {
  switch (op) {
    case CmpOp::Eq: return "==";
    case CmpOp::Ne: return "!=";
    case CmpOp::Lt: return "<";
    case CmpOp::Le: return "<=";
    case CmpOp::Gt: return ">";
    case CmpOp::Ge: return ">=";
  }
  return "?";
}

// One comparison inside a conjunction. The right-hand side is either a
// literal or the name of a request field resolved at binding time.
struct Comparison {
  std::string column;
  CmpOp op = CmpOp::Eq;
  std::optional<FieldValue> literal;
  std::string request_field;  // used when literal is absent
};

// Declares one aggregation feature. The partition key value comes from the
// named request field; the value column may be empty for COUNT.
struct AggregationSpec {
  std::string id;
  std::string table;
  std::string column;
  AggOp op = AggOp::Avg;
  double quantile = 0.5;
  std::string partition_field;
  std::vector<Comparison> predicate;
};

// Comparison bound to a concrete column and literal; evaluates per row.
struct BoundComparison {
  const Column* column = nullptr;
  CmpOp op = CmpOp::Eq;
  double num = 0.0;
  // Dictionary code of a string literal; nullopt when the literal does not
  // occur in the column, in which case == never matches and != always does.
  std::optional<std::uint32_t> code;
  bool is_string = false;

  bool matches(std::size_t row) const {
    if (is_string) {
      const bool eq = code.has_value() && column->codes[row] == *code;
      return op == CmpOp::Eq ? eq : !eq;
    }
    const double v = column->value_as_double(row);
    switch (op) {
      case CmpOp::Eq: return v == num;
      case CmpOp::Ne: return v != num;
      case CmpOp::Lt: return v < num;
      case CmpOp::Le: return v <= num;
      case CmpOp::Gt: return v > num;
      case CmpOp::Ge: return v >= num;
    }
    return false;
  }
};

struct BoundPredicate {
  std::vector<BoundComparison> terms;

  bool matches(std::size_t row) const {
    for (const auto& t : terms) {
      if (!t.matches(row)) return false;
    }
    return true;
  }

  bool empty() const { return terms.empty(); }
};

inline BoundPredicate bind_predicate(const Table& table,
                                     const std::vector<Comparison>& predicate,
                                     const RequestRecord& request) {
  BoundPredicate bound;
  for (const auto& cmp : predicate) {
    const Column& col = table.column(cmp.column);
    BoundComparison bc;
    bc.column = &col;
    bc.op = cmp.op;
    bc.is_string = col.is_string();
    FieldValue value = cmp.literal.has_value() ? *cmp.literal : request.field(cmp.request_field);
    if (bc.is_string) {
      require(bc.op == CmpOp::Eq || bc.op == CmpOp::Ne,
              "column '" + cmp.column + "': ordering comparison on a string column");
      require(std::holds_alternative<std::string>(value),
              "column '" + cmp.column + "': string column compared to a non-string value");
      bc.code = col.code_of(std::get<std::string>(value));
    } else {
      bc.num = field_as_double(value, cmp.column);
    }
    bound.terms.push_back(bc);
  }
  return bound;
}

// Resolves the partition key range for a request. A key value absent from
// the table yields an empty range (N = 0).
inline RowRange resolve_partition(const Table& table, const AggregationSpec& spec,
                                  const RequestRecord& request) {
  require(!table.partition_key.empty(),
          "table '" + table.name + "' has no partition key");
  const Column& key = table.column(table.partition_key);
  const FieldValue& v = request.field(spec.partition_field);
  if (key.type == ColumnType::Int64) {
    std::int64_t k = 0;
    if (std::holds_alternative<std::int64_t>(v)) {
      k = std::get<std::int64_t>(v);
    } else if (std::holds_alternative<double>(v)) {
      const double d = std::get<double>(v);
      k = static_cast<std::int64_t>(d);
      require(static_cast<double>(k) == d,
              "request field '" + spec.partition_field + "' is not an integer key");
    } else {
      fail("request field '" + spec.partition_field + "' is not an integer key");
    }
    auto it = table.int_key_index.find(k);
    return it == table.int_key_index.end() ? RowRange{} : it->second;
  }
  require(std::holds_alternative<std::string>(v),
          "request field '" + spec.partition_field + "' must be a string key");
  auto it = table.str_key_index.find(std::get<std::string>(v));
  return it == table.str_key_index.end() ? RowRange{} : it->second;
}

// Streaming central-moment accumulator (count, mean, M2..M4, plain sum).
// One-pass updates; trackers are exact functions of the value sequence, so
// two accumulators fed the same values in the same order agree bitwise.
struct MomentAccumulator {
  std::uint64_t count = 0;
  double mean = 0.0;
  double m2 = 0.0;
  double m3 = 0.0;
  double m4 = 0.0;
  double sum = 0.0;

  void add(double x) {
    const double n1 = static_cast<double>(count);
    ++count;
    const double n = static_cast<double>(count);
    const double delta = x - mean;
    const double delta_n = delta / n;
    const double delta_n2 = delta_n * delta_n;
    const double term1 = delta * delta_n * n1;
    mean += delta_n;
    m4 += term1 * delta_n2 * (n * n - 3.0 * n + 3.0) + 6.0 * delta_n2 * m2 -
          4.0 * delta_n * m3;
    m3 += term1 * delta_n * (n - 2.0) - 3.0 * delta_n * m2;
    m2 += term1;
    sum += x;
  }

  // Bessel-corrected sample variance; 0 below two observations.
  double sample_variance() const {
    return count < 2 ? 0.0 : m2 / static_cast<double>(count - 1);
  }

  // Biased fourth central moment.
  double fourth_moment() const {
    return count == 0 ? 0.0 : m4 / static_cast<double>(count);
  }
};

// Per-feature accumulation state shared by the sampler and the exact scan.
// `matched` sees predicate-passing values only; `masked` sees every scanned
// row with non-matching rows contributing zero (the SUM estimator's view).
struct AggAccumulators {
  std::uint64_t scanned = 0;
  MomentAccumulator matched;
  MomentAccumulator masked;
  std::vector<double> retained;  // matched values, holistic operators only

  void reset() { *this = AggAccumulators{}; }
};

namespace detail {

inline void accumulate_row(AggAccumulators& acc, const Column* value_column,
                           const BoundPredicate& pred, bool has_pred, bool retain,
                           std::size_t row) {
  ++acc.scanned;
  const bool ok = !has_pred || pred.matches(row);
  const double v = value_column == nullptr ? 0.0 : value_column->value_as_double(row);
  if (ok) {
    acc.matched.add(v);
    if (retain) acc.retained.push_back(v);
  }
  if (has_pred) acc.masked.add(ok ? v : 0.0);
}

}  // namespace detail

// Finalizes the exact aggregate value from full-population accumulators.
// The sampler reuses this at n = N so a fully drawn sample reproduces the
// exact scan bit for bit.
inline double finalize_exact(const AggregationSpec& spec, const AggAccumulators& acc,
                             std::uint64_t population) {
  switch (spec.op) {
    case AggOp::Count:
      return static_cast<double>(spec.predicate.empty() ? population
                                                        : acc.matched.count);
    case AggOp::Sum:
      return acc.matched.sum;
    case AggOp::Avg:
      return acc.matched.count == 0 ? 0.0 : acc.matched.mean;
    case AggOp::Var:
      return acc.matched.sample_variance();
    case AggOp::Std:
      return std::sqrt(acc.matched.sample_variance());
    case AggOp::Median:
    case AggOp::Quantile: {
      if (acc.retained.empty()) return 0.0;
      std::vector<double> sorted = acc.retained;
      std::sort(sorted.begin(), sorted.end());
      const double q = spec.op == AggOp::Median ? 0.5 : spec.quantile;
      return quantile_sorted(sorted, q);
    }
  }
  return 0.0;
}

// Full-partition scan in row order. COUNT without a predicate is the
// partition size and needs no scan.
inline double exact_aggregate(const Dataset& ds, const AggregationSpec& spec,
                              const RequestRecord& request,
                              std::uint64_t* rows_scanned = nullptr) {
  const Table& table = ds.table(spec.table);
  const RowRange range = resolve_partition(table, spec, request);
  if (spec.op == AggOp::Count && spec.predicate.empty()) {
    if (rows_scanned != nullptr) *rows_scanned += 0;
    return static_cast<double>(range.size());
  }
  const Column* value = spec.column.empty() ? nullptr : &table.column(spec.column);
  if (value != nullptr) {
    require(!value->is_string(),
            "feature '" + spec.id + "': value column '" + spec.column + "' is not numeric");
  }
  require(spec.op == AggOp::Count || value != nullptr,
          "feature '" + spec.id + "': operator " + agg_op_name(spec.op) +
              " needs a value column");
  const BoundPredicate pred = bind_predicate(table, spec.predicate, request);
  const bool has_pred = !pred.empty();
  AggAccumulators acc;
  const bool retain = is_holistic(spec.op);
  for (std::uint64_t row = range.begin; row < range.end; ++row) {
    detail::accumulate_row(acc, value, pred, has_pred, retain, row);
  }
  if (rows_scanned != nullptr) *rows_scanned += range.size();
  return finalize_exact(spec, acc, range.size());
}

}  // namespace apx

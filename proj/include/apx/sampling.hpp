#pragma once

// Incremental uniform sampling without replacement over a partition's row
// range. The permutation is a lazily materialized Fisher-Yates shuffle, so
// drawing n rows costs O(n) time and memory regardless of partition size,
// and extending a draw never re-reads earlier rows.

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "apx/aggregate.hpp"
#include "apx/columnar.hpp"
#include "apx/common.hpp"

namespace apx {

inline constexpr std::uint64_t kPermBlock = 4096;

class FeatureSampleState {
 public:
  FeatureSampleState() = default;

  // Binds the spec to a request: resolves the partition range, compiles the
  // predicate against request fields, and seeds the permutation from
  // (seed, feature id, request id) so distinct features and requests draw
  // independent row orders.
  FeatureSampleState(const Dataset& ds, const AggregationSpec& spec,
                     const RequestRecord& request, std::uint64_t seed)
      : spec_(&spec),
        table_(&ds.table(spec.table)),
        base_seed_(mix64(seed, fnv1a64(spec.id),
                         static_cast<std::uint64_t>(request.id))),
        rng_(base_seed_) {
    range_ = resolve_partition(*table_, spec, request);
    if (!spec.column.empty()) {
      value_ = &table_->column(spec.column);
      require(!value_->is_string(), "feature '" + spec.id + "': value column '" +
                                        spec.column + "' is not numeric");
    }
    require(spec.op == AggOp::Count || value_ != nullptr,
            "feature '" + spec.id + "': operator " + agg_op_name(spec.op) +
                " needs a value column");
    pred_ = bind_predicate(*table_, spec.predicate, request);
    retain_ = is_holistic(spec.op);
  }

  const AggregationSpec& spec() const { return *spec_; }
  std::uint64_t population() const { return range_.size(); }
  std::uint64_t drawn() const { return acc_.scanned; }
  std::uint64_t base_seed() const { return base_seed_; }
  bool has_predicate() const { return !pred_.empty(); }
  const AggAccumulators& accumulators() const { return acc_; }
  const std::vector<double>& retained_values() const { return acc_.retained; }

  // Index of the i-th drawn row within the partition (0-based offset).
  std::uint64_t cursor_index(std::uint64_t i) const { return perm_[i]; }

  // Value and predicate outcome of the i-th drawn row. Used by diagnostics
  // that resample the drawn prefix; the hot path goes through draw_to.
  double drawn_value(std::uint64_t i) const {
    const std::size_t row = static_cast<std::size_t>(range_.begin + perm_[i]);
    return value_ == nullptr ? 0.0 : value_->value_as_double(row);
  }

  bool drawn_matched(std::uint64_t i) const {
    if (pred_.empty()) return true;
    return pred_.matches(static_cast<std::size_t>(range_.begin + perm_[i]));
  }

  // Draws until n == min(target, N) and returns that clamped target.
  // Previously drawn rows are never revisited; accumulator state after
  // draw_to(a) then draw_to(b) is bit-identical to a single draw_to(b).
  std::uint64_t draw_to(std::uint64_t target) {
    const std::uint64_t N = range_.size();
    if (target > N) target = N;
    if (target <= acc_.scanned) return target;
    extend_permutation(target);
    const bool has_pred = !pred_.empty();
    for (std::uint64_t i = acc_.scanned; i < target; ++i) {
      const std::size_t row = static_cast<std::size_t>(range_.begin + perm_[i]);
      detail::accumulate_row(acc_, value_, pred_, has_pred, retain_, row);
    }
    if (acc_.scanned == N && N > 0) rebuild_in_row_order();
    return target;
  }

 private:
  void extend_permutation(std::uint64_t upto) {
    const std::uint64_t N = range_.size();
    if (perm_.capacity() < upto) {
      // Grow in fixed blocks to bound reallocation on huge partitions.
      perm_.reserve(((upto + kPermBlock - 1) / kPermBlock) * kPermBlock);
    }
    while (perm_.size() < upto) {
      const std::uint64_t p = perm_.size();
      const std::uint64_t r = p + rng_.below(N - p);
      const std::uint64_t vp = slot_value(p);
      const std::uint64_t vr = slot_value(r);
      perm_.push_back(vr);
      if (r != p) {
        swaps_[r] = vp;
      }
      swaps_.erase(p);
    }
  }

  std::uint64_t slot_value(std::uint64_t pos) const {
    auto it = swaps_.find(pos);
    return it == swaps_.end() ? pos : it->second;
  }

  // At n = N the accumulators are rebuilt with a sequential pass in row
  // order, so a fully drawn feature finalizes to the same bits as the
  // exact scan.
  void rebuild_in_row_order() {
    acc_.reset();
    const bool has_pred = !pred_.empty();
    for (std::uint64_t row = range_.begin; row < range_.end; ++row) {
      detail::accumulate_row(acc_, value_, pred_, has_pred, retain_,
                             static_cast<std::size_t>(row));
    }
  }

  const AggregationSpec* spec_ = nullptr;
  const Table* table_ = nullptr;
  const Column* value_ = nullptr;
  BoundPredicate pred_;
  RowRange range_;
  std::uint64_t base_seed_ = 0;
  SplitMix rng_{0};
  bool retain_ = false;
  std::vector<std::uint64_t> perm_;
  std::unordered_map<std::uint64_t, std::uint64_t> swaps_;
  AggAccumulators acc_;
};

inline FeatureSampleState open_request_state(const Dataset& ds,
                                             const AggregationSpec& spec,
                                             const RequestRecord& request,
                                             std::uint64_t seed) {
  return FeatureSampleState(ds, spec, request, seed);
}

}  // namespace apx

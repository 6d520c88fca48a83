#ifndef BALANCELAB_COHORT_HPP
#define BALANCELAB_COHORT_HPP

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace balancelab {

enum class AttrKind { binary, categorical, ordinal, numeric };

std::string to_string(AttrKind kind);
std::optional<AttrKind> attr_kind_from_string(std::string_view s);

struct AttributeSpec {
  std::string name;
  AttrKind kind = AttrKind::binary;
  // Level names for categorical factors (required) and, optionally, for
  // binary factors (value 0 maps to levels[0], value 1 to levels[1]).
  std::vector<std::string> levels;
  // Default balancing weight; strategy configs may override per factor.
  double weight = 1.0;
  // Free-form measurement unit for numeric factors ("cm", "USD"); cosmetic.
  std::string unit_label;
  // Declared value range for ordinal/numeric factors; when set it replaces
  // the cohort-derived range in Gower normalization.
  std::optional<std::pair<double, double>> range;
};

// Ordered attribute list with name lookup. Construction validates names are
// unique and non-empty, categorical factors declare at least two levels, and
// binary level lists (when present) have exactly two entries.
class Schema {
 public:
  Schema() = default;
  explicit Schema(std::vector<AttributeSpec> attrs);

  const std::vector<AttributeSpec>& attributes() const { return attrs_; }
  const AttributeSpec& at(std::size_t i) const { return attrs_.at(i); }
  std::size_t size() const { return attrs_.size(); }
  std::optional<std::size_t> index_of(std::string_view name) const;

  // Name a level of a discrete factor for report keys: declared level name
  // when available, otherwise the numeric value itself.
  std::string level_name(std::size_t attr, int level) const;
  // Number of levels a discrete factor can take (2 for binary).
  std::size_t level_count(std::size_t attr) const;

 private:
  std::vector<AttributeSpec> attrs_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

// One unit: opaque id plus one value per schema attribute, in schema order.
// binary: 0/1; categorical: level index; ordinal and numeric: any double.
struct Unit {
  std::string id;
  std::vector<double> values;
};

// Throws std::domain_error naming the first offending unit/attribute if any
// value is out of range for its kind (non-0/1 binary, fractional or
// out-of-range categorical index, non-finite number).
void validate_units(const Schema& schema, std::span<const Unit> units);

enum class Arm : std::uint8_t { treatment, control };

inline Arm other_arm(Arm a) {
  return a == Arm::treatment ? Arm::control : Arm::treatment;
}

std::string to_string(Arm arm);
std::optional<Arm> arm_from_string(std::string_view s);

// Total mapping id -> arm. Lookup of an unassigned id throws: a partial
// allocation reaching the metrics layer is always a caller bug.
class Allocation {
 public:
  void assign(const std::string& id, Arm arm);
  Arm arm_of(const std::string& id) const;
  bool contains(const std::string& id) const;
  std::size_t size() const { return assignment_.size(); }
  std::size_t arm_size(Arm arm) const;
  void swap_labels();

  const std::map<std::string, Arm>& entries() const { return assignment_; }

 private:
  std::map<std::string, Arm> assignment_;
};

}  // namespace balancelab

#endif

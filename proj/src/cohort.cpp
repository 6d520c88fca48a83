#include "balancelab/cohort.hpp"

#include <cmath>
#include <stdexcept>

namespace balancelab {

std::string to_string(AttrKind kind) {
  switch (kind) {
    case AttrKind::binary: return "binary";
    case AttrKind::categorical: return "categorical";
    case AttrKind::ordinal: return "ordinal";
    case AttrKind::numeric: return "numeric";
  }
  return "?";
}

std::optional<AttrKind> attr_kind_from_string(std::string_view s) {
  if (s == "binary") return AttrKind::binary;
  if (s == "categorical") return AttrKind::categorical;
  if (s == "ordinal") return AttrKind::ordinal;
  if (s == "numeric") return AttrKind::numeric;
  return std::nullopt;
}

Schema::Schema(std::vector<AttributeSpec> attrs) : attrs_(std::move(attrs)) {
  for (std::size_t i = 0; i < attrs_.size(); ++i) {
    const AttributeSpec& a = attrs_[i];
    if (a.name.empty())
      throw std::domain_error("schema: attribute names must be non-empty");
    if (!index_.emplace(a.name, i).second)
      throw std::domain_error("schema: duplicate attribute name '" + a.name + "'");
    if (a.kind == AttrKind::categorical && a.levels.size() < 2)
      throw std::domain_error("schema: categorical attribute '" + a.name +
                              "' needs at least two levels");
    if (a.kind == AttrKind::binary && !a.levels.empty() && a.levels.size() != 2)
      throw std::domain_error("schema: binary attribute '" + a.name +
                              "' must declare exactly two levels or none");
    if (!(a.weight >= 0.0))
      throw std::domain_error("schema: attribute '" + a.name +
                              "' has a negative weight");
    if (a.range && !(a.range->second >= a.range->first))
      throw std::domain_error("schema: attribute '" + a.name +
                              "' declares an inverted range");
  }
}

std::optional<std::size_t> Schema::index_of(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::string Schema::level_name(std::size_t attr, int level) const {
  const AttributeSpec& a = attrs_.at(attr);
  if (level >= 0 && static_cast<std::size_t>(level) < a.levels.size())
    return a.levels[static_cast<std::size_t>(level)];
  return std::to_string(level);
}

std::size_t Schema::level_count(std::size_t attr) const {
  const AttributeSpec& a = attrs_.at(attr);
  switch (a.kind) {
    case AttrKind::binary: return 2;
    case AttrKind::categorical: return a.levels.size();
    default:
      throw std::domain_error("schema: attribute '" + a.name +
                              "' is not a discrete factor");
  }
}

void validate_units(const Schema& schema, std::span<const Unit> units) {
  for (const Unit& u : units) {
    if (u.values.size() != schema.size())
      throw std::domain_error("unit '" + u.id + "' carries " +
                              std::to_string(u.values.size()) + " values, schema has " +
                              std::to_string(schema.size()));
    for (std::size_t j = 0; j < schema.size(); ++j) {
      const AttributeSpec& a = schema.at(j);
      const double v = u.values[j];
      if (!std::isfinite(v))
        throw std::domain_error("unit '" + u.id + "', attribute '" + a.name +
                                "': value is not finite");
      if (a.kind == AttrKind::binary && v != 0.0 && v != 1.0)
        throw std::domain_error("unit '" + u.id + "', attribute '" + a.name +
                                "': binary values must be 0 or 1");
      if (a.kind == AttrKind::categorical) {
        if (v != std::floor(v) || v < 0.0 ||
            v >= static_cast<double>(a.levels.size()))
          throw std::domain_error("unit '" + u.id + "', attribute '" + a.name +
                                  "': categorical level index out of range");
      }
    }
  }
}

std::string to_string(Arm arm) {
  return arm == Arm::treatment ? "T" : "C";
}

std::optional<Arm> arm_from_string(std::string_view s) {
  if (s == "T" || s == "t" || s == "treatment") return Arm::treatment;
  if (s == "C" || s == "c" || s == "control") return Arm::control;
  return std::nullopt;
}

void Allocation::assign(const std::string& id, Arm arm) {
  assignment_[id] = arm;
}

Arm Allocation::arm_of(const std::string& id) const {
  auto it = assignment_.find(id);
  if (it == assignment_.end())
    throw std::domain_error("allocation: unit '" + id + "' is unassigned");
  return it->second;
}

bool Allocation::contains(const std::string& id) const {
  return assignment_.count(id) != 0;
}

std::size_t Allocation::arm_size(Arm arm) const {
  std::size_t n = 0;
  for (const auto& [id, a] : assignment_)
    if (a == arm) ++n;
  return n;
}

void Allocation::swap_labels() {
  for (auto& [id, a] : assignment_) a = other_arm(a);
}

}  // namespace balancelab

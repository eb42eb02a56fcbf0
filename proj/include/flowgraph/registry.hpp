#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>

#include "flowgraph/calculator.hpp"
#include "flowgraph/contract.hpp"
#include "flowgraph/options.hpp"

namespace flowgraph {

/// Name -> (contract function, instance factory). The contract function is
/// pure: it sees only the node options and builds the contract the node is
/// validated against, without constructing an instance.
class CalculatorRegistry {
 public:
  using ContractFn = std::function<CalculatorContract(const NodeOptions&)>;
  using FactoryFn = std::function<std::unique_ptr<Calculator>()>;

  /// Registers a calculator type. Throws DuplicateName if taken.
  void Register(const std::string& name, ContractFn contract,
                FactoryFn factory);

  bool Contains(const std::string& name) const {
    return entries_.count(name) > 0;
  }

  /// Contract for `name` under `options`. Throws NotRegistered, or
  /// InvalidOptions if the calculator rejects its options.
  CalculatorContract FillContract(const std::string& name,
                                  const NodeOptions& options) const;

  std::unique_ptr<Calculator> Create(const std::string& name) const;

  /// Process-wide registry used by the CLI and the standard calculators.
  static CalculatorRegistry& Default();

 private:
  struct Entry {
    ContractFn contract;
    FactoryFn factory;
  };
  const Entry& Lookup(const std::string& name) const;

  std::map<std::string, Entry> entries_;
};

/// Convenience for the common pattern of a default-constructible
/// calculator type with a free contract function.
template <typename T>
void RegisterCalculator(CalculatorRegistry& registry, const std::string& name,
                        CalculatorRegistry::ContractFn contract) {
  registry.Register(name, std::move(contract),
                    [] { return std::make_unique<T>(); });
}

}  // namespace flowgraph

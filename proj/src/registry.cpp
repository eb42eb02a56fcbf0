#include "flowgraph/registry.hpp"

#include "flowgraph/error.hpp"

namespace flowgraph {

void CalculatorRegistry::Register(const std::string& name, ContractFn contract,
                                  FactoryFn factory) {
  if (name.empty()) {
    throw FlowError(ErrorCode::kInvalidOptions,
                    "calculator name may not be empty");
  }
  auto [it, inserted] =
      entries_.emplace(name, Entry{std::move(contract), std::move(factory)});
  if (!inserted) {
    throw FlowError(ErrorCode::kDuplicateName,
                    "calculator '" + name + "' already registered");
  }
}

const CalculatorRegistry::Entry& CalculatorRegistry::Lookup(
    const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) {
    throw FlowError(ErrorCode::kNotRegistered,
                    "no calculator named '" + name + "'");
  }
  return it->second;
}

CalculatorContract CalculatorRegistry::FillContract(
    const std::string& name, const NodeOptions& options) const {
  CalculatorContract contract = Lookup(name).contract(options);
  contract.CheckWellFormed();
  return contract;
}

std::unique_ptr<Calculator> CalculatorRegistry::Create(
    const std::string& name) const {
  return Lookup(name).factory();
}

CalculatorRegistry& CalculatorRegistry::Default() {
  static CalculatorRegistry* registry = new CalculatorRegistry();
  return *registry;
}

}  // namespace flowgraph

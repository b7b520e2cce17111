#include <stdexcept>

#include "urs/instance.hpp"
#include "urs/rng.hpp"

namespace urs {

std::vector<std::pair<int, int>> UnifiedInstance::relation_pairs() const {
  std::vector<std::pair<int, int>> out;
  if (!has_relation()) return out;
  const int n = size();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (r(i, j) == 0 && nodes[i].xi[kPickupBit] && nodes[j].xi[kDeliveryBit]) out.emplace_back(i, j);
  return out;
}

ProblemSignature derive_signature(const UnifiedInstance& inst) {
  ProblemSignature sig;
  sig.families = inst.spec.families;
  auto& lam = sig.lambda;
  for (const auto& node : inst.nodes) {
    if (node.rho[0] != 0.0) lam[0] = 1;
    if (node.rho[1] != 0.0 || node.rho[2] != 0.0) lam[1] = 1;
    for (int a = 0; a < kAttrCount; ++a)
      if (node.omega[a] != 0.0) lam[2 + a] = 1;
    for (int b = 0; b < kTypeBitCount; ++b)
      if (node.xi[b]) lam[2 + kAttrCount + b] = 1;
  }
  return sig;
}

std::array<double, 2> dihedral_map(int which, double x, double y) {
  switch (which) {
    case 0: return {x, y};
    case 1: return {y, x};
    case 2: return {1 - x, y};
    case 3: return {y, 1 - x};
    case 4: return {x, 1 - y};
    case 5: return {1 - y, x};
    case 6: return {1 - x, 1 - y};
    case 7: return {1 - y, 1 - x};
    default: throw std::out_of_range("dihedral_map: index must lie in [0,8)");
  }
}

std::vector<UnifiedInstance> symmetric_augmentations(const UnifiedInstance& inst) {
  if (!inst.symmetric()) throw std::invalid_argument("symmetric_augmentations: instance is asymmetric");
  std::vector<UnifiedInstance> out;
  out.reserve(8);
  out.push_back(inst);
  for (int t = 1; t < 8; ++t) {
    UnifiedInstance copy = inst;
    for (auto& node : copy.nodes) {
      auto [x, y] = dihedral_map(t, node.x(), node.y());
      node.rho[1] = x;
      node.rho[2] = y;
    }
    copy.dist = euclidean_distances(copy.nodes);
    out.push_back(std::move(copy));
  }
  return out;
}

std::vector<UnifiedInstance> asymmetric_augmentations(const UnifiedInstance& inst, int k,
                                                      std::optional<std::uint64_t> seed) {
  if (inst.symmetric()) throw std::invalid_argument("asymmetric_augmentations: instance is symmetric");
  if (k < 1) throw std::invalid_argument("asymmetric_augmentations: k must be positive");
  const Rng base = seed ? Rng(*seed) : Rng(inst.seed).split("augment");
  std::vector<UnifiedInstance> out;
  out.reserve(k);
  for (int c = 0; c < k; ++c) {
    Rng eta = base.split(static_cast<std::uint64_t>(c));
    UnifiedInstance copy = inst;
    for (auto& node : copy.nodes) node.rho[0] = eta.uniform();
    out.push_back(std::move(copy));
  }
  return out;
}

}  // namespace urs

#include "bae/parameters.hpp"

#include <algorithm>
#include <cstring>

namespace bae {

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::relu:
      return "relu";
    case Activation::leaky_relu:
      return "leaky_relu";
    case Activation::tanh:
      return "tanh";
  }
  return "unknown";
}

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::relu;
  if (name == "leaky_relu") return Activation::leaky_relu;
  if (name == "tanh") return Activation::tanh;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

Index NetworkSpec::bottleneck_layer() const {
  Index best = 0;
  for (Index l = 1; l < trunk_layers(); ++l)
    if (widths[l + 1] < widths[best + 1]) best = l;
  return best;
}

Index NetworkSpec::fan_in(Index layer) const {
  return layer < trunk_layers() ? widths[layer] : widths[widths.size() - 2];
}

Index NetworkSpec::fan_out(Index layer) const {
  return layer < trunk_layers() ? widths[layer + 1] : widths.back();
}

void NetworkSpec::validate() const {
  if (widths.size() < 3) throw ConfigError("network needs an input, at least one hidden layer and an output");
  if (std::any_of(widths.begin(), widths.end(), [](Index w) { return w <= 0; }))
    throw ConfigError("network layer widths must be positive");
  if (widths.front() != widths.back())
    throw ConfigError("autoencoder output width " + std::to_string(widths.back()) + " differs from input width " +
                      std::to_string(widths.front()));
  if (!(leaky_slope >= 0.0 && leaky_slope < 1.0)) throw ConfigError("leaky slope must lie in [0, 1)");
}

std::uint64_t fingerprint(const ParameterSet& p) {
  std::uint64_t h = 1469598103934665603ULL;
  const auto* bytes = reinterpret_cast<const unsigned char*>(p.flat().data());
  const std::size_t n = static_cast<std::size_t>(p.flat().size()) * sizeof(double);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= bytes[i];
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace bae

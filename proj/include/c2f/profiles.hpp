#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace c2f {

struct StepHyper {
  double lr = 0.0;
  double weight_decay = 0.0;
  std::size_t epochs = 0;
  std::size_t batch_size = 0;
};

/// Per-dataset training defaults. The three video datasets carry their
/// benchmark settings; "synthetic" is the desk-scale reference.
struct DatasetProfile {
  std::string_view name;
  std::size_t w0;
  StepHyper full;
  StepHyper contrast;
  StepHyper classify_g;
  StepHyper classify_m;
  std::size_t K;
  double delta;
  std::size_t clusters;
};

inline constexpr std::array<DatasetProfile, 4> kProfiles{{
    {"breakfast", 10, {1e-4, 3e-3, 600, 100}, {1e-3, 3e-3, 100, 100}, {1e-2, 3e-3, 700, 100}, {1e-5, 3e-3, 700, 100},
     20, 0.03, 100},
    {"50salads", 20, {3e-4, 1e-3, 600, 25}, {1e-3, 1e-3, 100, 50}, {1e-2, 1e-3, 1800, 5}, {1e-5, 1e-3, 1800, 5}, 60,
     0.5, 40},
    {"gtea", 4, {5e-4, 3e-4, 600, 11}, {1e-3, 3e-4, 100, 21}, {1e-2, 3e-4, 1800, 5}, {1e-5, 3e-4, 1800, 5}, 20, 0.02,
     30},
    {"synthetic", 2, {1e-3, 1e-3, 200, 8}, {1e-3, 1e-3, 40, 10}, {1e-2, 1e-3, 100, 5}, {1e-5, 1e-3, 100, 5}, 20, 0.03,
     12},
}};

inline const DatasetProfile& profile(std::string_view name) {
  for (const auto& p : kProfiles) {
    if (p.name == name) return p;
  }
  throw std::invalid_argument("unknown profile '" + std::string(name) + "'");
}

}  // namespace c2f

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "har/attack.hpp"
#include "har/classifier.hpp"
#include "har/data.hpp"
#include "har/hierarchy.hpp"
#include "har/tensor.hpp"

namespace har {

enum class TrainMethod { standard, adv, adv_t, trades, adv_hce };

std::string to_string(TrainMethod m);
TrainMethod method_from_string(const std::string& s);

struct LrSchedule {
  double initial = 0.1;
  double decay_factor = 0.1;
  std::vector<int> decay_epochs = {30, 45};

  // Staircase: initial * factor^(number of boundaries <= epoch).
  double at(int epoch) const;
};

struct TrainConfig {
  TrainMethod method = TrainMethod::standard;
  int epochs = 60;
  int batch_size = 128;
  LrSchedule lr;
  double momentum = 0.9;
  double weight_decay = 2e-4;
  // Required for every method except standard. Its norm / epsilon /
  // alpha / iterations / random_init fields drive the inner loop; mode,
  // target, and seed are fixed by the method and ignored.
  std::optional<AttackSpec> inner;
  double beta = 9.0;  // TRADES regularization weight
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochStats {
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  double accuracy = 0.0;  // on the batch the outer loss sees
};

struct TrainLog {
  std::vector<EpochStats> epochs;
  void save_csv(const std::filesystem::path& path,
                const std::string& config_hash) const;
};

struct SgdState {
  std::vector<Tensor> velocity;
};

// v <- momentum*v + (g + weight_decay*w); w <- w - lr(epoch)*v.
void sgd_step(const std::vector<Tensor*>& params,
              const std::vector<Tensor>& grads, SgdState& state,
              const TrainConfig& cfg, int epoch);

// Trains in place from the model's current parameters; callers
// initialize. Dataset labels must fit the model's class count.
// Methods adv_t and adv_hce need the hierarchy overload.
TrainLog train_classifier(Classifier& m, const Dataset& data,
                          const TrainConfig& cfg);
TrainLog train_classifier(Classifier& m, const Dataset& data,
                          const Hierarchy& h, const TrainConfig& cfg);

// Per-component training stream for HAR: 0 is the coarse net,
// 1 + z is the fine net of coarse class z.
std::uint64_t component_seed(std::uint64_t seed, int component);

// Trains every component independently (coarse net on coarse labels
// over all data, fine net z on within-coarse labels of its subset).
// Components run concurrently when parallel is set; results are
// bitwise identical either way. Methods adv_t/adv_hce are rejected:
// component nets carry no sub-hierarchy to target across.
std::vector<TrainLog> train_har(HarModel& m, const Dataset& data,
                                const TrainConfig& cfg, bool parallel = true);

}  // namespace har

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "har/graph.hpp"
#include "har/hierarchy.hpp"
#include "har/rng.hpp"
#include "har/tensor.hpp"

namespace har {

// Anything that maps a batch of inputs to class distributions through a
// graph, so attacks can differentiate through it.
class Model {
 public:
  virtual ~Model() = default;
  virtual std::size_t input_dim() const = 0;
  virtual std::size_t class_count() const = 0;
  // Probabilities [n, class_count]; params enter as constants.
  virtual Var forward(Graph& g, Var x) const = 0;

  Tensor predict(const Tensor& x) const;
  std::vector<int> predict_labels(const Tensor& x) const;
};

// Trainable parameter handles for one forward/backward pass:
// interleaved weight/bias leaves, one pair per layer.
struct Binding {
  std::vector<Var> params;
};

// MLP ending in softmax: affine+ReLU stacks with a final affine.
class Classifier : public Model {
 public:
  Classifier() = default;
  explicit Classifier(std::vector<std::size_t> dims);

  std::size_t input_dim() const override;
  std::size_t class_count() const override;
  Var forward(Graph& g, Var x) const override;

  const std::vector<std::size_t>& dims() const { return dims_; }
  std::size_t layer_count() const { return dims_.size() - 1; }
  Tensor& weight(std::size_t layer) { return weights_[layer]; }
  Tensor& bias(std::size_t layer) { return biases_[layer]; }
  const Tensor& weight(std::size_t layer) const { return weights_[layer]; }
  const Tensor& bias(std::size_t layer) const { return biases_[layer]; }
  std::size_t param_count() const;

  void init_params(Rng& rng);
  void quantize_params_f32();

  Binding bind(Graph& g) const;
  static Var forward_bound(Graph& g, Var x, const Binding& b);

 private:
  std::vector<std::size_t> dims_;
  std::vector<Tensor> weights_;
  std::vector<Tensor> biases_;
};

// Composite hierarchical model: coarse net over C classes plus one fine
// net per coarse class; outputs the composed fine distribution
// [g_1*H_1, ..., g_C*H_C].
class HarModel : public Model {
 public:
  HarModel() = default;
  HarModel(Classifier coarse_net, std::vector<Classifier> fine_nets,
           Hierarchy hierarchy);

  std::size_t input_dim() const override;
  std::size_t class_count() const override;
  Var forward(Graph& g, Var x) const override;

  Var forward_coarse(Graph& g, Var x) const;
  Tensor predict_coarse(const Tensor& x) const;

  const Classifier& coarse_net() const { return coarse_net_; }
  Classifier& coarse_net() { return coarse_net_; }
  const std::vector<Classifier>& fine_nets() const { return fine_nets_; }
  std::vector<Classifier>& fine_nets() { return fine_nets_; }
  const Hierarchy& hierarchy() const { return hierarchy_; }
  std::size_t param_count() const;
  void quantize_params_f32();

 private:
  Classifier coarse_net_;
  std::vector<Classifier> fine_nets_;
  Hierarchy hierarchy_;
};

// Block-concatenated Bayes composition: out[offset_i + j] = g[i] * h_i[j].
Tensor har_compose(const Tensor& g, const std::vector<Tensor>& h_list,
                   const Hierarchy& h);
Var har_compose(Graph& g, Var coarse_probs, const std::vector<Var>& blocks,
                const Hierarchy& h);

// Sums fine probabilities per coarse block: G[i,z] = sum_{y in z} f[i,y].
Tensor coarse_marginal(const Tensor& fine_probs, const Hierarchy& h);
Var coarse_marginal(Graph& g, Var fine_probs, const Hierarchy& h);

enum class CheckpointKind : std::uint8_t { flat = 0, har = 1 };

struct CheckpointMeta {
  std::uint64_t seed = 0;
  std::string config_hash;
};

struct LoadedCheckpoint {
  CheckpointKind kind = CheckpointKind::flat;
  CheckpointMeta meta;
  std::uint64_t hierarchy_hash = 0;
  std::optional<Classifier> flat;
  std::optional<HarModel> har;

  const Model& model() const;
};

void save_checkpoint(const Classifier& m, const CheckpointMeta& meta,
                     std::uint64_t hierarchy_hash,
                     const std::filesystem::path& path);
void save_checkpoint(const HarModel& m, const CheckpointMeta& meta,
                     const std::filesystem::path& path);
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace har

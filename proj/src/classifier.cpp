#include "har/classifier.hpp"

#include <cmath>
#include <utility>

#include "har/errors.hpp"
#include "har/serialize.hpp"

namespace har {

Tensor Model::predict(const Tensor& x) const {
  Graph g;
  const Var in = g.leaf(x, false);
  const Var out = forward(g, in);
  return g.value(out);
}

std::vector<int> Model::predict_labels(const Tensor& x) const {
  const Tensor probs = predict(x);
  std::vector<int> labels(probs.rows());
  for (std::size_t i = 0; i < probs.rows(); ++i)
    labels[i] = static_cast<int>(argmax(probs.row_span(i)));
  return labels;
}

Classifier::Classifier(std::vector<std::size_t> dims)
    : dims_(std::move(dims)) {
  if (dims_.size() < 2)
    throw DimensionError("classifier needs at least input and output dims");
  for (std::size_t d : dims_)
    if (d == 0) throw DimensionError("classifier dims must be positive");
  for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
    weights_.emplace_back(std::vector<std::size_t>{dims_[l], dims_[l + 1]});
    biases_.emplace_back(std::vector<std::size_t>{dims_[l + 1]});
  }
}

std::size_t Classifier::input_dim() const { return dims_.front(); }
std::size_t Classifier::class_count() const { return dims_.back(); }

std::size_t Classifier::param_count() const {
  std::size_t total = 0;
  for (std::size_t l = 0; l < layer_count(); ++l)
    total += weights_[l].size() + biases_[l].size();
  return total;
}

void Classifier::init_params(Rng& rng) {
  for (std::size_t l = 0; l < layer_count(); ++l) {
    const double sigma =
        std::sqrt(2.0 / static_cast<double>(weights_[l].rows()));
    for (std::size_t i = 0; i < weights_[l].size(); ++i)
      weights_[l][i] = rng.normal(0.0, sigma);
    for (std::size_t i = 0; i < biases_[l].size(); ++i) biases_[l][i] = 0.0;
  }
}

void Classifier::quantize_params_f32() {
  for (std::size_t l = 0; l < layer_count(); ++l) {
    for (std::size_t i = 0; i < weights_[l].size(); ++i)
      weights_[l][i] = static_cast<double>(static_cast<float>(weights_[l][i]));
    for (std::size_t i = 0; i < biases_[l].size(); ++i)
      biases_[l][i] = static_cast<double>(static_cast<float>(biases_[l][i]));
  }
}

Var Classifier::forward(Graph& g, Var x) const {
  Var h = x;
  for (std::size_t l = 0; l < layer_count(); ++l) {
    const Var w = g.leaf(weights_[l], false);
    const Var b = g.leaf(biases_[l], false);
    h = affine(g, h, w, b);
    if (l + 1 < layer_count()) h = relu(g, h);
  }
  return softmax(g, h);
}

Binding Classifier::bind(Graph& g) const {
  Binding b;
  b.params.reserve(2 * layer_count());
  for (std::size_t l = 0; l < layer_count(); ++l) {
    b.params.push_back(g.leaf(weights_[l], true));
    b.params.push_back(g.leaf(biases_[l], true));
  }
  return b;
}

Var Classifier::forward_bound(Graph& g, Var x, const Binding& b) {
  if (b.params.empty() || b.params.size() % 2 != 0)
    throw ContractError("binding must hold weight/bias pairs");
  Var h = x;
  const std::size_t layers = b.params.size() / 2;
  for (std::size_t l = 0; l < layers; ++l) {
    h = affine(g, h, b.params[2 * l], b.params[2 * l + 1]);
    if (l + 1 < layers) h = relu(g, h);
  }
  return softmax(g, h);
}

HarModel::HarModel(Classifier coarse_net, std::vector<Classifier> fine_nets,
                   Hierarchy hierarchy)
    : coarse_net_(std::move(coarse_net)),
      fine_nets_(std::move(fine_nets)),
      hierarchy_(std::move(hierarchy)) {
  const std::size_t c = static_cast<std::size_t>(hierarchy_.coarse_count());
  if (coarse_net_.class_count() != c)
    throw DimensionError("coarse net outputs " +
                         std::to_string(coarse_net_.class_count()) +
                         " classes, hierarchy has " + std::to_string(c));
  if (fine_nets_.size() != c)
    throw DimensionError("expected one fine net per coarse class");
  for (std::size_t z = 0; z < c; ++z) {
    const std::size_t block =
        hierarchy_.fines_of(static_cast<int>(z)).size();
    if (fine_nets_[z].class_count() != block)
      throw DimensionError("fine net " + std::to_string(z) + " outputs " +
                           std::to_string(fine_nets_[z].class_count()) +
                           " classes, coarse block holds " +
                           std::to_string(block));
    if (fine_nets_[z].input_dim() != coarse_net_.input_dim())
      throw DimensionError("fine net " + std::to_string(z) +
                           " input dim differs from coarse net");
  }
}

std::size_t HarModel::input_dim() const { return coarse_net_.input_dim(); }

std::size_t HarModel::class_count() const {
  return static_cast<std::size_t>(hierarchy_.fine_count());
}

Var HarModel::forward(Graph& g, Var x) const {
  const Var coarse = coarse_net_.forward(g, x);
  std::vector<Var> blocks;
  blocks.reserve(fine_nets_.size());
  for (const Classifier& net : fine_nets_)
    blocks.push_back(net.forward(g, x));
  return har_compose(g, coarse, blocks, hierarchy_);
}

Var HarModel::forward_coarse(Graph& g, Var x) const {
  return coarse_net_.forward(g, x);
}

Tensor HarModel::predict_coarse(const Tensor& x) const {
  return coarse_net_.predict(x);
}

std::size_t HarModel::param_count() const {
  std::size_t total = coarse_net_.param_count();
  for (const Classifier& net : fine_nets_) total += net.param_count();
  return total;
}

void HarModel::quantize_params_f32() {
  coarse_net_.quantize_params_f32();
  for (Classifier& net : fine_nets_) net.quantize_params_f32();
}

namespace {

void check_blocks(std::size_t coarse_cols, std::size_t block_count,
                  const std::vector<std::size_t>& block_sizes,
                  const Hierarchy& h) {
  const std::size_t c = static_cast<std::size_t>(h.coarse_count());
  if (coarse_cols != c)
    throw DimensionError("coarse distribution length " +
                         std::to_string(coarse_cols) +
                         " does not match hierarchy coarse count " +
                         std::to_string(c));
  if (block_count != c)
    throw DimensionError("expected " + std::to_string(c) + " fine blocks, got " +
                         std::to_string(block_count));
  for (std::size_t z = 0; z < c; ++z) {
    const std::size_t want = h.fines_of(static_cast<int>(z)).size();
    if (block_sizes[z] != want)
      throw DimensionError("fine block " + std::to_string(z) + " has length " +
                           std::to_string(block_sizes[z]) + ", hierarchy wants " +
                           std::to_string(want));
  }
}

}  // namespace

Tensor har_compose(const Tensor& g, const std::vector<Tensor>& h_list,
                   const Hierarchy& h) {
  if (g.rank() != 1)
    throw DimensionError("har_compose expects a rank-1 coarse distribution");
  std::vector<std::size_t> sizes;
  sizes.reserve(h_list.size());
  for (const Tensor& t : h_list) {
    if (t.rank() != 1)
      throw DimensionError("har_compose expects rank-1 fine blocks");
    sizes.push_back(t.size());
  }
  check_blocks(g.size(), h_list.size(), sizes, h);
  Tensor out({static_cast<std::size_t>(h.fine_count())});
  std::size_t off = 0;
  for (std::size_t z = 0; z < h_list.size(); ++z) {
    for (std::size_t j = 0; j < h_list[z].size(); ++j)
      out[off + j] = g[z] * h_list[z][j];
    off += h_list[z].size();
  }
  return out;
}

Var har_compose(Graph& g, Var coarse_probs, const std::vector<Var>& blocks,
                const Hierarchy& h) {
  const Tensor& cv = g.value(coarse_probs);
  if (cv.rank() != 2)
    throw DimensionError("har_compose expects [n, C] coarse probabilities");
  const std::size_t n = cv.rows();
  std::vector<std::size_t> sizes;
  sizes.reserve(blocks.size());
  for (Var b : blocks) {
    const Tensor& bv = g.value(b);
    if (bv.rank() != 2 || bv.rows() != n)
      throw DimensionError("har_compose fine blocks must be [n, block] rows");
    sizes.push_back(bv.cols());
  }
  check_blocks(cv.cols(), blocks.size(), sizes, h);

  const std::size_t fine = static_cast<std::size_t>(h.fine_count());
  Tensor out({n, fine});
  std::vector<std::size_t> offsets(blocks.size());
  {
    std::size_t off = 0;
    for (std::size_t z = 0; z < blocks.size(); ++z) {
      offsets[z] = off;
      off += sizes[z];
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    std::span<const double> ci = cv.row_span(i);
    std::span<double> oi = out.row_span(i);
    for (std::size_t z = 0; z < blocks.size(); ++z) {
      std::span<const double> bi = g.value(blocks[z]).row_span(i);
      for (std::size_t j = 0; j < sizes[z]; ++j)
        oi[offsets[z] + j] = ci[z] * bi[j];
    }
  }

  std::vector<Var> inputs;
  inputs.reserve(1 + blocks.size());
  inputs.push_back(coarse_probs);
  inputs.insert(inputs.end(), blocks.begin(), blocks.end());
  const int c_id = coarse_probs.id;
  std::vector<int> block_ids;
  block_ids.reserve(blocks.size());
  for (Var b : blocks) block_ids.push_back(b.id);

  return g.node(
      std::move(out), inputs,
      [c_id, block_ids, offsets, sizes, n](Graph& gr, int self) {
        const Tensor& go = gr.grad(Var{self});
        const Tensor& cv2 = gr.value(Var{c_id});
        if (gr.requires_grad(Var{c_id})) {
          Tensor gc({n, block_ids.size()});
          for (std::size_t i = 0; i < n; ++i) {
            std::span<const double> gi = go.row_span(i);
            std::span<double> gci = gc.row_span(i);
            for (std::size_t z = 0; z < block_ids.size(); ++z) {
              std::span<const double> bi =
                  gr.value(Var{block_ids[z]}).row_span(i);
              double acc = 0.0;
              for (std::size_t j = 0; j < sizes[z]; ++j)
                acc += bi[j] * gi[offsets[z] + j];
              gci[z] = acc;
            }
          }
          gr.accumulate(Var{c_id}, gc.data());
        }
        for (std::size_t z = 0; z < block_ids.size(); ++z) {
          const Var bvar{block_ids[z]};
          if (!gr.requires_grad(bvar)) continue;
          Tensor gb({n, sizes[z]});
          for (std::size_t i = 0; i < n; ++i) {
            std::span<const double> gi = go.row_span(i);
            std::span<double> gbi = gb.row_span(i);
            const double ciz = cv2.at(i, z);
            for (std::size_t j = 0; j < sizes[z]; ++j)
              gbi[j] = ciz * gi[offsets[z] + j];
          }
          gr.accumulate(bvar, gb.data());
        }
      },
      "har_compose");
}

Tensor coarse_marginal(const Tensor& fine_probs, const Hierarchy& h) {
  if (fine_probs.rank() != 2)
    throw DimensionError("coarse_marginal expects [n, fine_count] rows");
  const std::size_t fine = static_cast<std::size_t>(h.fine_count());
  if (fine_probs.cols() != fine)
    throw DimensionError("coarse_marginal got " +
                         std::to_string(fine_probs.cols()) +
                         " columns, hierarchy has " + std::to_string(fine) +
                         " fine classes");
  const std::size_t n = fine_probs.rows();
  const std::size_t c = static_cast<std::size_t>(h.coarse_count());
  Tensor out({n, c});
  for (std::size_t i = 0; i < n; ++i) {
    std::span<const double> fi = fine_probs.row_span(i);
    std::span<double> oi = out.row_span(i);
    for (std::size_t y = 0; y < fine; ++y)
      oi[static_cast<std::size_t>(h.coarse_of(static_cast<int>(y)))] += fi[y];
  }
  return out;
}

Var coarse_marginal(Graph& g, Var fine_probs, const Hierarchy& h) {
  Tensor out = coarse_marginal(g.value(fine_probs), h);
  const std::size_t n = out.rows(), c = out.cols();
  const std::size_t fine = static_cast<std::size_t>(h.fine_count());
  std::vector<std::size_t> map(fine);
  for (std::size_t y = 0; y < fine; ++y)
    map[y] = static_cast<std::size_t>(h.coarse_of(static_cast<int>(y)));
  const int f_id = fine_probs.id;
  return g.node(
      std::move(out), {fine_probs},
      [f_id, map, n, c, fine](Graph& gr, int self) {
        (void)c;
        const Tensor& go = gr.grad(Var{self});
        Tensor gf({n, fine});
        for (std::size_t i = 0; i < n; ++i) {
          std::span<const double> gi = go.row_span(i);
          std::span<double> gfi = gf.row_span(i);
          for (std::size_t y = 0; y < fine; ++y) gfi[y] = gi[map[y]];
        }
        gr.accumulate(Var{f_id}, gf.data());
      },
      "coarse_marginal");
}

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

void write_component(ByteWriter& w, const Classifier& c) {
  w.u32(static_cast<std::uint32_t>(c.dims().size()));
  for (std::size_t d : c.dims()) w.u64(d);
  for (std::size_t l = 0; l < c.layer_count(); ++l) {
    const Tensor& wt = c.weight(l);
    for (std::size_t i = 0; i < wt.size(); ++i)
      w.f32(static_cast<float>(wt[i]));
    const Tensor& bt = c.bias(l);
    for (std::size_t i = 0; i < bt.size(); ++i)
      w.f32(static_cast<float>(bt[i]));
  }
}

Classifier read_component(ByteReader& r) {
  const std::uint32_t ndims = r.u32();
  if (ndims < 2) throw IntegrityError("checkpoint component has too few dims");
  std::vector<std::size_t> dims(ndims);
  for (std::uint32_t i = 0; i < ndims; ++i)
    dims[i] = static_cast<std::size_t>(r.u64());
  Classifier c(dims);
  for (std::size_t l = 0; l < c.layer_count(); ++l) {
    Tensor& wt = c.weight(l);
    for (std::size_t i = 0; i < wt.size(); ++i)
      wt[i] = static_cast<double>(r.f32());
    Tensor& bt = c.bias(l);
    for (std::size_t i = 0; i < bt.size(); ++i)
      bt[i] = static_cast<double>(r.f32());
  }
  return c;
}

void write_header(ByteWriter& w, CheckpointKind kind,
                  const CheckpointMeta& meta, std::uint64_t hierarchy_hash) {
  w.magic("HARCKPT1");
  w.u32(kCheckpointVersion);
  w.u8(static_cast<std::uint8_t>(kind));
  w.u64(hierarchy_hash);
  w.u64(meta.seed);
  w.str(meta.config_hash);
}

}  // namespace

const Model& LoadedCheckpoint::model() const {
  if (kind == CheckpointKind::flat) return *flat;
  return *har;
}

void save_checkpoint(const Classifier& m, const CheckpointMeta& meta,
                     std::uint64_t hierarchy_hash,
                     const std::filesystem::path& path) {
  ByteWriter w;
  write_header(w, CheckpointKind::flat, meta, hierarchy_hash);
  w.u32(1);
  write_component(w, m);
  w.save(path);
}

void save_checkpoint(const HarModel& m, const CheckpointMeta& meta,
                     const std::filesystem::path& path) {
  ByteWriter w;
  write_header(w, CheckpointKind::har, meta, m.hierarchy().hash());
  w.str(m.hierarchy().to_text());
  w.u32(static_cast<std::uint32_t>(1 + m.fine_nets().size()));
  write_component(w, m.coarse_net());
  for (const Classifier& net : m.fine_nets()) write_component(w, net);
  w.save(path);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  ByteReader r = ByteReader::from_file(path);
  r.expect_magic("HARCKPT1");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw IntegrityError("unsupported checkpoint version " +
                         std::to_string(version));
  const std::uint8_t kind_byte = r.u8();
  if (kind_byte > 1)
    throw IntegrityError("unknown checkpoint kind " +
                         std::to_string(kind_byte));

  LoadedCheckpoint out;
  out.kind = static_cast<CheckpointKind>(kind_byte);
  out.hierarchy_hash = r.u64();
  out.meta.seed = r.u64();
  out.meta.config_hash = r.str();

  if (out.kind == CheckpointKind::flat) {
    if (r.u32() != 1)
      throw IntegrityError("flat checkpoint must hold one component");
    out.flat = read_component(r);
  } else {
    Hierarchy h = parse_hierarchy(r.str());
    if (h.hash() != out.hierarchy_hash)
      throw IntegrityError("embedded hierarchy does not match its hash");
    const std::uint32_t components = r.u32();
    if (components != static_cast<std::uint32_t>(1 + h.coarse_count()))
      throw IntegrityError("har checkpoint component count mismatch");
    Classifier coarse = read_component(r);
    std::vector<Classifier> fines;
    fines.reserve(static_cast<std::size_t>(h.coarse_count()));
    for (int z = 0; z < h.coarse_count(); ++z)
      fines.push_back(read_component(r));
    out.har = HarModel(std::move(coarse), std::move(fines), std::move(h));
  }
  if (!r.done()) throw IntegrityError("trailing bytes in checkpoint");
  return out;
}

}  // namespace har

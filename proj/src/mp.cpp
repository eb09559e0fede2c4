#include "gae/mp.hpp"

#include "gae/error.hpp"

#include <string>

namespace gae {

MpLayerParams make_mp_params(ParamStore& store, const std::string& prefix, Index f, Rng& rng) {
  if (f < 1) throw ConfigError("message passing width must be at least 1");
  auto weight = [&](const std::string& name, Index fan_in) {
    return store.create(prefix + name, glorot_block(f, f, fan_in, f, rng), 2);
  };
  auto vec = [&](const std::string& name, double fill) {
    return store.create(prefix + name, Mat::Constant(f, 1, fill), 1);
  };
  MpLayerParams p;
  p.we_e = weight(".fe.w1e", 3 * f);
  p.we_s = weight(".fe.w1s", 3 * f);
  p.we_r = weight(".fe.w1r", 3 * f);
  p.be1 = vec(".fe.b1", 0.);
  p.we2 = weight(".fe.w2", f);
  p.be2 = vec(".fe.b2", 0.);
  p.ln_e_g = vec(".fe.ln_g", 1.);
  p.ln_e_b = vec(".fe.ln_b", 0.);
  p.wv_v = weight(".fv.w1v", 2 * f);
  p.wv_a = weight(".fv.w1a", 2 * f);
  p.bv1 = vec(".fv.b1", 0.);
  p.wv2 = weight(".fv.w2", f);
  p.bv2 = vec(".fv.b2", 0.);
  p.ln_v_g = vec(".fv.ln_g", 1.);
  p.ln_v_b = vec(".fv.ln_b", 0.);
  return p;
}

std::pair<Tensor, Tensor> mp_layer(const Graph& g, const MpLayerParams& params) {
  if (!g.V.defined() || !g.E.defined())
    throw UsageError("mp_layer needs bound node and edge attributes");
  if (g.V.cols() != g.E.cols())
    throw DimensionError("mp_layer: node width " + std::to_string(g.V.cols()) +
                         " != edge width " + std::to_string(g.E.cols()));

  const Tensor& v = g.V;
  const Tensor& e = g.E;
  Tensor from_send = gather_rows(matmul(v, params.we_s), g.adj->senders);
  Tensor from_recv = gather_rows(matmul(v, params.we_r), g.adj->receivers);
  Tensor e1 = elu(add_rowvec(add(add(matmul(e, params.we_e), from_send), from_recv), params.be1));
  Tensor e2 = layer_norm(add_rowvec(matmul(e1, params.we2), params.be2), params.ln_e_g,
                         params.ln_e_b, kLayerNormEps);

  Tensor a = scatter_mean(e2, g.adj->receivers, g.num_nodes());
  Tensor v1 = elu(add_rowvec(add(matmul(v, params.wv_v), matmul(a, params.wv_a)), params.bv1));
  Tensor v2 = layer_norm(add_rowvec(matmul(v1, params.wv2), params.bv2), params.ln_v_g,
                         params.ln_v_b, kLayerNormEps);
  return {v2, e2};
}

std::pair<Tensor, Tensor> mp_block(const Graph& g, const std::vector<MpLayerParams>& layers) {
  if (layers.empty()) throw ConfigError("message passing block needs at least one layer");
  Graph curr = g;
  std::pair<Tensor, Tensor> out{g.V, g.E};
  for (const auto& layer : layers) {
    out = mp_layer(curr, layer);
    curr = with_attrs(curr, out.first, out.second);
  }
  return out;
}

void validate(const MmpSpec& spec) {
  if (spec.mp_per_fine_block < 1 || spec.mp_per_coarse_block < 1)
    throw ConfigError("message passing blocks need at least one layer each");
  for (std::size_t i = 0; i < spec.lengthscales.size(); ++i) {
    if (!(spec.lengthscales[i] > 0.))
      throw ConfigError("coarsening lengthscales must be positive");
    if (i > 0 && !(spec.lengthscales[i] > spec.lengthscales[i - 1]))
      throw ConfigError("coarsening lengthscales must be strictly increasing");
  }
}

MmpParams make_mmp_params(ParamStore& store, const std::string& prefix, Index f,
                          const MmpSpec& spec, Rng& rng) {
  validate(spec);
  MmpParams p;
  for (int i = 0; i < spec.mp_per_fine_block; ++i) {
    p.fine_down.push_back(make_mp_params(store, prefix + ".down" + std::to_string(i), f, rng));
    p.fine_up.push_back(make_mp_params(store, prefix + ".up" + std::to_string(i), f, rng));
  }
  const MlpSpec transfer{{f + 2, f, f}, true};
  for (std::size_t s = 0; s < spec.lengthscales.size(); ++s) {
    MmpScaleParams sp;
    sp.lengthscale = spec.lengthscales[s];
    const std::string base = prefix + ".scale" + std::to_string(s);
    for (int i = 0; i < spec.mp_per_coarse_block; ++i) {
      sp.down.push_back(make_mp_params(store, base + ".down" + std::to_string(i), f, rng));
      sp.up.push_back(make_mp_params(store, base + ".up" + std::to_string(i), f, rng));
    }
    sp.f2c = make_mlp(store, base + ".f2c", transfer, rng);
    sp.c2f = make_mlp(store, base + ".c2f", transfer, rng);
    p.scales.push_back(std::move(sp));
  }
  return p;
}

std::pair<Tensor, Tensor> mmp_layer(const Graph& g, const MmpParams& params, CoarsenCache* cache) {
  auto [v0, e0] = mp_block(g, params.fine_down);
  Graph curr = with_attrs(g, v0, e0);

  // Downward: remember each level's post-block graph for the skips.
  std::vector<std::shared_ptr<const CoarseMap>> maps;
  std::vector<Graph> down;
  down.push_back(curr);
  for (const auto& scale : params.scales) {
    std::shared_ptr<const CoarseMap> map =
        cache ? cache->get(curr, scale.lengthscale)
              : std::make_shared<const CoarseMap>(voxel_cluster(curr, scale.lengthscale));
    Graph cg = coarse_graph(curr, *map, scale.f2c);
    auto [cv, ce] = mp_block(cg, scale.down);
    curr = with_attrs(cg, cv, ce);
    maps.push_back(std::move(map));
    down.push_back(curr);
  }

  // Upward: coarse block, then transfer one level up with node skip and the
  // downward pass's edge attrs.
  for (std::size_t i = params.scales.size(); i-- > 0;) {
    Tensor uv = mp_block(curr, params.scales[i].up).first;
    const Graph& fine = down[i];
    Tensor fv = transfer_coarse_to_fine(params.scales[i].c2f, uv, fine.V, *maps[i]);
    curr = with_attrs(fine, fv, fine.E);
  }
  return mp_block(curr, params.fine_up);
}

}  // namespace gae

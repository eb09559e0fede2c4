#include "gae/model.hpp"

#include "gae/error.hpp"

#include <string>

namespace gae {

void validate(const ModelConfig& cfg) {
  if (cfg.input_features < 1) throw ConfigError("model needs at least one input feature");
  if (cfg.edge_features < 1) throw ConfigError("model needs at least one edge feature");
  if (cfg.hidden < 1) throw ConfigError("hidden width must be at least 1");
  if (cfg.augment_pooled_adjacency && cfg.hidden < 2)
    throw ConfigError("augmented pooling needs hidden width of at least 2");
  validate(cfg.plan);
  validate(cfg.encoder_mmp);
  validate(cfg.decoder_mmp);
}

GaeModel::GaeModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  validate(cfg_);
  Rng rng(seed);
  const Index h = cfg_.hidden;

  embed_v_ = make_mlp(store_, "enc.embed_v", MlpSpec{{cfg_.input_features, h, h, h}, true}, rng);
  embed_e_ = make_mlp(store_, "enc.embed_e", MlpSpec{{cfg_.edge_features, h, h, h}, true}, rng);

  const int levels = cfg_.plan.levels();
  for (int l = 0; l <= levels; ++l)
    enc_mmp_.push_back(
        make_mmp_params(store_, "enc.mmp" + std::to_string(l), h, cfg_.encoder_mmp, rng));
  for (int l = 0; l < levels; ++l) {
    Mat p(h, 1);
    for (Index i = 0; i < h; ++i) p(i, 0) = rng.normal();
    const double norm = p.norm();
    if (norm > 0.) p /= norm;
    proj_.push_back(store_.create("enc.pool" + std::to_string(l) + ".p", p, 1));
  }
  for (int l = 0; l <= levels; ++l)
    dec_mmp_.push_back(
        make_mmp_params(store_, "dec.mmp" + std::to_string(l), h, cfg_.decoder_mmp, rng));
  decode_v_ = make_mlp(store_, "dec.decode_v", MlpSpec{{h, h, h, cfg_.input_features}, false}, rng);
}

LatentGraph GaeModel::encode(const Graph& g0) const {
  if (!g0.V.defined() || g0.V.cols() != cfg_.input_features)
    throw UsageError("encode expects node attrs of width " + std::to_string(cfg_.input_features));
  if (!g0.E.defined() || g0.E.cols() != cfg_.edge_features)
    throw UsageError("encode expects edge attrs of width " + std::to_string(cfg_.edge_features));
  if (g0.level != 0) throw UsageError("encode expects an unpooled graph");

  Graph g = with_attrs(g0, mlp_apply(embed_v_, g0.V), mlp_apply(embed_e_, g0.E));

  LatentGraph out;
  for (int l = 0; l < cfg_.plan.levels(); ++l) {
    auto [v, e] = mmp_layer(g, enc_mmp_[static_cast<std::size_t>(l)], &cache_);
    g = with_attrs(g, v, e);

    std::vector<Index> ks;
    for (Index m = 0; m < g.members(); ++m) {
      const Index n = g.member_offsets[static_cast<std::size_t>(m) + 1] -
                      g.member_offsets[static_cast<std::size_t>(m)];
      ks.push_back(std::max<Index>(1, n / cfg_.plan.rf[static_cast<std::size_t>(l)]));
    }
    out.chain.push_back(topk_pool(g, proj_[static_cast<std::size_t>(l)], ks,
                                  cfg_.augment_pooled_adjacency));
    g = out.chain.back().pooled;
  }

  auto [v, e] = mmp_layer(g, enc_mmp_.back(), &cache_);
  out.graph = with_attrs(g, v, e);
  return out;
}

Tensor GaeModel::decode(const LatentGraph& latent) const {
  if (static_cast<int>(latent.chain.size()) != cfg_.plan.levels())
    throw UsageError("latent graph carries " + std::to_string(latent.chain.size()) +
                     " pooling levels; the model has " + std::to_string(cfg_.plan.levels()));
  if (!latent.graph.V.defined() || latent.graph.V.cols() != cfg_.hidden)
    throw UsageError("latent node attrs must have the hidden width");

  Graph g = latent.graph;
  for (std::size_t l = latent.chain.size(); l-- > 0;) {
    auto [v, e] = mmp_layer(g, dec_mmp_[l + 1], &cache_);
    g = unpool(v, e, latent.chain[l]);
  }
  auto [v, e] = mmp_layer(g, dec_mmp_.front(), &cache_);
  return mlp_apply(decode_v_, v);
}

AutoencodeResult GaeModel::autoencode(const Graph& g0) const {
  AutoencodeResult out;
  out.latent = encode(g0);
  out.recon = decode(out.latent);
  out.masked = masked_field(out.latent.chain, g0.num_nodes());
  return out;
}

}  // namespace gae

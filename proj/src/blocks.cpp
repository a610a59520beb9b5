#include "gpinet/blocks.hpp"

#include "gpinet/errors.hpp"

#include <cmath>

namespace gpinet {

namespace {

const ad::Var& param(const BlockContext& ctx, const std::string& name) {
  return ctx.model.parameters().at(name);
}

/// InstanceNorm -> BatchNorm -> ReLU -> point-wise linear.
ad::Var norm_mix(const ad::Var& x, const std::string& layer, const BlockContext& ctx) {
  ad::Var h = ad::instance_norm(x);
  h = batch_norm_layer(h, layer + ".bn", ctx);
  return linear_layer(ad::relu(h), layer + ".fc", ctx);
}

}  // namespace

ad::Var batch_norm_layer(const ad::Var& x, const std::string& layer, const BlockContext& ctx) {
  const ad::Var& scale = param(ctx, layer + ".scale");
  const ad::Var& shift = param(ctx, layer + ".shift");
  ad::Var normalized;
  if (ctx.mode == NormMode::batch) {
    // Single-set batches: batch statistics are the column statistics over N.
    normalized = ad::instance_norm(x);
    if (ctx.record) {
      const RowVector mean = column_mean(x.value());
      ctx.record->stats[layer] = {mean, column_variance(x.value(), mean)};
    }
  } else {
    const RunningStats& st = ctx.model.running_stats(layer);
    if (st.mean.size() != x.cols()) {
      throw DimensionError("norm layer '" + layer + "': running statistics width mismatch");
    }
    const RowVector inv_std = (st.var.array() + kNormEps).rsqrt().matrix();
    normalized = ad::mul_row(ad::add_row(x, ad::constant(-st.mean)), ad::constant(inv_std));
  }
  return ad::add_row(ad::mul_row(normalized, scale), shift);
}

ad::Var linear_layer(const ad::Var& x, const std::string& layer, const BlockContext& ctx) {
  return ad::linear(x, param(ctx, layer + ".weight"), param(ctx, layer + ".bias"));
}

Matrix correspondence_matrix(const CorrespondenceSet& c) {
  Matrix x(c.source.rows(), 6);
  x.leftCols(3) = c.source;
  x.rightCols(3) = c.target;
  return x;
}

ad::Var contextual_embedding(const CorrespondenceSet& c, const BlockContext& ctx) {
  c.validate();
  if (c.size() < 4) {
    throw DegenerateInputError("contextual_embedding: need at least 4 correspondences, got " +
                               std::to_string(c.size()));
  }
  const ad::Var x = ad::constant(correspondence_matrix(c));
  ad::Var h = linear_layer(x, "embed.fc1", ctx);
  h = ad::relu(ad::instance_norm(h));
  h = linear_layer(h, "embed.fc2", ctx);

  const double n = static_cast<double>(c.size());
  Matrix sc = spatial_consistency_matrix(c, ctx.model.config().sc_sigma).cast<double>() / n;
  return ad::add(h, ad::matmul(ad::constant(std::move(sc)), h));
}

ad::Var weighted_global_pool(const ad::Var& f, const ad::Var& w) {
  if (w.cols() != 1 || w.rows() != f.rows()) {
    throw DimensionError("weighted_global_pool: weights " + shape_string(w.value()) +
                         " for features " + shape_string(f.value()));
  }
  if ((w.value().array() < 0.0).any()) throw ContractError("weighted_global_pool: negative weight");
  const ad::Var total = ad::sum(w);
  if (!(total.value()(0, 0) > 0.0)) throw ContractError("weighted_global_pool: weights sum to zero");
  return ad::div_scalar(ad::matmul(ad::transpose(w), f), total);
}

std::optional<ad::Var> project_rows(const ad::Var& f, const ad::Var& g) {
  if (g.rows() != 1 || g.cols() != f.cols()) {
    throw DimensionError("project_rows: direction " + shape_string(g.value()) + " for " +
                         shape_string(f.value()));
  }
  const ad::Var norm2 = ad::sum(ad::mul(g, g));
  if (std::sqrt(norm2.value()(0, 0)) < 1e-12) return std::nullopt;
  const ad::Var coeff = ad::div_scalar(ad::matmul(f, ad::transpose(g)), norm2);  // N x 1
  return ad::matmul(coeff, g);
}

OiResult orthogonal_integration(const ad::Var& f, const BlockContext& ctx) {
  OiResult r;
  r.weights = ad::sigmoid(linear_layer(f, "oi.score", ctx));
  const ad::Var pooled = weighted_global_pool(f, r.weights);
  ad::Var g = ad::relu(linear_layer(pooled, "oi.bottleneck1", ctx));
  r.global_feature = linear_layer(g, "oi.bottleneck2", ctx);

  if (auto proj = project_rows(f, r.global_feature)) {
    r.projection = *proj;
  } else {
    r.projection = ad::constant(Matrix::Zero(f.rows(), f.cols()));
    r.degenerate = true;
  }
  r.residual = ad::sub(f, r.projection);
  const ad::Var cat = ad::concat_cols({r.residual, ad::broadcast_rows(r.global_feature, f.rows())});
  r.output = ad::add(linear_layer(cat, "oi.fuse", ctx), f);
  return r;
}

GfaResult gestalt_feature_attention(const ad::Var& f_o, const BlockContext& ctx) {
  const ad::Var q = linear_layer(f_o, "gfa.query", ctx);
  const ad::Var k = linear_layer(f_o, "gfa.key", ctx);
  const ad::Var v = linear_layer(f_o, "gfa.value", ctx);

  GfaResult r;
  r.token_attention = ad::softmax_rows(ad::matmul(q, ad::transpose(k)));
  r.self1 = ad::add(linear_layer(ad::matmul(r.token_attention, v), "gfa.pw_tokens", ctx), f_o);

  r.channel_attention = ad::softmax_rows(ad::matmul(ad::transpose(q), k));
  const ad::Var mixed = ad::transpose(ad::matmul(r.channel_attention, ad::transpose(v)));
  r.self2 = ad::add(linear_layer(mixed, "gfa.pw_channels", ctx), f_o);

  const double temperature = 1.0 / std::sqrt(static_cast<double>(f_o.cols()));
  const auto cross = [&](const ad::Var& query, const ad::Var& kv, const std::string& layer) {
    const ad::Var att = ad::softmax_rows(ad::scale(ad::matmul(query, ad::transpose(kv)), temperature));
    return ad::add(linear_layer(ad::matmul(att, kv), layer, ctx), query);
  };
  r.out1 = cross(r.self1, r.self2, "gfa.cross1");
  r.out2 = cross(r.self2, r.self1, "gfa.cross2");
  return r;
}

std::vector<ad::Var> build_pyramid(const ad::Var& f, std::size_t levels) {
  std::vector<ad::Var> pyramid{f};
  for (std::size_t t = 1; t <= levels; ++t) {
    pyramid.push_back(ad::group_mean_cols(f, std::size_t{1} << t));
  }
  return pyramid;
}

DmgResult dmg_aggregate(const ad::Var& f1, const ad::Var& f2, const BlockContext& ctx) {
  const ModelConfig& cfg = ctx.model.config();
  if (f1.cols() != static_cast<Eigen::Index>(cfg.channels) || f2.cols() != f1.cols() ||
      f2.rows() != f1.rows()) {
    throw DimensionError("dmg_aggregate: inputs " + shape_string(f1.value()) + " and " +
                         shape_string(f2.value()) + " for d = " + std::to_string(cfg.channels));
  }
  const std::size_t levels = cfg.granularities;
  DmgResult r;
  r.bottom_up = build_pyramid(f1, levels);
  r.top_down = build_pyramid(f2, levels);

  // Fine-to-coarse accumulation; each level reads the already-updated finer one.
  for (std::size_t t = 1; t <= levels; ++t) {
    r.bottom_up[t] = ad::add(r.bottom_up[t],
                             norm_mix(r.bottom_up[t - 1], "dmg.bottom_up." + std::to_string(t), ctx));
  }
  // Coarse-to-fine; the coarsest level is left as pooled.
  const std::size_t finest = cfg.top_down_includes_finest ? 0 : 1;
  for (std::size_t t = levels; t-- > finest;) {
    r.top_down[t] = ad::add(r.top_down[t],
                            norm_mix(r.top_down[t + 1], "dmg.top_down." + std::to_string(t), ctx));
  }

  std::vector<ad::Var> parts;
  for (std::size_t t = 0; t <= levels; ++t) parts.push_back(ad::add(r.bottom_up[t], r.top_down[t]));
  r.fused_input = ad::concat_cols(parts);

  ad::Var h = norm_mix(r.fused_input, "dmg.fuse", ctx);
  r.output = ad::permute_columns(
      h, channel_shuffle_permutation(static_cast<std::size_t>(h.cols()), kShuffleGroups));
  return r;
}

HeadResult classification_head(const ad::Var& features, const BlockContext& ctx) {
  HeadResult r;
  r.logits = linear_layer(features, "head", ctx);
  r.probabilities = ad::sigmoid(r.logits);
  return r;
}

std::string Ablation::label() const {
  if (!any()) return "full";
  std::string s = "no";
  if (oi) s += "-oi";
  if (gfa) s += "-gfa";
  if (dmg) s += "-dmg";
  return s;
}

Eigen::VectorXd ForwardResult::probabilities() const { return head.probabilities.value().col(0); }

ForwardResult gpinet_forward(const CorrespondenceSet& c, const Model& model,
                             const ForwardOptions& options) {
  NormMode mode = options.mode.value_or(model.has_running_stats() ? NormMode::running : NormMode::batch);
  const BlockContext ctx{model, mode, options.record};

  ForwardResult r;
  r.embedding = contextual_embedding(c, ctx);
  ad::Var f = r.embedding;
  if (!options.ablation.oi) {
    OiResult oi = orthogonal_integration(f, ctx);
    r.oi_degenerate = oi.degenerate;
    f = oi.output;
  }
  ad::Var a = f;
  ad::Var b = f;
  if (!options.ablation.gfa) {
    GfaResult gfa = gestalt_feature_attention(f, ctx);
    a = gfa.out1;
    b = gfa.out2;
  }
  if (!options.ablation.dmg) {
    f = dmg_aggregate(a, b, ctx).output;
  } else {
    // Identity on the pair: both inputs coincide when GFA is also ablated.
    f = ad::scale(ad::add(a, b), 0.5);
  }
  r.features = f;
  r.head = classification_head(f, ctx);
  require_finite(r.head.probabilities.value(), "gpinet_forward");
  return r;
}

}  // namespace gpinet

#pragma once

// The network: contextual embedding, orthogonal integration (OI), gestalt
// feature attention (GFA), dual-path multi-granularity aggregation (DMG) and
// the inlier classification head. Every block is written against the
// autodiff Var type so the same code serves inference and training.

#include "gpinet/autodiff.hpp"
#include "gpinet/geometry.hpp"
#include "gpinet/model.hpp"

#include <optional>

namespace gpinet {

/// How normalization layers obtain their statistics.
enum class NormMode {
  batch,    // statistics of the current correspondence set (training)
  running,  // stored running statistics (inference after training)
};

struct BlockContext {
  const Model& model;
  NormMode mode = NormMode::batch;
  /// When set in batch mode, receives the statistics every norm layer used.
  BatchStatsRecord* record = nullptr;
};

/// Normalization layer with per-channel scale and shift.
ad::Var batch_norm_layer(const ad::Var& x, const std::string& layer, const BlockContext& ctx);

/// x W + b for the parameters `<layer>.weight`, `<layer>.bias`.
ad::Var linear_layer(const ad::Var& x, const std::string& layer, const BlockContext& ctx);

/// Correspondences as an N x 6 matrix [p_s, p_t].
Matrix correspondence_matrix(const CorrespondenceSet& c);

/// Two linear layers (instance norm + ReLU between) on [p_s, p_t], then one
/// spatial-consistency aggregation F <- F + SC F / N with the config's sigma.
ad::Var contextual_embedding(const CorrespondenceSet& c, const BlockContext& ctx);

/// sum_p (w_p / sum_q w_q) f_p as a 1 x d row. `w` is N x 1.
ad::Var weighted_global_pool(const ad::Var& f, const ad::Var& w);

/// Per-row projection of `f` onto the direction of the 1 x d row `g`.
/// Returns nullopt when ||g|| < 1e-12.
std::optional<ad::Var> project_rows(const ad::Var& f, const ad::Var& g);

struct OiResult {
  ad::Var output;          // F_o
  ad::Var weights;         // w, N x 1
  ad::Var global_feature;  // F_g^tau, 1 x d
  ad::Var projection;      // F_proj
  ad::Var residual;        // F - F_proj
  bool degenerate = false; // projection replaced by zero
};

OiResult orthogonal_integration(const ad::Var& f, const BlockContext& ctx);

struct GfaResult {
  ad::Var out1;               // f_at1'
  ad::Var out2;               // f_at2'
  ad::Var self1;              // f_at1
  ad::Var self2;              // f_at2
  ad::Var token_attention;    // N x N
  ad::Var channel_attention;  // d x d
};

GfaResult gestalt_feature_attention(const ad::Var& f_o, const BlockContext& ctx);

/// Level t averages disjoint groups of 2^t adjacent channels, t = 0..T.
std::vector<ad::Var> build_pyramid(const ad::Var& f, std::size_t levels);

struct DmgResult {
  ad::Var output;  // F_Ges, N x d
  ad::Var fused_input;  // concatenation before Convs
  std::vector<ad::Var> bottom_up;
  std::vector<ad::Var> top_down;
};

DmgResult dmg_aggregate(const ad::Var& f1, const ad::Var& f2, const BlockContext& ctx);

struct HeadResult {
  ad::Var logits;         // N x 1
  ad::Var probabilities;  // N x 1
};

HeadResult classification_head(const ad::Var& features, const BlockContext& ctx);

struct Ablation {
  bool oi = false;
  bool gfa = false;
  bool dmg = false;

  bool any() const { return oi || gfa || dmg; }
  std::string label() const;
};

struct ForwardOptions {
  Ablation ablation;
  /// Unset: running statistics if the model has them, otherwise batch.
  std::optional<NormMode> mode;
  BatchStatsRecord* record = nullptr;
};

struct ForwardResult {
  ad::Var embedding;
  ad::Var features;  // input of the head
  HeadResult head;
  bool oi_degenerate = false;

  Eigen::VectorXd probabilities() const;
};

/// embedding -> OI -> GFA -> DMG -> head, with ablated blocks replaced by
/// identity maps (an ablated GFA passes its input to both outputs).
ForwardResult gpinet_forward(const CorrespondenceSet& c, const Model& model,
                             const ForwardOptions& options = {});

}  // namespace gpinet

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "matching.hpp"
#include "model.hpp"
#include "synth.hpp"

// Clip-based joint training: tracking label assignment, clip loss with
// collective (whole-clip) normalization, proposal loss, AdamW, and the
// prior-injection recipes.

namespace smr {

enum class Recipe {
  Standard,              // plain joint pass with detect queries
  DetPretrain,           // detection-only phase, then full fine-tune
  QueryPretrain,         // transfer + freeze detect queries from a teacher
  Distill,               // add Hungarian-matched distillation vs teacher boxes
  FrozenAnchorProposal,  // proposals from a frozen teacher's detections
  SelfProposal           // proposals from the model's own detection pass
};

std::string recipeName(Recipe r);
Recipe recipeFromName(const std::string& name);

struct TrainConfig {
  int nClip = 5;            // frames per training clip
  double lambdaProp = 0.5;  // weight of the proposal loss
  int epochs = 10;
  double lr = 1e-3;
  double encoderLr = 1e-4;    // lower rate for the encoder stem
  double decayFactor = 0.1;   // lr multiplier applied at 80% of epochs
  double weightDecay = 1e-4;
  std::uint64_t seed = 0;
  Recipe recipe = Recipe::SelfProposal;
  double distillWeight = 1.0;      // no reference value; exposed for sweeps
  double distillThreshold = 0.5;   // teacher confidence for pseudo-boxes
  bool freezeDetectQueries = false;
  int detPretrainEpochs = 0;  // phase-1 length; 0 = half of epochs

  void validate() const;
};

// Per-query ground-truth index for one frame (-1 = background). Track
// queries bind to the GT carrying their identity; the remaining ("newborn")
// GTs are Hungarian-matched against proposal / learned-anchor / detect
// queries only.
std::vector<int> assignTrackingLabels(const std::vector<Query>& queries,
                                      const std::vector<Box>& outBoxes,
                                      const std::vector<double>& outScores,
                                      const GtFrame& gts,
                                      const LossWeights& w = {});

// Sum of weighted focal/L1/GIoU over every decoder layer of one frame,
// given per-query targets (unnormalized).
Tensor frameTrackingLoss(const DecodeOutput& dec, const std::vector<int>& targets,
                         const GtFrame& gt, const LossWeights& w = {});

struct ClipLossOut {
  Tensor total;      // differentiable: tracking + lambdaProp * proposal
  double lossMotr = 0;  // value of the normalized tracking term
  double lossProp = 0;  // value of the normalized proposal-term sum
};

// Runs the model over the clip (track queries propagated with live content),
// assigns labels per frame, and sums focal/L1/GIoU over every decoder layer,
// normalized by the total GT instance count of the clip.
ClipLossOut clipLoss(Model& model, const Clip& clip, const TrainConfig& cfg,
                     Model* teacher = nullptr);

// Adam with decoupled weight decay. Frozen parameters are left bitwise
// untouched (no decay either). lrScale defaults to 1 per parameter.
class AdamW {
 public:
  AdamW(double lr, double weightDecay, std::size_t nParams);

  void setLr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  void setLrScale(std::size_t i, double s) { lrScale_[i] = s; }
  void setFrozen(std::size_t i, bool f) { frozen_[i] = f; }
  bool frozen(std::size_t i) const { return frozen_[i]; }

  void step(std::vector<Param>& params);
  void resetState();

  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

 private:
  double lr_, weightDecay_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
  std::vector<double> lrScale_;
  std::vector<bool> frozen_;
};

struct EpochStats {
  int epoch = 0;
  double lossMotr = 0;
  double lossProp = 0;
  double lossTotal = 0;
};

using EpochCallback = std::function<void(const EpochStats&, Model&)>;

struct TrainResult {
  std::vector<EpochStats> log;
};

// Trains in place. `teacher` is required by the query_pretrain, distill, and
// frozen_anchor_proposal recipes (a detection-pretrained model).
TrainResult train(Model& model, const Dataset& data, const TrainConfig& cfg,
                  Model* teacher = nullptr, const EpochCallback& cb = {});

}  // namespace smr

#include "training.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <unordered_map>

namespace smr {

std::string recipeName(Recipe r) {
  switch (r) {
    case Recipe::Standard: return "standard";
    case Recipe::DetPretrain: return "det_pretrain";
    case Recipe::QueryPretrain: return "query_pretrain";
    case Recipe::Distill: return "distill";
    case Recipe::FrozenAnchorProposal: return "frozen_anchor_proposal";
    case Recipe::SelfProposal: return "self_proposal";
  }
  throw std::invalid_argument("recipeName: unknown recipe");
}

Recipe recipeFromName(const std::string& name) {
  if (name == "standard") return Recipe::Standard;
  if (name == "det_pretrain") return Recipe::DetPretrain;
  if (name == "query_pretrain") return Recipe::QueryPretrain;
  if (name == "distill") return Recipe::Distill;
  if (name == "frozen_anchor_proposal") return Recipe::FrozenAnchorProposal;
  if (name == "self_proposal") return Recipe::SelfProposal;
  throw std::invalid_argument("unknown recipe: " + name);
}

void TrainConfig::validate() const {
  if (nClip < 2)
    throw std::invalid_argument("TrainConfig: nClip must be >= 2 for tracking");
  if (lambdaProp < 0)
    throw std::invalid_argument("TrainConfig: lambdaProp must be >= 0");
  if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
  if (lr <= 0 || encoderLr <= 0)
    throw std::invalid_argument("TrainConfig: learning rates must be positive");
  if (distillWeight < 0 || distillThreshold < 0 || distillThreshold > 1)
    throw std::invalid_argument("TrainConfig: bad distillation settings");
}

std::vector<int> assignTrackingLabels(const std::vector<Query>& queries,
                                      const std::vector<Box>& outBoxes,
                                      const std::vector<double>& outScores,
                                      const GtFrame& gts,
                                      const LossWeights& w) {
  std::unordered_map<int, std::size_t> gtById;
  for (std::size_t j = 0; j < gts.size(); ++j)
    if (!gtById.emplace(gts[j].id, j).second)
      throw std::invalid_argument("assignTrackingLabels: duplicate GT identity " +
                                  std::to_string(gts[j].id));
  if (queries.size() != outBoxes.size() || queries.size() != outScores.size())
    throw std::invalid_argument("assignTrackingLabels: output misalignment");

  std::vector<int> targets(queries.size(), -1);
  std::vector<bool> gtTaken(gts.size(), false);
  for (std::size_t i = 0; i < queries.size(); ++i) {
    if (queries[i].kind != QueryKind::Track) continue;
    auto it = gtById.find(queries[i].id);
    if (it != gtById.end() && !gtTaken[it->second]) {
      targets[i] = static_cast<int>(it->second);
      gtTaken[it->second] = true;
    }
  }

  std::vector<std::size_t> newborn, cands;
  // only visible objects can be born: an occluded object with no existing
  // track is unobservable and must not be forced onto a detection query
  for (std::size_t j = 0; j < gts.size(); ++j)
    if (!gtTaken[j] && gts[j].visible) newborn.push_back(j);
  for (std::size_t i = 0; i < queries.size(); ++i)
    if (queries[i].kind != QueryKind::Track) cands.push_back(i);
  if (newborn.empty() || cands.empty()) return targets;

  std::vector<Box> candBoxes;
  std::vector<double> candScores;
  std::vector<Box> newbornBoxes;
  for (auto i : cands) {
    candBoxes.push_back(outBoxes[i]);
    candScores.push_back(outScores[i]);
  }
  for (auto j : newborn) newbornBoxes.push_back(gts[j].box);
  Assignment a = hungarian(matchingCost(candBoxes, candScores, newbornBoxes, w));
  for (const auto& [r, c] : a)
    targets[cands[r]] = static_cast<int>(newborn[c]);
  return targets;
}

namespace {

// focal + L1 + GIoU of one decoder layer against frame targets (plain sum)
Tensor layerTrackingLoss(const LayerOutput& layer, const std::vector<int>& targets,
                         const GtFrame& gts, const LossWeights& w) {
  std::vector<int> cls(targets.size(), 0);
  std::vector<std::size_t> predIdx;
  std::vector<Box> tgtBoxes;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] < 0) continue;
    cls[i] = 1;
    predIdx.push_back(i);
    tgtBoxes.push_back(gts[targets[i]].box);
  }
  Tensor probs = clampc(sigmoid(layer.logits), 1e-7, 1 - 1e-7);
  Tensor loss = mulc(sumAll(focalColumn(probs, cls)), w.focal);
  if (!predIdx.empty()) {
    Tensor mb = gatherRows(layer.boxes, predIdx);
    loss = add(loss, mulc(sumAll(l1Column(mb, tgtBoxes)), w.l1));
    loss = add(loss,
               mulc(sumAll(addc(neg(giouColumn(mb, tgtBoxes)), 1.0)), w.giou));
  }
  return loss;
}

}  // namespace

Tensor frameTrackingLoss(const DecodeOutput& dec, const std::vector<int>& targets,
                         const GtFrame& gt, const LossWeights& w) {
  Tensor sum = Tensor::scalar(0.0);
  for (const auto& layer : dec.layers)
    sum = add(sum, layerTrackingLoss(layer, targets, gt, w));
  return sum;
}

namespace {

ForwardMode modeForRecipe(Recipe r) {
  switch (r) {
    case Recipe::SelfProposal: return ForwardMode::SelfProposal;
    case Recipe::FrozenAnchorProposal: return ForwardMode::FrozenAnchorProposal;
    default: return ForwardMode::Baseline;
  }
}

// detection targets: fully-occluded objects are unobservable in a single
// frame, so the detection pass is only supervised on visible ones (the
// tracking pass still carries occluded identities through)
std::vector<Box> gtBoxes(const GtFrame& f) {
  std::vector<Box> out;
  out.reserve(f.size());
  for (const auto& e : f)
    if (e.visible) out.push_back(e.box);
  return out;
}

}  // namespace

ClipLossOut clipLoss(Model& model, const Clip& clip, const TrainConfig& cfg,
                     Model* teacher) {
  if (clip.frames.empty())
    throw std::invalid_argument("clipLoss: empty clip");
  if (clip.gt.size() != clip.frames.size())
    throw std::invalid_argument("clipLoss: gt/frame count mismatch");
  std::size_t totalGt = 0;
  for (const auto& f : clip.gt) totalGt += f.size();
  double denom = static_cast<double>(std::max<std::size_t>(1, totalGt));

  LossWeights w;
  ForwardMode mode = modeForRecipe(cfg.recipe);
  Tensor trackSum = Tensor::scalar(0.0);
  Tensor propSum = Tensor::scalar(0.0);
  std::vector<Query> tracks;

  for (std::size_t f = 0; f < clip.frames.size(); ++f) {
    const GtFrame& gt = clip.gt[f];
    FrameOutput out = model.forwardFrame(clip.frames[f], tracks, mode, teacher);

    if (out.det)
      for (const auto& layer : out.det->dec.layers)
        propSum = add(propSum,
                      setCriterion(layer.boxes, layer.logits, gtBoxes(gt), w).loss);

    if (out.track.queries.empty()) continue;
    const DecodeOutput& dec = out.track.dec;
    std::vector<Box> boxes = dec.finalBoxes();
    std::vector<double> scores = dec.finalScores();
    std::vector<int> targets =
        assignTrackingLabels(out.track.queries, boxes, scores, gt, w);
    trackSum = add(trackSum, frameTrackingLoss(dec, targets, gt, w));

    if (cfg.recipe == Recipe::Distill) {
      if (!teacher)
        throw std::invalid_argument("clipLoss: distillation requires a teacher");
      EncoderFeatures tmem = teacher->encodeFrame(clip.frames[f]);
      DetPassOutput tdet = teacher->detectionPass(tmem);
      std::vector<Box> pseudo;
      for (std::size_t k = 0; k < tdet.dets.size(); ++k)
        if (tdet.dets.scores[k] >= cfg.distillThreshold)
          pseudo.push_back(tdet.dets.boxes[k]);
      Tensor d = setCriterion(dec.final().boxes, dec.final().logits, pseudo, w).loss;
      trackSum = add(trackSum, mulc(d, cfg.distillWeight));
    }

    // propagate: live content within the clip, anchors from predicted boxes
    std::vector<Query> next;
    for (std::size_t i = 0; i < out.track.queries.size(); ++i) {
      const Query& in = out.track.queries[i];
      bool isTrack = in.kind == QueryKind::Track;
      bool newborn = !isTrack && targets[i] >= 0;
      if (!isTrack && !newborn) continue;
      Query q;
      q.kind = QueryKind::Track;
      q.id = isTrack ? in.id : gt[targets[i]].id;
      q.pos = boxes[i];
      q.posLogit = sliceRows(dec.final().boxLogits, i, i + 1);
      q.content = sliceRows(dec.final().content, i, i + 1);
      q.score = scores[i];
      next.push_back(std::move(q));
    }
    tracks = std::move(next);
  }

  ClipLossOut out;
  out.lossMotr = trackSum.item() / denom;
  out.lossProp = propSum.item() / denom;
  out.total = add(mulc(trackSum, 1.0 / denom),
                  mulc(propSum, cfg.lambdaProp / denom));
  return out;
}

AdamW::AdamW(double lr, double weightDecay, std::size_t nParams)
    : lr_(lr), weightDecay_(weightDecay), m_(nParams), v_(nParams),
      lrScale_(nParams, 1.0), frozen_(nParams, false) {}

void AdamW::resetState() {
  t_ = 0;
  for (auto& m : m_) m.clear();
  for (auto& v : v_) v.clear();
}

void AdamW::step(std::vector<Param>& params) {
  if (params.size() != m_.size())
    throw std::invalid_argument("AdamW: parameter count changed");
  t_++;
  double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (frozen_[i]) continue;
    std::vector<double>& th = params[i].tensor.data();
    const std::vector<double>& g = params[i].tensor.grad();
    if (m_[i].empty()) {
      m_[i].assign(th.size(), 0.0);
      v_[i].assign(th.size(), 0.0);
    }
    double lr = lr_ * lrScale_[i];
    for (std::size_t j = 0; j < th.size(); ++j) {
      m_[i][j] = beta1 * m_[i][j] + (1 - beta1) * g[j];
      v_[i][j] = beta2 * v_[i][j] + (1 - beta2) * g[j] * g[j];
      double mhat = m_[i][j] / bc1;
      double vhat = v_[i][j] / bc2;
      th[j] -= lr * (mhat / (std::sqrt(vhat) + eps) + weightDecay_ * th[j]);
    }
  }
}

namespace {

// detection-only objective for the pretraining phase: per-frame set loss on
// the detection pass, no track queries anywhere
Tensor detectionOnlyLoss(Model& model, const Clip& clip, double& value) {
  std::size_t totalGt = 0;
  for (const auto& f : clip.gt) totalGt += f.size();
  double denom = static_cast<double>(std::max<std::size_t>(1, totalGt));
  Tensor sum = Tensor::scalar(0.0);
  for (std::size_t f = 0; f < clip.frames.size(); ++f) {
    EncoderFeatures mem = model.encodeFrame(clip.frames[f]);
    DetPassOutput det = model.detectionPass(mem);
    for (const auto& layer : det.dec.layers)
      sum = add(sum,
                setCriterion(layer.boxes, layer.logits, gtBoxes(clip.gt[f])).loss);
  }
  Tensor out = mulc(sum, 1.0 / denom);
  value = out.item();
  return out;
}

}  // namespace

TrainResult train(Model& model, const Dataset& data, const TrainConfig& cfg,
                  Model* teacher, const EpochCallback& cb) {
  cfg.validate();
  bool needsTeacher = cfg.recipe == Recipe::QueryPretrain ||
                      cfg.recipe == Recipe::Distill ||
                      cfg.recipe == Recipe::FrozenAnchorProposal;
  if (needsTeacher && !teacher)
    throw std::invalid_argument("train: recipe '" + recipeName(cfg.recipe) +
                                "' requires a teacher model");
  if (data.trainClips.empty())
    throw std::invalid_argument("train: no training clips");

  if (cfg.recipe == Recipe::QueryPretrain) {
    // transfer only the detect-query parameters, then freeze them
    for (auto& p : model.params()) {
      if (p.name.rfind("query.detect.", 0) != 0) continue;
      Tensor* src = teacher->findParam(p.name);
      if (!src || src->shape() != p.tensor.shape())
        throw std::invalid_argument("train: teacher lacks parameter " + p.name);
      p.tensor.data() = src->data();
    }
  }

  AdamW opt(cfg.lr, cfg.weightDecay, model.params().size());
  bool freezeDetect =
      cfg.freezeDetectQueries || cfg.recipe == Recipe::QueryPretrain;
  for (std::size_t i = 0; i < model.params().size(); ++i) {
    const std::string& name = model.params()[i].name;
    if (name.rfind("enc.", 0) == 0) opt.setLrScale(i, cfg.encoderLr / cfg.lr);
    if (freezeDetect && name.rfind("query.detect.", 0) == 0)
      opt.setFrozen(i, true);
  }

  int phase1 = 0;
  if (cfg.recipe == Recipe::DetPretrain)
    phase1 = cfg.detPretrainEpochs > 0 ? cfg.detPretrainEpochs
                                       : (cfg.epochs + 1) / 2;
  int decayAt = static_cast<int>(0.8 * cfg.epochs);

  std::mt19937_64 rng(cfg.seed * 0x2545F4914F6CDD1DULL + 1);
  std::vector<std::size_t> order(data.trainClips.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    opt.setLr(epoch >= decayAt && decayAt > 0 ? cfg.lr * cfg.decayFactor
                                              : cfg.lr);
    std::shuffle(order.begin(), order.end(), rng);
    EpochStats es;
    es.epoch = epoch;
    for (std::size_t ci : order) {
      const Clip& clip = data.trainClips[ci];
      model.zeroGrads();
      if (cfg.recipe == Recipe::DetPretrain && epoch < phase1) {
        double v = 0;
        backward(detectionOnlyLoss(model, clip, v));
        es.lossProp += v;
        es.lossTotal += v;
      } else {
        ClipLossOut cl = clipLoss(model, clip, cfg, teacher);
        backward(cl.total);
        es.lossMotr += cl.lossMotr;
        es.lossProp += cl.lossProp;
        es.lossTotal += cl.total.item();
      }
      opt.step(model.params());
    }
    double n = static_cast<double>(order.size());
    es.lossMotr /= n;
    es.lossProp /= n;
    es.lossTotal /= n;
    result.log.push_back(es);
    if (cb) cb(es, model);
  }
  return result;
}

}  // namespace smr

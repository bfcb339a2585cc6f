#include "model.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace smr {

void ModelConfig::validate() const {
  if (d <= 0 || d % 8 != 0)
    throw std::invalid_argument("ModelConfig: d must be a positive multiple of 8");
  if (nHeads <= 0 || d % nHeads != 0)
    throw std::invalid_argument("ModelConfig: d must be divisible by nHeads");
  if (imageSize % gridSize != 0)
    throw std::invalid_argument("ModelConfig: imageSize must be divisible by gridSize");
  if (cProp < 0 || cProp > 1)
    throw std::invalid_argument("ModelConfig: cProp must be in [0,1]");
  if (nDet <= 0 || nLearned < 0 || nEncLayers < 0 || nDecLayersDetect < 0 ||
      nDecLayersTrack < 1)
    throw std::invalid_argument("ModelConfig: bad layer/query counts");
}

namespace {

Tensor gaussTensor(std::mt19937_64& rng, const Shape& s, double scale) {
  std::normal_distribution<double> g(0.0, scale);
  std::vector<double> v(numel(s));
  for (auto& x : v) x = g(rng);
  return Tensor::from(s, std::move(v));
}

// Anchors scattered over the unit square, modest sizes, in logit space.
Tensor anchorInit(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> center(0.1, 0.9);
  std::uniform_real_distribution<double> size(0.12, 0.35);
  std::vector<double> v(n * 4);
  for (std::size_t i = 0; i < n; ++i) {
    v[i * 4 + 0] = logitClamped(center(rng));
    v[i * 4 + 1] = logitClamped(center(rng));
    v[i * 4 + 2] = logitClamped(size(rng));
    v[i * 4 + 3] = logitClamped(size(rng));
  }
  return Tensor::from({n, 4}, std::move(v));
}

}  // namespace

Tensor scaledDotProductAttention(const Tensor& q, const Tensor& k,
                                 const Tensor& v) {
  double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  Tensor scores = mulc(matmul(q, transpose(k)), scale);
  return matmul(softmax(scores, 1), v);
}

Tensor Model::LinearP::apply(const Tensor& x) const {
  return add(matmul(x, w), b);
}

Tensor Model::NormP::apply(const Tensor& x) const {
  return layerNorm(x, gain, bias);
}

Tensor Model::MhaP::apply(const Tensor& qin, const Tensor& kin,
                          const Tensor& vin) const {
  Tensor Q = q.apply(qin), K = k.apply(kin), V = v.apply(vin);
  std::size_t d = Q.cols();
  std::size_t dh = d / static_cast<std::size_t>(heads);
  std::vector<Tensor> headsOut;
  headsOut.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    std::size_t c0 = h * dh, c1 = (h + 1) * dh;
    headsOut.push_back(scaledDotProductAttention(
        sliceCols(Q, c0, c1), sliceCols(K, c0, c1), sliceCols(V, c0, c1)));
  }
  return o.apply(heads == 1 ? headsOut[0] : concatCols(headsOut));
}

Tensor Model::registerParam(const std::string& name, Tensor t) {
  t.setRequiresGrad(true);
  params_.push_back({name, t});
  return t;
}

Tensor Model::initWeight(const std::string& name, std::size_t fanIn,
                         std::size_t fanOut, double scale) {
  std::normal_distribution<double> g(0.0, scale / std::sqrt(static_cast<double>(fanIn)));
  std::vector<double> v(fanIn * fanOut);
  for (auto& x : v) x = g(*initRng_);
  return registerParam(name, Tensor::from({fanIn, fanOut}, std::move(v)));
}

Model::LinearP Model::makeLinear(const std::string& name, std::size_t in,
                                 std::size_t out, double scale) {
  return LinearP{initWeight(name + ".w", in, out, scale),
                 registerParam(name + ".b", Tensor::zeros({1, out}))};
}

Model::NormP Model::makeNorm(const std::string& name, std::size_t dim) {
  return NormP{registerParam(name + ".gain", Tensor::full({dim}, 1.0)),
               registerParam(name + ".bias", Tensor::zeros({dim}))};
}

Model::MhaP Model::makeMha(const std::string& name, std::size_t dim, int heads) {
  MhaP m;
  m.heads = heads;
  m.q = makeLinear(name + ".q", dim, dim);
  m.k = makeLinear(name + ".k", dim, dim);
  m.v = makeLinear(name + ".v", dim, dim);
  m.o = makeLinear(name + ".o", dim, dim);
  return m;
}

Model::Model(const ModelConfig& config, std::uint64_t seed) : cfg_(config) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  initRng_ = &rng;
  std::size_t d = static_cast<std::size_t>(cfg_.d);
  std::size_t patch = static_cast<std::size_t>(cfg_.imageSize / cfg_.gridSize);
  std::size_t patchDim = static_cast<std::size_t>(cfg_.channels) * patch * patch;
  std::size_t nTokens = static_cast<std::size_t>(cfg_.gridSize) * cfg_.gridSize;

  patchEmbed_ = makeLinear("enc.patch", patchDim, d);
  {
    // fixed grid encoding: each token encoded as the box covering its cell,
    // in the same channel layout as the query anchor encoding so query-key
    // dot products compare like coordinates with like
    std::vector<double> pe(nTokens * d);
    for (int gy = 0; gy < cfg_.gridSize; ++gy)
      for (int gx = 0; gx < cfg_.gridSize; ++gx) {
        Box cell{(gx + 0.5) / cfg_.gridSize, (gy + 0.5) / cfg_.gridSize,
                 1.0 / cfg_.gridSize, 1.0 / cfg_.gridSize};
        Tensor row = anchorPe(cell, cfg_.d);
        std::size_t t = static_cast<std::size_t>(gy) * cfg_.gridSize + gx;
        for (std::size_t j = 0; j < d; ++j) pe[t * d + j] = row.at(j);
      }
    gridPe_ = Tensor::from({nTokens, d}, std::move(pe));
  }
  for (int l = 0; l < cfg_.nEncLayers; ++l) {
    std::string p = "enc.l" + std::to_string(l);
    EncLayer e;
    e.sa = makeMha(p + ".sa", d, cfg_.nHeads);
    e.ff1 = makeLinear(p + ".ff1", d, 2 * d);
    e.ff2 = makeLinear(p + ".ff2", 2 * d, d);
    e.n1 = makeNorm(p + ".n1", d);
    e.n2 = makeNorm(p + ".n2", d);
    encLayers_.push_back(std::move(e));
  }

  int nDec = std::max(cfg_.nDecLayersDetect, cfg_.nDecLayersTrack);
  for (int l = 0; l < nDec; ++l) {
    std::string p = "dec.l" + std::to_string(l);
    DecLayer dl;
    dl.sa = makeMha(p + ".sa", d, cfg_.nHeads);
    dl.ca = makeMha(p + ".ca", d, cfg_.nHeads);
    dl.ff1 = makeLinear(p + ".ff1", d, 2 * d);
    dl.ff2 = makeLinear(p + ".ff2", 2 * d, d);
    dl.n1 = makeNorm(p + ".n1", d);
    dl.n2 = makeNorm(p + ".n2", d);
    dl.n3 = makeNorm(p + ".n3", d);
    decLayers_.push_back(std::move(dl));
  }

  box1_ = makeLinear("head.box1", d, d);
  box2_ = makeLinear("head.box2", d, 4, 0.01);  // start near the anchors
  score_ = makeLinear("head.score", d, 1);
  // focal-friendly prior: initial confidence ~ 0.02 everywhere
  score_.b.data()[0] = std::log(0.02 / 0.98);

  std::size_t nDet = static_cast<std::size_t>(cfg_.nDet);
  std::size_t nL = static_cast<std::size_t>(cfg_.nLearned);
  double qscale = 1.0 / std::sqrt(static_cast<double>(d));
  detectContent_ = registerParam("query.detect.content",
                                 gaussTensor(rng, {nDet, d}, qscale));
  detectAnchorLogits_ =
      registerParam("query.detect.anchor", anchorInit(rng, nDet));
  if (nL > 0) {
    learnedContent_ = registerParam("query.learned.content",
                                    gaussTensor(rng, {nL, d}, qscale));
    learnedAnchorLogits_ =
        registerParam("query.learned.anchor", anchorInit(rng, nL));
  }
  qsProp_ = registerParam("query.proposal.shared",
                          gaussTensor(rng, {1, d}, qscale));
  initRng_ = nullptr;
}

Tensor* Model::findParam(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return &p.tensor;
  return nullptr;
}

void Model::zeroGrads() {
  for (auto& p : params_) p.tensor.zeroGrad();
}

std::vector<Box> DecodeOutput::finalBoxes() const {
  const LayerOutput& f = final();
  std::vector<Box> out(f.boxes.rows());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = Box{f.boxes.at(i, 0), f.boxes.at(i, 1), f.boxes.at(i, 2),
                 f.boxes.at(i, 3)};
  return out;
}

std::vector<double> DecodeOutput::finalScores() const {
  const LayerOutput& f = final();
  std::vector<double> out(f.logits.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = 1.0 / (1.0 + std::exp(-f.logits.at(i)));
  return out;
}

EncoderFeatures Model::encodeFrame(const Tensor& image) {
  std::size_t C = static_cast<std::size_t>(cfg_.channels);
  std::size_t H = static_cast<std::size_t>(cfg_.imageSize);
  if (image.shape() != Shape{C, H, H})
    throw std::invalid_argument("encodeFrame: image shape " +
                                shapeStr(image.shape()) + " does not match config");
  std::size_t g = static_cast<std::size_t>(cfg_.gridSize);
  std::size_t p = H / g;
  std::size_t nTokens = g * g;
  std::size_t patchDim = C * p * p;
  std::vector<double> tok(nTokens * patchDim);
  for (std::size_t gy = 0; gy < g; ++gy)
    for (std::size_t gx = 0; gx < g; ++gx) {
      std::size_t t = gy * g + gx;
      std::size_t k = 0;
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t py = 0; py < p; ++py)
          for (std::size_t px = 0; px < p; ++px)
            tok[t * patchDim + k++] =
                image.at((c * H + gy * p + py) * H + gx * p + px);
    }
  Tensor x = patchEmbed_.apply(Tensor::from({nTokens, patchDim}, std::move(tok)));
  for (const auto& l : encLayers_) {
    Tensor qk = add(x, gridPe_);
    x = l.n1.apply(add(x, l.sa.apply(qk, qk, x)));
    x = l.n2.apply(add(x, l.ff2.apply(relu(l.ff1.apply(x)))));
  }
  encoderCalls_++;
  lastEncodedFrame_ = frameCounter_++;
  return EncoderFeatures{x, gridPe_, lastEncodedFrame_};
}

Tensor Model::headDelta(const Tensor& content) const {
  return box2_.apply(relu(box1_.apply(content)));
}

Tensor Model::headLogits(const Tensor& content) const {
  return score_.apply(content);
}

namespace {

std::vector<Box> boxesFromLogits(const Tensor& anchorLogits) {
  std::vector<Box> out(anchorLogits.rows());
  auto sig = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = Box{sig(anchorLogits.at(i, 0)), sig(anchorLogits.at(i, 1)),
                 sig(anchorLogits.at(i, 2)), sig(anchorLogits.at(i, 3))};
  return out;
}

}  // namespace

DecodeOutput Model::decode(const Tensor& content, const Tensor& anchorLogits0,
                           const EncoderFeatures& mem, int depth) {
  std::size_t n = content.rows();
  if (n == 0) throw std::invalid_argument("decode: empty query set");
  if (anchorLogits0.rows() != n)
    throw std::invalid_argument("decode: content/anchor row mismatch");
  if (depth > static_cast<int>(decLayers_.size()))
    throw std::invalid_argument("decode: depth exceeds configured layers");
  decoderCalls_++;

  DecodeOutput out;
  if (depth == 0) {
    out.layers.push_back(LayerOutput{sigmoid(anchorLogits0), anchorLogits0,
                                     headLogits(content), content});
    return out;
  }
  Tensor x = content;
  Tensor anchorLog = anchorLogits0;
  Tensor kmem = add(mem.mem, mem.pos);
  for (int l = 0; l < depth; ++l) {
    const DecLayer& dl = decLayers_[l];
    // anchors stay live through the refinement chain so box gradients reach
    // earlier layers and the anchor parameters
    Tensor qp = anchorPeMatrix(sigmoid(anchorLog), cfg_.d);
    Tensor qk = add(x, qp);
    x = dl.n1.apply(add(x, dl.sa.apply(qk, qk, x)));
    x = dl.n2.apply(add(x, dl.ca.apply(add(x, qp), kmem, mem.mem)));
    x = dl.n3.apply(add(x, dl.ff2.apply(relu(dl.ff1.apply(x)))));
    anchorLog = add(anchorLog, headDelta(x));
    out.layers.push_back(LayerOutput{sigmoid(anchorLog), anchorLog,
                                     headLogits(x), x});
  }
  return out;
}

DetPassOutput Model::detectionPass(const EncoderFeatures& mem, int depth) {
  DetPassOutput out;
  out.dec = decode(detectContent_, detectAnchorLogits_, mem,
                   depth < 0 ? cfg_.nDecLayersDetect : depth);
  out.dets.boxes = out.dec.finalBoxes();
  out.dets.scores = out.dec.finalScores();
  return out;
}

namespace {

Tensor rowLogitConst(const Box& b) {
  return Tensor::from({1, 4}, {logitClamped(b.cx), logitClamped(b.cy),
                               logitClamped(b.w), logitClamped(b.h)});
}

}  // namespace

std::vector<Query> Model::buildProposals(const DetPassOutput& det) {
  std::vector<Query> out;
  std::size_t d = static_cast<std::size_t>(cfg_.d);
  Tensor liveProbs;  // only materialized for the gradient-flow ablation
  if (!cfg_.detachProposals)
    liveProbs = clampc(sigmoid(det.dec.final().logits), 1e-7, 1 - 1e-7);
  for (std::size_t k = 0; k < det.dets.size(); ++k) {
    double score = det.dets.scores[k];
    if (score < cfg_.cProp) continue;
    Query q;
    q.kind = QueryKind::Proposal;
    q.pos = det.dets.boxes[k];
    q.score = score;
    if (cfg_.detachProposals) {
      q.posLogit = rowLogitConst(q.pos);
      q.content = add(qsProp_, reshape(sincosPe(score, cfg_.d), {1, d}));
    } else {
      q.posLogit = sliceRows(det.dec.final().boxLogits, k, k + 1);
      Tensor st = elem(liveProbs, k);
      q.content = add(qsProp_, reshape(sincosPe(st, cfg_.d), {1, d}));
    }
    out.push_back(std::move(q));
  }
  for (int i = 0; i < cfg_.nLearned; ++i) {
    Query q;
    q.kind = QueryKind::LearnedAnchor;
    q.posLogit = sliceRows(learnedAnchorLogits_, i, i + 1);
    auto bs = boxesFromLogits(q.posLogit);
    q.pos = bs[0];
    q.content = sliceRows(learnedContent_, i, i + 1);
    out.push_back(std::move(q));
  }
  return out;
}

std::vector<Query> Model::buildProposalsFrom(const DetectionSet& dets) {
  std::vector<Query> out;
  std::size_t d = static_cast<std::size_t>(cfg_.d);
  for (std::size_t k = 0; k < dets.size(); ++k) {
    if (dets.scores[k] < cfg_.cProp) continue;
    Query q;
    q.kind = QueryKind::Proposal;
    q.pos = dets.boxes[k];
    q.score = dets.scores[k];
    q.posLogit = rowLogitConst(q.pos);
    q.content = add(qsProp_, reshape(sincosPe(q.score, cfg_.d), {1, d}));
    out.push_back(std::move(q));
  }
  for (int i = 0; i < cfg_.nLearned; ++i) {
    Query q;
    q.kind = QueryKind::LearnedAnchor;
    q.posLogit = sliceRows(learnedAnchorLogits_, i, i + 1);
    q.pos = boxesFromLogits(q.posLogit)[0];
    q.content = sliceRows(learnedContent_, i, i + 1);
    out.push_back(std::move(q));
  }
  return out;
}

std::vector<Query> Model::detectQueries() {
  std::vector<Query> out;
  for (int i = 0; i < cfg_.nDet; ++i) {
    Query q;
    q.kind = QueryKind::Detect;
    q.posLogit = sliceRows(detectAnchorLogits_, i, i + 1);
    q.pos = boxesFromLogits(q.posLogit)[0];
    q.content = sliceRows(detectContent_, i, i + 1);
    out.push_back(std::move(q));
  }
  return out;
}

TrackPassOutput Model::trackingPass(const std::vector<Query>& tracks,
                                    const std::vector<Query>& candidates,
                                    const EncoderFeatures& mem) {
  if (mem.frameId != lastEncodedFrame_)
    throw std::runtime_error(
        "trackingPass: stale encoder features (frame " +
        std::to_string(mem.frameId) + ", expected " +
        std::to_string(lastEncodedFrame_) + "); encode each frame exactly once");
  TrackPassOutput out;
  out.queries = tracks;
  out.queries.insert(out.queries.end(), candidates.begin(), candidates.end());
  if (out.queries.empty()) return out;
  std::vector<Tensor> contents, anchors;
  for (const auto& q : out.queries) {
    contents.push_back(q.content);
    anchors.push_back(q.posLogit);
  }
  out.dec = decode(concatRows(contents), concatRows(anchors), mem,
                   cfg_.nDecLayersTrack);
  return out;
}

FrameOutput Model::forwardFrame(const Tensor& image,
                                const std::vector<Query>& tracks,
                                ForwardMode mode, Model* teacher) {
  FrameOutput out;
  EncoderFeatures mem = encodeFrame(image);
  switch (mode) {
    case ForwardMode::Baseline:
      out.track = trackingPass(tracks, detectQueries(), mem);
      break;
    case ForwardMode::SelfProposal: {
      out.det = detectionPass(mem);
      out.track = trackingPass(tracks, buildProposals(*out.det), mem);
      break;
    }
    case ForwardMode::FrozenAnchorProposal: {
      if (!teacher)
        throw std::invalid_argument("forwardFrame: frozen-anchor mode needs a teacher");
      EncoderFeatures tmem = teacher->encodeFrame(image);
      DetPassOutput tdet = teacher->detectionPass(tmem);
      out.track = trackingPass(tracks, buildProposalsFrom(tdet.dets), mem);
      break;
    }
  }
  return out;
}

}  // namespace smr

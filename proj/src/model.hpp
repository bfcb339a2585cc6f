#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "geometry.hpp"
#include "tensor.hpp"

// The toy SelfMOTR network: patch encoder, shared transformer decoder,
// detection/score heads, and the self-proposal machinery (detection-only
// pass, confidence-modulated proposal queries, learned fallback anchors).

namespace smr {

enum class QueryKind { Detect, Proposal, LearnedAnchor, Track };

// Single-head scaled dot-product attention over row-major token matrices:
// softmax(q kᵀ / sqrt(d_k)) v. Building block for the multi-head layers.
Tensor scaledDotProductAttention(const Tensor& q, const Tensor& k,
                                 const Tensor& v);

struct Query {
  QueryKind kind = QueryKind::Detect;
  Box pos;           // z_pos, the 4D anchor
  Tensor posLogit;   // [1 x 4] logit-space anchor; live for learned anchors
  Tensor content;    // [1 x d] z_content
  int id = -1;       // track identity (track queries only)
  double score = 0;  // last confidence
};

struct ModelConfig {
  int d = 64;
  int nHeads = 4;
  int nEncLayers = 2;
  int nDecLayersDetect = 2;
  int nDecLayersTrack = 2;
  int nDet = 60;
  int nLearned = 10;
  double cProp = 0.05;
  int gridSize = 8;
  int imageSize = 64;
  int channels = 3;
  // When true (default), proposal anchors and confidences enter the tracking
  // pass as detached constants; the detection pass is trained only by the
  // proposal loss. Flip for the gradient-flow ablation.
  bool detachProposals = true;

  void validate() const;
};

struct EncoderFeatures {
  Tensor mem;  // [T x d]
  Tensor pos;  // [T x d], constant 2D positional encoding
  long frameId = -1;
};

struct LayerOutput {
  Tensor boxes;      // [N x 4] center-form, post-sigmoid
  Tensor boxLogits;  // [N x 4] pre-sigmoid
  Tensor logits;     // [N x 1] pre-sigmoid confidence
  Tensor content;    // [N x d]
};

struct DecodeOutput {
  std::vector<LayerOutput> layers;  // one per decoder layer (or the depth-0 pass-through)
  const LayerOutput& final() const { return layers.back(); }
  std::vector<Box> finalBoxes() const;
  std::vector<double> finalScores() const;
};

struct DetPassOutput {
  DetectionSet dets;  // values from the final layer
  DecodeOutput dec;   // tensors for the proposal loss
};

struct TrackPassOutput {
  std::vector<Query> queries;  // input queries, aligned with outputs
  DecodeOutput dec;
};

enum class ForwardMode { Baseline, SelfProposal, FrozenAnchorProposal };

struct FrameOutput {
  std::optional<DetPassOutput> det;  // present in SelfProposal mode
  TrackPassOutput track;
};

struct Param {
  std::string name;
  Tensor tensor;
};

class Model {
 public:
  Model(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }
  Tensor* findParam(const std::string& name);
  void zeroGrads();

  // Runs the encoder once; increments the encoder counter and the frame id.
  EncoderFeatures encodeFrame(const Tensor& image);

  // Shared decoder. `anchorLogits0` [N x 4] may mix constants and live
  // parameter rows; depth 0 is the identity pass (boxes = anchors, head on
  // the input content).
  DecodeOutput decode(const Tensor& content, const Tensor& anchorLogits0,
                      const EncoderFeatures& mem, int depth);

  // Detection-only pass with the N_det detect queries (no track queries).
  // depth < 0 uses the configured detection depth.
  DetPassOutput detectionPass(const EncoderFeatures& mem, int depth = -1);

  // Score-filtered proposals plus the N_learned learned fallback anchors.
  std::vector<Query> buildProposals(const DetPassOutput& det);
  // Same construction from externally supplied detections (frozen teacher).
  std::vector<Query> buildProposalsFrom(const DetectionSet& dets);

  // The N_det detect queries as a query list (baseline joint pass).
  std::vector<Query> detectQueries();

  // Tracking pass over [tracks; candidates]; outputs align index-wise with
  // the concatenated input. `mem` must be this frame's encoder output.
  TrackPassOutput trackingPass(const std::vector<Query>& tracks,
                               const std::vector<Query>& candidates,
                               const EncoderFeatures& mem);

  FrameOutput forwardFrame(const Tensor& image, const std::vector<Query>& tracks,
                           ForwardMode mode, Model* teacher = nullptr);

  long encoderInvocations() const { return encoderCalls_; }
  long decoderInvocations() const { return decoderCalls_; }
  void resetCounters() { encoderCalls_ = decoderCalls_ = 0; }

 private:
  struct LinearP {
    Tensor w, b;
    Tensor apply(const Tensor& x) const;
  };
  struct NormP {
    Tensor gain, bias;
    Tensor apply(const Tensor& x) const;
  };
  struct MhaP {
    LinearP q, k, v, o;
    int heads = 1;
    Tensor apply(const Tensor& qin, const Tensor& kin, const Tensor& vin) const;
  };
  struct EncLayer {
    MhaP sa;
    LinearP ff1, ff2;
    NormP n1, n2;
  };
  struct DecLayer {
    MhaP sa, ca;
    LinearP ff1, ff2;
    NormP n1, n2, n3;
  };

  Tensor registerParam(const std::string& name, Tensor t);
  Tensor initWeight(const std::string& name, std::size_t fanIn,
                    std::size_t fanOut, double scale = 1.0);
  LinearP makeLinear(const std::string& name, std::size_t in, std::size_t out,
                     double scale = 1.0);
  NormP makeNorm(const std::string& name, std::size_t dim);
  MhaP makeMha(const std::string& name, std::size_t dim, int heads);

  Tensor headDelta(const Tensor& content) const;   // [N x 4]
  Tensor headLogits(const Tensor& content) const;  // [N x 1]

  ModelConfig cfg_;
  std::mt19937_64* initRng_ = nullptr;  // only valid during construction
  std::vector<Param> params_;

  LinearP patchEmbed_;
  Tensor gridPe_;  // [T x d] constant
  std::vector<EncLayer> encLayers_;
  std::vector<DecLayer> decLayers_;
  LinearP box1_, box2_;  // box head MLP
  LinearP score_;        // confidence head
  Tensor detectContent_;       // [nDet x d]
  Tensor detectAnchorLogits_;  // [nDet x 4]
  Tensor learnedContent_;      // [nLearned x d]
  Tensor learnedAnchorLogits_; // [nLearned x 4]
  Tensor qsProp_;              // [1 x d] shared proposal content query

  long encoderCalls_ = 0;
  long decoderCalls_ = 0;
  long frameCounter_ = 0;
  long lastEncodedFrame_ = -1;
};

}  // namespace smr

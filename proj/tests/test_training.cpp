#include <doctest.h>

#include <cmath>
#include <random>

#include "training.hpp"

using namespace smr;

namespace {

ModelConfig tinyModel() {
  ModelConfig c;
  c.d = 16;
  c.nHeads = 2;
  c.nEncLayers = 1;
  c.nDecLayersDetect = 2;
  c.nDecLayersTrack = 2;
  c.nDet = 6;
  c.nLearned = 2;
  c.gridSize = 4;
  c.imageSize = 16;
  c.channels = 1;
  return c;
}

Clip tinyClip(int frames, int objects, std::uint64_t seed) {
  SceneConfig sc;
  sc.numObjects = objects;
  sc.numFrames = frames;
  sc.imageSize = 16;
  sc.channels = 1;
  sc.seed = seed;
  Video v = generate(sc);
  Clip c;
  c.frames = v.frames;
  c.gt = v.gt;
  return c;
}

Query trackQuery(int id, const Box& b, std::size_t d) {
  Query q;
  q.kind = QueryKind::Track;
  q.id = id;
  q.pos = b;
  q.posLogit = Tensor::zeros({1, 4});
  q.content = Tensor::zeros({1, d});
  return q;
}

Query candQuery(QueryKind kind, std::size_t d) {
  Query q;
  q.kind = kind;
  q.posLogit = Tensor::zeros({1, 4});
  q.content = Tensor::zeros({1, d});
  return q;
}

}  // namespace

TEST_CASE("adamw: zero gradients and zero decay leave parameters unchanged") {
  std::vector<Param> ps{{"p", Tensor::from({2}, {1.5, -2.0}).setRequiresGrad(true)}};
  ps[0].tensor.zeroGrad();
  AdamW opt(1e-3, 0.0, 1);
  opt.step(ps);
  opt.step(ps);
  CHECK(ps[0].tensor.at(0) == 1.5);
  CHECK(ps[0].tensor.at(1) == -2.0);
}

TEST_CASE("adamw: first step from zero state with g=1 moves by about -lr") {
  std::vector<Param> ps{{"p", Tensor::from({1}, {0.0}).setRequiresGrad(true)}};
  ps[0].tensor.zeroGrad();
  ps[0].tensor.node()->grad[0] = 1.0;
  AdamW opt(1e-3, 0.0, 1);
  opt.step(ps);
  CHECK(ps[0].tensor.at(0) == doctest::Approx(-1e-3).epsilon(1e-6));
}

TEST_CASE("adamw: decoupled decay alone scales parameters by (1 - lr*wd)") {
  std::vector<Param> ps{{"p", Tensor::from({1}, {2.0}).setRequiresGrad(true)}};
  ps[0].tensor.zeroGrad();
  AdamW opt(0.1, 0.5, 1);
  opt.step(ps);
  CHECK(ps[0].tensor.at(0) == doctest::Approx(2.0 * (1 - 0.1 * 0.5)));
}

TEST_CASE("adamw: frozen parameters are bitwise untouched") {
  std::vector<Param> ps{{"p", Tensor::from({1}, {3.0}).setRequiresGrad(true)}};
  ps[0].tensor.zeroGrad();
  ps[0].tensor.node()->grad[0] = 5.0;
  AdamW opt(1e-2, 1e-1, 1);
  opt.setFrozen(0, true);
  opt.step(ps);
  CHECK(ps[0].tensor.at(0) == 3.0);
}

TEST_CASE("label assignment: track queries bind to their identity") {
  std::size_t d = 8;
  std::vector<Query> qs = {trackQuery(1, Box{0.2, 0.2, 0.1, 0.1}, d),
                           trackQuery(2, Box{0.8, 0.8, 0.1, 0.1}, d),
                           candQuery(QueryKind::Proposal, d)};
  GtFrame gt = {{2, Box{0.81, 0.79, 0.1, 0.1}, true},
                {1, Box{0.2, 0.2, 0.1, 0.1}, true}};
  std::vector<Box> boxes = {qs[0].pos, qs[1].pos, Box{0.5, 0.5, 0.1, 0.1}};
  std::vector<double> scores = {0.9, 0.9, 0.3};
  std::vector<int> t = assignTrackingLabels(qs, boxes, scores, gt);
  CHECK(t[0] == 1);  // id 1 lives at gt index 1
  CHECK(t[1] == 0);
  CHECK(t[2] == -1);  // everything tracked: proposals get background
}

TEST_CASE("label assignment: absent identity means background") {
  std::size_t d = 8;
  std::vector<Query> qs = {trackQuery(7, Box{0.5, 0.5, 0.1, 0.1}, d)};
  GtFrame gt = {{1, Box{0.5, 0.5, 0.1, 0.1}, true}};
  std::vector<int> t = assignTrackingLabels(qs, {qs[0].pos}, {0.9}, gt);
  CHECK(t[0] == -1);
}

TEST_CASE("label assignment: first frame reduces to pure Hungarian matching") {
  std::size_t d = 8;
  std::vector<Query> qs = {candQuery(QueryKind::Proposal, d),
                           candQuery(QueryKind::Proposal, d),
                           candQuery(QueryKind::LearnedAnchor, d)};
  std::vector<Box> boxes = {Box{0.2, 0.2, 0.1, 0.1}, Box{0.7, 0.7, 0.2, 0.2},
                            Box{0.5, 0.5, 0.3, 0.3}};
  std::vector<double> scores = {0.8, 0.6, 0.4};
  GtFrame gt = {{5, Box{0.7, 0.7, 0.2, 0.2}, true},
                {9, Box{0.21, 0.2, 0.1, 0.1}, true}};
  std::vector<int> t = assignTrackingLabels(qs, boxes, scores, gt);
  std::vector<Box> gtb = {gt[0].box, gt[1].box};
  Assignment ref = hungarian(matchingCost(boxes, scores, gtb));
  std::vector<int> expect(qs.size(), -1);
  for (const auto& [r, c] : ref) expect[r] = static_cast<int>(c);
  CHECK(t == expect);
}

TEST_CASE("label assignment: duplicate GT identities rejected; no GT reused") {
  std::size_t d = 8;
  std::vector<Query> qs = {candQuery(QueryKind::Proposal, d)};
  GtFrame bad = {{1, Box{0.3, 0.3, 0.1, 0.1}, true},
                 {1, Box{0.6, 0.6, 0.1, 0.1}, true}};
  CHECK_THROWS_AS(
      assignTrackingLabels(qs, {Box{0.3, 0.3, 0.1, 0.1}}, {0.5}, bad),
      std::invalid_argument);

  // random instances: one GT never assigned to two queries
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.1, 0.9);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Query> queries;
    std::vector<Box> boxes;
    std::vector<double> scores;
    int nq = 2 + static_cast<int>(u(rng) * 5);
    for (int i = 0; i < nq; ++i) {
      if (i < 2 && trial % 2 == 0)
        queries.push_back(trackQuery(i + 1, Box{u(rng), u(rng), 0.1, 0.1}, d));
      else
        queries.push_back(candQuery(QueryKind::Proposal, d));
      boxes.push_back(Box{u(rng), u(rng), 0.1, 0.1});
      scores.push_back(u(rng));
    }
    GtFrame gt;
    int ng = 1 + static_cast<int>(u(rng) * 4);
    for (int j = 0; j < ng; ++j)
      gt.push_back({j + 1, Box{u(rng), u(rng), 0.15, 0.15}, true});
    std::vector<int> t = assignTrackingLabels(queries, boxes, scores, gt);
    std::vector<int> uses(gt.size(), 0);
    for (int x : t)
      if (x >= 0) uses[x]++;
    for (int c : uses) CHECK(c <= 1);
  }
}

TEST_CASE("normalization divides by total GT count (doubling law)") {
  // duplicate queries and GTs block-wise: per-instance losses are identical,
  // so the per-GT normalized loss must not change
  std::size_t n = 2, d = 8;
  LayerOutput lo;
  lo.boxes = Tensor::from({n, 4}, {0.3, 0.3, 0.2, 0.2, 0.7, 0.6, 0.2, 0.3});
  lo.boxLogits = Tensor::zeros({n, 4});
  lo.logits = Tensor::from({n, 1}, {1.2, -0.4});
  lo.content = Tensor::zeros({n, d});
  DecodeOutput single;
  single.layers.push_back(lo);
  GtFrame gt1 = {{1, Box{0.32, 0.3, 0.2, 0.2}, true}};
  Tensor l1 = frameTrackingLoss(single, {0, -1}, gt1);

  LayerOutput lo2;
  std::vector<double> b2, lg2;
  for (int rep = 0; rep < 2; ++rep) {
    for (double x : lo.boxes.data()) b2.push_back(x);
    for (double x : lo.logits.data()) lg2.push_back(x);
  }
  lo2.boxes = Tensor::from({2 * n, 4}, b2);
  lo2.boxLogits = Tensor::zeros({2 * n, 4});
  lo2.logits = Tensor::from({2 * n, 1}, lg2);
  lo2.content = Tensor::zeros({2 * n, d});
  DecodeOutput doubled;
  doubled.layers.push_back(lo2);
  GtFrame gt2 = {{1, Box{0.32, 0.3, 0.2, 0.2}, true},
                 {2, Box{0.32, 0.3, 0.2, 0.2}, true}};
  Tensor l2 = frameTrackingLoss(doubled, {0, -1, 1, -1}, gt2);
  CHECK(l2.item() / 2.0 == doctest::Approx(l1.item() / 1.0).epsilon(1e-12));
}

TEST_CASE("clip loss: total equals tracking term plus lambda times proposal term") {
  Model m(tinyModel(), 3);
  Clip clip = tinyClip(2, 2, 11);
  TrainConfig cfg;
  cfg.recipe = Recipe::SelfProposal;
  cfg.lambdaProp = 0.5;
  ClipLossOut out = clipLoss(m, clip, cfg);
  CHECK(out.total.item() ==
        doctest::Approx(out.lossMotr + 0.5 * out.lossProp).epsilon(1e-12));
  CHECK(out.lossProp > 0);

  cfg.lambdaProp = 0.0;
  Model m2(tinyModel(), 3);
  ClipLossOut zero = clipLoss(m2, clip, cfg);
  CHECK(zero.total.item() == doctest::Approx(zero.lossMotr).epsilon(1e-12));

  CHECK_THROWS_AS(clipLoss(m, Clip{}, cfg), std::invalid_argument);
}

TEST_CASE("clip loss gradients pass finite-difference spot checks") {
  // fully differentiable settings: the standard recipe, and self-proposal
  // with the detach flag off (and no score filtering, so no discrete jumps)
  ModelConfig mc = tinyModel();
  TrainConfig cfg;
  SUBCASE("standard recipe") { cfg.recipe = Recipe::Standard; }
  SUBCASE("live proposals") {
    cfg.recipe = Recipe::SelfProposal;
    mc.detachProposals = false;
    mc.cProp = 0.0;
  }
  Model m(mc, 19);
  Clip clip = tinyClip(2, 2, 13);

  m.zeroGrads();
  ClipLossOut out = clipLoss(m, clip, cfg);
  backward(out.total);

  std::mt19937_64 rng(5);
  const double h = 1e-5;
  int checked = 0;
  for (int trial = 0; trial < 5; ++trial) {
    std::size_t pi = rng() % m.params().size();
    Tensor& p = m.params()[pi].tensor;
    std::size_t j = rng() % p.size();
    double saved = p.data()[j];
    p.data()[j] = saved + h;
    double up = clipLoss(m, clip, cfg).total.item();
    p.data()[j] = saved - h;
    double dn = clipLoss(m, clip, cfg).total.item();
    p.data()[j] = saved;
    double fd = (up - dn) / (2 * h);
    double an = p.grad()[j];
    double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
    CHECK(std::abs(fd - an) / denom <= 1e-3);
    checked++;
  }
  CHECK(checked == 5);
}

TEST_CASE("200 optimizer steps overfit a fixed tiny clip by >= 90%") {
  ModelConfig mc = tinyModel();
  Model m(mc, 7);
  Clip clip = tinyClip(2, 2, 21);
  TrainConfig cfg;
  cfg.recipe = Recipe::SelfProposal;
  AdamW opt(1e-3, 1e-4, m.params().size());
  double first = 0, last = 0;
  for (int step = 0; step < 200; ++step) {
    m.zeroGrads();
    ClipLossOut out = clipLoss(m, clip, cfg);
    if (step == 0) first = out.total.item();
    last = out.total.item();
    backward(out.total);
    opt.step(m.params());
  }
  CHECK(last <= 0.1 * first);
}

TEST_CASE("training is deterministic in the seed") {
  DatasetSpec spec;
  spec.base = SceneConfig{};
  spec.base.numObjects = 2;
  spec.base.numFrames = 4;
  spec.base.imageSize = 16;
  spec.base.channels = 1;
  spec.trainSeeds = {1};
  spec.valSeeds = {};
  spec.clipLen = 2;
  Dataset data = split(spec);
  TrainConfig cfg;
  cfg.nClip = 2;
  cfg.epochs = 2;
  cfg.seed = 42;
  cfg.recipe = Recipe::SelfProposal;
  Model a(tinyModel(), 9), b(tinyModel(), 9);
  TrainResult ra = train(a, data, cfg);
  TrainResult rb = train(b, data, cfg);
  REQUIRE(ra.log.size() == rb.log.size());
  for (std::size_t i = 0; i < ra.log.size(); ++i)
    CHECK(ra.log[i].lossTotal == rb.log[i].lossTotal);
  for (std::size_t i = 0; i < a.params().size(); ++i)
    CHECK(a.params()[i].tensor.data() == b.params()[i].tensor.data());
}

TEST_CASE("query pretraining freezes transferred detect queries bitwise") {
  DatasetSpec spec;
  spec.base.numObjects = 2;
  spec.base.numFrames = 4;
  spec.base.imageSize = 16;
  spec.base.channels = 1;
  spec.trainSeeds = {1};
  spec.clipLen = 2;
  Dataset data = split(spec);

  Model teacher(tinyModel(), 51);
  Model student(tinyModel(), 52);
  TrainConfig cfg;
  cfg.nClip = 2;
  cfg.epochs = 2;
  cfg.recipe = Recipe::QueryPretrain;
  CHECK_THROWS_AS(train(student, data, cfg), std::invalid_argument);
  train(student, data, cfg, &teacher);
  for (const char* name : {"query.detect.content", "query.detect.anchor"}) {
    Tensor* s = student.findParam(name);
    Tensor* t = teacher.findParam(name);
    REQUIRE(s);
    REQUIRE(t);
    CHECK(s->data() == t->data());
  }
  // everything else moved
  CHECK(student.findParam("head.score.w")->data() !=
        Model(tinyModel(), 52).findParam("head.score.w")->data());
}

TEST_CASE("recipe round trip and remaining recipes run end to end") {
  for (Recipe r : {Recipe::Standard, Recipe::DetPretrain, Recipe::QueryPretrain,
                   Recipe::Distill, Recipe::FrozenAnchorProposal,
                   Recipe::SelfProposal})
    CHECK(recipeFromName(recipeName(r)) == r);
  CHECK_THROWS_AS(recipeFromName("bogus"), std::invalid_argument);

  DatasetSpec spec;
  spec.base.numObjects = 2;
  spec.base.numFrames = 4;
  spec.base.imageSize = 16;
  spec.base.channels = 1;
  spec.trainSeeds = {1};
  spec.clipLen = 2;
  Dataset data = split(spec);
  Model teacher(tinyModel(), 61);
  for (Recipe r : {Recipe::Standard, Recipe::DetPretrain, Recipe::Distill,
                   Recipe::FrozenAnchorProposal}) {
    Model m(tinyModel(), 62);
    TrainConfig cfg;
    cfg.nClip = 2;
    cfg.epochs = 2;
    cfg.recipe = r;
    TrainResult res = train(m, data, cfg, &teacher);
    CHECK(res.log.size() == 2);
    for (const auto& e : res.log) CHECK(std::isfinite(e.lossTotal));
  }
}

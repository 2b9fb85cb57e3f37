#include <doctest.h>

#include <cmath>
#include <numeric>

#include "exitrack/distill/imitation.hpp"
#include "exitrack/exits/model.hpp"
#include "exitrack/numerics/kernels.hpp"
#include "support/finite_difference.hpp"

using namespace exitrack;
using num::Tensor;
using num::Tensor64;

namespace {

Tensor random_image(std::size_t size, num::RandomState& rng) {
  std::vector<float> v(3 * size * size);
  for (auto& x : v) x = static_cast<float>(rng.uniform());
  return Tensor({3, size, size}, v);
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

void zero(Tensor t) {
  for (auto& v : t.data()) v = 0.0f;
}

}  // namespace

TEST_SUITE("backbone") {

TEST_CASE("patch embedding token counts") {
  num::RandomState rng(1);
  backbone::BackboneConfig cfg;
  backbone::Encoder<float> enc(cfg, rng);
  CHECK(enc.patch_embed(random_image(64, rng)).shape() == num::Shape{64, 64});
  CHECK(enc.patch_embed(random_image(32, rng)).shape() == num::Shape{16, 64});

  // P = H: one token, a plain linear map of the flattened (centred) image
  backbone::BackboneConfig whole = cfg;
  whole.patch = 32;
  whole.template_size = 32;
  whole.search_size = 32;
  backbone::Encoder<float> enc1(whole, rng);
  const auto img = random_image(32, rng);
  const auto tok = enc1.patch_embed(img);
  CHECK(tok.shape() == num::Shape{1, 64});
  double expect = enc1.patch_proj.bias.at(0);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t p = 0; p < 32 * 32; ++p)
      expect += (img.at(c * 1024 + p) - 0.5) * 4.0 * enc1.patch_proj.weight.at(c * 1024 + p, 0);
  CHECK(tok.at(0) == doctest::Approx(expect).epsilon(1e-4));

  backbone::BackboneConfig bad = cfg;
  bad.patch = 7;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("assemble_input layout") {
  num::RandomState rng(2);
  backbone::BackboneConfig cfg;
  backbone::Encoder<float> enc(cfg, rng);
  const auto seq = enc.embed(random_image(32, rng), random_image(64, rng));
  CHECK(seq.length() == 81);
  CHECK(seq.tokens().shape() == num::Shape{81, 64});

  Tensor z({16, 4}), x({64, 4}), iou({1, 4}), iou_pos({1, 4}), z_pos({16, 4}), x_pos({64, 4});
  for (std::size_t i = 0; i < z.size(); ++i) z.data()[i] = 1.0f + static_cast<float>(i);
  for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = -1.0f - static_cast<float>(i);
  iou.data()[2] = 7.0f;
  const auto s = backbone::assemble_input(z, x, iou, iou_pos, z_pos, x_pos);
  CHECK(s.tokens().at(0, 2) == 7.0f);
  CHECK(s.tokens().at(1, 0) == 1.0f);
  CHECK(s.tokens().at(17, 0) == -1.0f);
  CHECK(s.template_tokens() == 16);
  CHECK(s.search_tokens() == 64);
  CHECK_THROWS_AS(backbone::assemble_input(z, x, iou, iou_pos, x_pos, z_pos), DimensionError);
  CHECK_THROWS_AS(backbone::assemble_input(z, Tensor({64, 5}), iou, iou_pos, z_pos, x_pos), DimensionError);
}

TEST_CASE("encode_until composes and resumes bit-identically") {
  num::RandomState rng(3);
  backbone::BackboneConfig cfg;
  backbone::Encoder<float> enc(cfg, rng);
  const auto seq = enc.embed(random_image(32, rng), random_image(64, rng));
  const auto full = enc.encode_until(seq, 0, 6);
  for (std::size_t k = 1; k < 6; ++k) {
    const auto split = enc.encode_until(enc.encode_until(seq, 0, k), k, 6);
    CHECK(bit_equal(split.tokens(), full.tokens()));
  }
  CHECK_THROWS_AS(enc.encode_until(seq, 3, 3), ContractError);
  CHECK_THROWS_AS(enc.encode_until(seq, 0, 7), ContractError);
}

TEST_CASE("zero output projections make blocks the identity") {
  num::RandomState rng(4);
  backbone::BackboneConfig cfg;
  backbone::Encoder<float> enc(cfg, rng);
  for (auto& b : enc.blocks) {
    zero(b.proj.weight);
    zero(b.proj.bias);
    zero(b.fc2.weight);
    zero(b.fc2.bias);
  }
  const auto seq = enc.embed(random_image(32, rng), random_image(64, rng));
  CHECK(bit_equal(enc.encode_until(seq, 0, 6).tokens(), seq.tokens()));
}

TEST_CASE("attention rows sum to one") {
  num::RandomState rng(5);
  backbone::BackboneConfig cfg;
  backbone::Encoder<float> enc(cfg, rng);
  const auto seq = enc.embed(random_image(32, rng), random_image(64, rng));
  std::vector<Tensor> probs;
  enc.encode_until(seq, 0, 2, &probs);
  CHECK(probs.size() == 2 * cfg.heads);
  for (const auto& p : probs) {
    CHECK(p.shape() == num::Shape{81, 81});
    for (std::size_t r = 0; r < 81; ++r) {
      double total = 0;
      for (std::size_t c = 0; c < 81; ++c) total += p.at(r, c);
      CHECK(std::abs(total - 1.0) <= 1e-6);
    }
  }
}

TEST_CASE("taps") {
  num::RandomState rng(6);
  backbone::BackboneConfig cfg;
  backbone::Encoder<float> enc(cfg, rng);
  const auto z = random_image(32, rng), x = random_image(64, rng);
  auto state = enc.start(z, x);
  CHECK_THROWS_AS(enc.tap(state, 2), ContractError);
  enc.advance(state, 4);
  CHECK(state.taps.size() == 2);
  CHECK_THROWS_AS(enc.tap(state, 3), ContractError);
  CHECK_THROWS_AS(enc.tap(state, 6), ContractError);
  const auto h2 = enc.tap(state, 2);
  enc.advance(state, 6);
  const auto full = enc.encode_until(enc.embed(z, x), 0, 6);
  CHECK(bit_equal(enc.tap(state, 6), full.tokens()));
  CHECK(bit_equal(h2, enc.encode_until(enc.embed(z, x), 0, 2).tokens()));
}

TEST_CASE("flop estimator matches the hand count and the kernel counter") {
  // T = 81, D = 64, r = 4: 81*64^2*(4+8) + 2*81^2*64
  CHECK(backbone::flops::block(81, 64, 4) == 4821120ull);
  num::RandomState rng(7);
  backbone::TransformerBlock<float> block(64, 4, 4, rng);
  std::vector<float> v(81 * 64);
  for (auto& x : v) x = static_cast<float>(rng.normal());
  num::NoGradGuard guard;
  num::kernels::reset_mac_count();
  block(Tensor({81, 64}, v));
  CHECK(num::kernels::mac_count() == backbone::flops::block(81, 64, 4));
}

TEST_CASE("attention is equivariant to search-token permutations") {
  num::RandomState rng(8);
  backbone::BackboneConfig cfg;
  backbone::Encoder<float> enc(cfg, rng);
  const auto zt = enc.patch_embed(random_image(32, rng));
  const auto xt = enc.patch_embed(random_image(64, rng));
  std::vector<std::size_t> perm(64);
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t i = 63; i > 0; --i) std::swap(perm[i], perm[rng.index(i + 1)]);
  auto permute = [&](const Tensor& t) {
    Tensor out(t.shape());
    for (std::size_t i = 0; i < 64; ++i)
      for (std::size_t d = 0; d < 64; ++d) out.data()[i * 64 + d] = t.at(perm[i], d);
    return out;
  };
  const auto a = enc.encode_until(backbone::assemble_input(zt, xt, enc.iou_token, enc.iou_pos, enc.template_pos, enc.search_pos), 0, 6);
  const auto b = enc.encode_until(
      backbone::assemble_input(zt, permute(xt), enc.iou_token, enc.iou_pos, enc.template_pos, permute(enc.search_pos)), 0, 6);
  const auto sa = backbone::search_slice(a.tokens(), 16, 64), sb = backbone::search_slice(b.tokens(), 16, 64);
  double worst = 0;
  for (std::size_t i = 0; i < 64; ++i)
    for (std::size_t d = 0; d < 64; ++d) worst = std::max(worst, static_cast<double>(std::abs(sb.at(i, d) - sa.at(perm[i], d))));
  CHECK(worst <= 1e-4);
}

}  // TEST_SUITE

TEST_SUITE("exits") {

TEST_CASE("comp modes") {
  num::RandomState rng(10);
  Tensor h({81, 8}), zero_prev({81, 8});
  for (auto& v : h.data()) v = static_cast<float>(rng.normal());
  CHECK(bit_equal(exits::comp(h, Tensor(), exits::ReuseMode::input_sum), h));
  CHECK(bit_equal(exits::comp(h, zero_prev, exits::ReuseMode::input_sum), h));
  CHECK(exits::comp(h, h, exits::ReuseMode::concat).shape() == num::Shape{162, 8});
  CHECK(bit_equal(exits::comp(h, h, exits::ReuseMode::none), h));
  CHECK_THROWS_AS(exits::comp(h, Tensor({80, 8}), exits::ReuseMode::input_sum), DimensionError);
  CHECK(exits::parse_reuse("gated_sum") == exits::ReuseMode::gated_sum);
  CHECK_THROWS_AS(exits::parse_reuse("sum"), ConfigError);

  exits::ModelConfig mc;
  mc.reuse = exits::ReuseMode::concat;
  CHECK_THROWS_AS(mc.validate(), ConfigError);
}

TEST_CASE("decisioner") {
  num::RandomState rng(11);
  backbone::BackboneConfig cfg;
  exits::ExitBranch<float> final_branch(3, 0, cfg, exits::ReuseMode::none, rng);
  Tensor h({81, 64});
  for (auto& v : h.data()) v = static_cast<float>(rng.normal());
  auto [out, s] = final_branch.decide(h, Tensor());
  CHECK(bit_equal(out, h));
  CHECK(s.item() >= 0.0f);
  CHECK(s.item() <= 1.0f);

  exits::ExitBranch<float> first(1, 2, cfg, exits::ReuseMode::input_sum, rng);
  CHECK(first.score(Tensor({81, 64})).item() == 0.5f);
}

TEST_CASE("score head reads only the IoU-token slot") {
  num::RandomState rng(12);
  backbone::BackboneConfig cfg;
  exits::ExitBranch<float> branch(1, 2, cfg, exits::ReuseMode::input_sum, rng);
  Tensor h({81, 64});
  for (auto& v : h.data()) v = static_cast<float>(rng.normal());
  const auto s1 = branch.score(h).item();
  auto h2 = h.clone();
  for (std::size_t i = 64; i < h2.size(); ++i) h2.data()[i] += static_cast<float>(rng.normal());
  CHECK(branch.score(h2).item() == s1);
}

TEST_CASE("corner head soft-argmax") {
  num::RandomState rng(13);
  exits::CornerHead<double> head({8, 16}, rng);
  auto one_hot = [](std::size_t cell) {
    std::vector<double> v(64, -1e4);
    v[cell] = 0.0;
    return Tensor64({64}, v);
  };
  auto full = head.from_logits(one_hot(0), one_hot(63));
  CHECK(full.corners.at(0) == doctest::Approx(0.5 / 8));
  CHECK(full.corners.at(3) == doctest::Approx(7.5 / 8));
  CHECK(full.box.at(2) == doctest::Approx(7.0 / 8));
  CHECK(full.box.at(0) == doctest::Approx(0.5));

  auto uniform = head.from_logits(Tensor64({64}), Tensor64({64}));
  CHECK(uniform.box.at(0) == doctest::Approx(0.5));
  CHECK(uniform.box.at(1) == doctest::Approx(0.5));

  // mass at grid cell (i, j) = (2, 5)
  auto cell = head.from_logits(one_hot(2 * 8 + 5), one_hot(2 * 8 + 5));
  CHECK(cell.corners.at(0) == doctest::Approx(5.5 / 8));
  CHECK(cell.corners.at(1) == doctest::Approx(2.5 / 8));
  CHECK_THROWS_AS(head(Tensor64({63, 16})), DimensionError);
}

TEST_CASE("run_exit costs, determinism and reuse neutrality") {
  num::RandomState rng(14);
  const auto z = random_image(32, rng), x = random_image(64, rng);
  exits::ModelConfig mc;
  exits::ExitModel<float> a(mc, 5), b(mc, 5);
  num::NoGradGuard guard;
  auto sa = a.start(z, x), sb = b.start(z, x);
  const auto oa = a.run_all(sa), ob = b.run_all(sb);
  REQUIRE(oa.size() == 3);
  CHECK(oa[0].flops_so_far < oa[1].flops_so_far);
  CHECK(oa[1].flops_so_far < oa[2].flops_so_far);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(oa[k].box == ob[k].box);
    CHECK(oa[k].score == ob[k].score);
    CHECK(oa[k].box.valid());
  }

  exits::ModelConfig none = mc;
  none.reuse = exits::ReuseMode::none;
  exits::ExitModel<float> c(none, 5);
  auto s1 = a.start(z, x), s2 = c.start(z, x);
  // without a previous decision the two modes agree ...
  CHECK(a.run_exit(s1, 2, nullptr).box == c.run_exit(s2, 2, nullptr).box);
  // ... and with a zero previous feature as well (input_sum zero-neutrality)
  auto s3 = a.start(z, x);
  exits::Decision<float> zero_prev;
  zero_prev.exit_index = 1;
  zero_prev.adapter_out = Tensor({81, 64});
  const auto with_zero = a.run_exit(s3, 2, &zero_prev);
  auto s4 = a.start(z, x);
  const auto without = a.run_exit(s4, 2, nullptr);
  CHECK(with_zero.box == without.box);
  CHECK(with_zero.score == without.score);
  // with real previous features they differ
  auto s5 = a.start(z, x);
  auto d1 = a.decide(s5, 1, nullptr);
  CHECK(a.run_exit(s5, 2, &d1).score != without.score);
}

TEST_CASE("every reuse mode runs and keeps shapes") {
  num::RandomState rng(15);
  const auto z = random_image(32, rng), x = random_image(64, rng);
  for (auto mode : {exits::ReuseMode::none, exits::ReuseMode::residual, exits::ReuseMode::input_sum,
                    exits::ReuseMode::gated_sum}) {
    exits::ModelConfig mc;
    mc.reuse = mode;
    exits::ExitModel<float> m(mc, 3);
    auto s = m.start(z, x);
    for (const auto& o : m.run_all(s)) {
      CHECK(o.adapter_features.shape() == num::Shape{81, 64});
      CHECK(o.box.valid());
    }
  }
  exits::ModelConfig mc;
  mc.reuse = exits::ReuseMode::concat;
  mc.adapter_depths = {2, 1, 1};
  exits::ExitModel<float> m(mc, 3);
  auto s = m.start(z, x);
  const auto outs = m.run_all(s);
  CHECK(outs[2].adapter_features.shape() == num::Shape{81, 64});
  CHECK(outs[1].flops_so_far - outs[0].flops_so_far >
        backbone::flops::block(162, 64, 4) + 2 * backbone::flops::block(81, 64, 4));
}

}  // TEST_SUITE

TEST_SUITE("distill") {

TEST_CASE("fresh imitation attention is the identity") {
  num::RandomState rng(20);
  distill::ImitationAttention<float> att(8);
  Tensor teacher({16, 8}), student({16, 8});
  for (auto& v : teacher.data()) v = static_cast<float>(rng.normal());
  for (auto& v : student.data()) v = static_cast<float>(rng.normal());
  CHECK(bit_equal(att(teacher, student), student));
  const auto maps = att.maps(teacher);
  CHECK(maps.spatial.shape() == num::Shape{16, 1});
  CHECK(maps.channel.shape() == num::Shape{8});
}

TEST_CASE("spatial zero masks a token and channel weights sum to one") {
  num::RandomState rng(21);
  distill::ImitationAttention<double> att(8);
  Tensor64 teacher({16, 8}), student({16, 8});
  for (auto& v : teacher.data()) v = rng.normal();
  for (auto& v : student.data()) v = rng.normal();
  for (auto& v : att.spatial_weight.data()) v = rng.normal();
  for (auto& v : att.channel.weight.data()) v = rng.normal();
  // make Att_s vanish at token 3: bias = -<teacher[3], w>
  double dot = 0;
  for (std::size_t d = 0; d < 8; ++d) dot += teacher.at(3, d) * att.spatial_weight.at(d);
  att.spatial_bias.data()[0] = -dot;
  const auto out = att(teacher, student);
  for (std::size_t d = 0; d < 8; ++d) CHECK(std::abs(out.at(3, d)) <= 1e-12);
  const auto maps = att.maps(teacher);
  for (std::size_t d = 0; d < 8; ++d) {
    double total = 0;
    for (std::size_t i = 0; i < 16; ++i) total += maps.channel_weights.at(i, d);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK_THROWS_AS(att(teacher, Tensor64({15, 8})), DimensionError);
}

TEST_CASE("cosine imitation examples") {
  Tensor64 f({2, 2}, {1, 2, 3, 4});
  CHECK(distill::cosine_imitation(f, f).item() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(distill::cosine_imitation(Tensor64({2}, {1, 0}), Tensor64({2}, {0, 1})).item() == doctest::Approx(1.0));
  CHECK(distill::cosine_imitation(num::scale(f, -1.0), f).item() == doctest::Approx(2.0));
  CHECK(distill::cosine_imitation(num::scale(f, 3.7), Tensor64({2, 2}, {0, 1, 5, -2})).item() ==
        doctest::Approx(distill::cosine_imitation(f, Tensor64({2, 2}, {0, 1, 5, -2})).item()).epsilon(1e-12));
}

TEST_CASE("imitation loss averages the students") {
  // cos = 0.6 and 0.8 against the unit x axis
  Tensor64 teacher({2}, {1, 0});
  Tensor64 s1({2}, {0.6, 0.8}), s2({2}, {0.8, 0.6});
  CHECK(distill::imitation_loss<double>({s1, s2}, teacher).item() == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(distill::imitation_loss<double>({teacher.clone(), teacher.clone()}, teacher).item() == doctest::Approx(0.0));
  CHECK(distill::imitation_loss<double>({}, teacher).item() == 0.0);
  CHECK(distill::parse_distill("plain") == distill::DistillMode::plain);
  CHECK_THROWS_AS(distill::parse_distill("yes"), ConfigError);
}

TEST_CASE("teacher path receives no gradient from the imitation loss") {
  num::RandomState rng(22);
  exits::ModelConfig mc;
  exits::ExitModel<float> model(mc, 9);
  distill::ImitationAttention<float> att(64);
  const auto z = random_image(32, rng), x = random_image(64, rng);
  auto state = model.start(z, x);
  const auto outs = model.run_all(state);
  const auto teacher = outs.back().search_features.detach();
  auto loss = distill::imitation_loss<float>({att(teacher, outs[0].search_features)}, teacher);
  for (auto& p : model.parameters()) p.tensor.zero_grad();
  num::backward(loss);
  auto grad_norm = [](const num::ParameterList<float>& list) {
    double total = 0;
    for (const auto& p : list)
      if (p.tensor.has_grad())
        for (auto g : p.tensor.grad()) total += static_cast<double>(g) * g;
    return total;
  };
  // layers 3-6 only feed the teacher; exit 2 and 3 branches likewise
  num::ParameterList<float> deep;
  for (const auto& p : model.backbone_parameters())
    for (int l = 2; l < 6; ++l)
      if (p.name.rfind("backbone.blocks." + std::to_string(l) + ".", 0) == 0) deep.push_back(p);
  CHECK(!deep.empty());
  CHECK(grad_norm(deep) == 0.0);
  CHECK(grad_norm(model.branch_parameters(2)) == 0.0);
  CHECK(grad_norm(model.branch_parameters(3)) == 0.0);
  CHECK(grad_norm(model.branch_parameters(1)) > 0.0);
}

}  // TEST_SUITE

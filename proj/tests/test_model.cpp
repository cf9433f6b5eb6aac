#include <doctest.h>

#include <array>
#include <cmath>

#include "ptgan/losses.hpp"
#include "ptgan/model.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace ptgan;
using ptgan::testing::random_mask;
using ptgan::testing::random_tensor;
using ptgan::testing::rel_close;

namespace {

Tensor<double> from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const int h = static_cast<int>(rows.size());
  const int w = static_cast<int>(rows.begin()->size());
  Tensor<double> t(1, h, w);
  int y = 0;
  for (const auto& r : rows) {
    int x = 0;
    for (double v : r) t.at(0, y, x++) = v;
    ++y;
  }
  return t;
}

TransferModel<double> tiny_model(std::uint64_t seed) {
  return TransferModel<double>(GeneratorSpec{16, 3, 4, 1}, DiscriminatorSpec{3, 4, 2, 34}, seed);
}

}  // namespace

TEST_CASE("adversarial loss examples") {
  const Tensor<double> ones(1, 4, 4, 1.0), halves(1, 4, 4, 0.5), zeros(1, 4, 4, 0.0);
  const auto ls = AdversarialForm::least_squares;
  CHECK(adversarial_loss(ones, AdversarialTarget::real, ls) == 0.0);
  CHECK(adversarial_loss(halves, AdversarialTarget::fake, ls) == 0.25);
  CHECK(adversarial_loss(zeros, AdversarialTarget::real, ls) == 1.0);
  CHECK(std::fabs(adversarial_loss(zeros, AdversarialTarget::real, AdversarialForm::cross_entropy) - std::log(2.0)) <
        1e-12);
  Tensor<double> bad(1, 2, 2, 0.0);
  bad.at(0, 1, 1) = std::nan("");
  CHECK_THROWS_AS(adversarial_loss(bad, AdversarialTarget::real, ls), NonFiniteScores);
}

TEST_CASE("adversarial loss matches the oracle on random grids") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto s = random_tensor<double>(rng, 1, 1 + rng.index(6), 1 + rng.index(6), -3, 3);
    for (bool real : {true, false}) {
      const auto t = real ? AdversarialTarget::real : AdversarialTarget::fake;
      const double ls = adversarial_loss(s, t, AdversarialForm::least_squares);
      const double ce = adversarial_loss(s, t, AdversarialForm::cross_entropy);
      CHECK(rel_close(ls, oracle::adversarial(s, real, true)));
      CHECK(rel_close(ce, oracle::adversarial(s, real, false)));
      CHECK(ls >= 0.0);
      CHECK(ce >= 0.0);
    }
  }
}

TEST_CASE("cycle loss examples and oracle") {
  const Tensor<double> z(3, 4, 4, 0.0), h(3, 4, 4, 0.5);
  std::vector<Tensor<double>> a{z}, ra{h}, b{h}, rb{h};
  CHECK(cycle_loss<double>(a, ra, b, rb) == 0.5);
  CHECK(cycle_loss<double>(a, a, b, b) == 0.0);

  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 1 + static_cast<int>(rng.index(3));
    const int s = 2 + static_cast<int>(rng.index(5));
    std::vector<Tensor<double>> xa, xra, xb, xrb;
    for (int i = 0; i < n; ++i) {
      xa.push_back(random_tensor<double>(rng, 3, s, s));
      xra.push_back(random_tensor<double>(rng, 3, s, s));
      xb.push_back(random_tensor<double>(rng, 3, s, s));
      xrb.push_back(random_tensor<double>(rng, 3, s, s));
    }
    double oa = 0, ob = 0;
    for (int i = 0; i < n; ++i) {
      oa += oracle::mean_abs(xa[i], xra[i]);
      ob += oracle::mean_abs(xb[i], xrb[i]);
    }
    const double expected = oa / n + ob / n;
    CHECK(rel_close(cycle_loss<double>(xa, xra, xb, xrb), expected));
    // swapping directions together with their data
    CHECK(rel_close(cycle_loss<double>(xb, xrb, xa, xra), expected));
  }
  std::vector<Tensor<double>> small{Tensor<double>(3, 2, 2)};
  CHECK_THROWS_AS(cycle_loss<double>(a, small, b, rb), ShapeMismatch);
}

TEST_CASE("identity loss: worked 2x2 example is 0.25") {
  std::vector<Tensor<double>> a{from_rows({{1, 0}, {0, 1}})};
  std::vector<Tensor<double>> ga{from_rows({{0, 0}, {0, 1}})};
  ForegroundMask<double> m(2, 2);
  m.weights << 1, 1, 0, 0;
  std::vector<ForegroundMask<double>> ma{m};
  std::vector<Tensor<double>> b{from_rows({{0.3, 0.1}, {0.2, 0.9}})};
  std::vector<ForegroundMask<double>> mb{ForegroundMask<double>(2, 2, 1.0)};
  CHECK(identity_loss<double>(a, ga, ma, b, b, mb) == 0.25);
  CHECK(identity_loss<double>(a, ga, ma, b, b, mb, IdentityNorm::unnormalized) == 1.0);
  CHECK(identity_loss<double>(a, ga, ma, b, b, mb, IdentityNorm::squared_per_pixel) == 0.25);
  CHECK(identity_loss<double>(a, a, ma, b, b, mb) == 0.0);
}

TEST_CASE("identity loss matches the oracle, ignores masked-out pixels, is symmetric") {
  Rng rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 1 + static_cast<int>(rng.index(3));
    const int s = 2 + static_cast<int>(rng.index(6));
    std::vector<Tensor<double>> a, ta, b, tb;
    std::vector<ForegroundMask<double>> ma, mb;
    for (int i = 0; i < n; ++i) {
      a.push_back(random_tensor<double>(rng, 3, s, s));
      ta.push_back(random_tensor<double>(rng, 3, s, s));
      b.push_back(random_tensor<double>(rng, 3, s, s));
      tb.push_back(random_tensor<double>(rng, 3, s, s));
      ma.push_back(random_mask<double>(rng, s, s, trial % 2 == 0));
      mb.push_back(random_mask<double>(rng, s, s, trial % 2 == 0));
    }
    double oa = 0, ob = 0;
    for (int i = 0; i < n; ++i) {
      oa += oracle::identity_term(a[i], ta[i], ma[i]);
      ob += oracle::identity_term(b[i], tb[i], mb[i]);
    }
    const double expected = oa / n + ob / n;
    const double got = identity_loss<double>(a, ta, ma, b, tb, mb);
    CHECK(rel_close(got, expected));
    CHECK(rel_close(identity_loss<double>(b, tb, mb, a, ta, ma), expected));

    // perturb the transferred images where the mask is zero
    auto ta2 = ta;
    for (int i = 0; i < n; ++i) {
      for (int y = 0; y < s; ++y)
        for (int x = 0; x < s; ++x)
          if (ma[i].weights(y, x) == 0.0)
            for (int c = 0; c < 3; ++c) ta2[i].at(c, y, x) = rng.uniform(-1, 1);
    }
    CHECK(identity_loss<double>(a, ta2, ma, b, tb, mb) == doctest::Approx(got).epsilon(1e-15));
  }
}

TEST_CASE("identity term is zero iff images agree on the mask support") {
  Rng rng(14);
  const auto src = random_tensor<double>(rng, 3, 8, 8);
  const auto mask = random_mask<double>(rng, 8, 8, true);
  auto out = src;
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x)
      if (mask.weights(y, x) == 0.0) out.at(1, y, x) += 0.7;
  CHECK(identity_term(src, out, mask, IdentityNorm::per_pixel) <= 1e-7);
  int y0 = 0, x0 = 0;
  while (mask.weights(y0, x0) == 0.0) {
    if (++x0 == 8) x0 = 0, ++y0;
  }
  out.at(0, y0, x0) += 0.01;
  CHECK(identity_term(src, out, mask, IdentityNorm::per_pixel) > 1e-7);
}

TEST_CASE("architecture: generator preserves shape and range") {
  for (int size : {16, 64}) {
    const auto g = build_generator<float>(GeneratorSpec{size, 3, 4, 2}, 1);
    Rng rng(size);
    const auto x = random_tensor<float>(rng, 3, size, size);
    const auto y = g(x);
    CHECK(y.channels == 3);
    CHECK(y.height == size);
    CHECK(y.width == size);
    CHECK(y.data.cwiseAbs().maxCoeff() <= 1.0f);
  }
  const auto g = build_generator<float>(GeneratorSpec{256, 3, 2, 1}, 2);
  const Tensor<float> big(3, 256, 256, 0.3f);
  const auto y = g(big);
  CHECK(y.height == 256);
  CHECK(y.width == 256);
  CHECK(y.data.cwiseAbs().maxCoeff() <= 1.0f);
  CHECK_THROWS_AS(g(Tensor<float>(3, 18, 18)), ShapeMismatch);
  CHECK_THROWS_AS(GeneratorSpec({256, 3, 0, 9}).validate(), InvalidSpec);
}

TEST_CASE("architecture: patch discriminator grid and receptive field") {
  const DiscriminatorSpec canonical;
  CHECK(receptive_field(discriminator_stack(canonical)) == 70);
  CHECK(discriminator_grid_size(canonical, 256) == 30);
  const auto d = build_discriminator<float>(DiscriminatorSpec{3, 4, 3, 70}, 3);
  const auto scores = d(Tensor<float>(3, 256, 256, 0.1f));
  CHECK(scores.channels == 1);
  CHECK(scores.height == 30);
  CHECK(scores.width == 30);

  // closed-form oracle: five 4x4 layers with strides 2,2,2,1,1
  int r = 1;
  for (int s : {1, 1, 2, 2, 2}) r = (r - 1) * s + 4;
  CHECK(r == 70);
  CHECK(receptive_field(discriminator_stack(DiscriminatorSpec{3, 8, 2, 34})) == 34);
  CHECK_THROWS_AS(DiscriminatorSpec({3, 64, 3, 71}).validate(), InvalidSpec);
}

TEST_CASE("architecture: initialization is N(0, 0.02) with zero biases") {
  const auto g = build_generator<float>(GeneratorSpec{64, 3, 16, 2}, 5);
  std::vector<nn::Parameter<float>*> params;
  const_cast<nn::Sequential<float>&>(g.network()).collect(params);
  double sum = 0, sq = 0;
  long n = 0;
  for (auto* p : params) {
    if (p->name != "weight") {
      CHECK(p->value.isZero());
      continue;
    }
    sum += p->value.cast<double>().sum();
    sq += p->value.cast<double>().squaredNorm();
    n += p->value.size();
  }
  const double mean = sum / n;
  const double sd = std::sqrt(sq / n - mean * mean);
  CHECK(std::fabs(mean) < 1e-3);
  CHECK(sd == doctest::Approx(0.02).epsilon(0.03));
}

TEST_CASE("loss breakdown recomposition on random tiny batches") {
  Rng rng(15);
  for (int trial = 0; trial < 20; ++trial) {
    auto model = tiny_model(trial);
    std::vector<Tensor<double>> a{random_tensor<double>(rng, 3, 16, 16)}, b{random_tensor<double>(rng, 3, 16, 16)};
    std::vector<ForegroundMask<double>> ma{random_mask<double>(rng, 16, 16)}, mb{random_mask<double>(rng, 16, 16)};
    const auto full = total_loss<double>(model, a, b, ma, mb, 10.0, 10.0);
    CHECK(recomposition_holds(full));
    CHECK(rel_close(full.l_style - (full.l_gan_AtoB + full.l_gan_BtoA), 10.0 * full.l_cyc, 1e-9));
    CHECK(rel_close(full.l_total, full.l_style + 10.0 * full.l_id, 1e-9));

    // independent recomputation from component ops
    const auto fb = model.G(a[0]);
    const auto fa = model.G_bar(b[0]);
    const double gan_ab = oracle::adversarial(model.D_B(fb), true, true);
    const double gan_ba = oracle::adversarial(model.D_A(fa), true, true);
    const double cyc = oracle::mean_abs(a[0], model.G_bar(fb)) + oracle::mean_abs(b[0], model.G(fa));
    const double id = oracle::identity_term(a[0], fb, ma[0]) + oracle::identity_term(b[0], fa, mb[0]);
    CHECK(rel_close(full.l_gan_AtoB, gan_ab));
    CHECK(rel_close(full.l_gan_BtoA, gan_ba));
    CHECK(rel_close(full.l_cyc, cyc));
    CHECK(rel_close(full.l_id, id));
    CHECK(rel_close(full.l_total, gan_ab + gan_ba + 10 * cyc + 10 * id));

    const auto style = style_loss<double>(model, a, b, 10.0);
    CHECK(rel_close(style.l_style, full.l_style));
    const auto no_id = total_loss<double>(model, a, b, ma, mb, 0.0, 10.0);
    CHECK(no_id.l_total == no_id.l_style);
    const auto no_cyc = style_loss<double>(model, a, b, 0.0);
    CHECK(rel_close(no_cyc.l_style, gan_ab + gan_ba));
  }
}

TEST_CASE("recomposition arithmetic: lambda1 10, l_id 0.25, l_style 1 gives 3.5") {
  LossBreakdown b;
  b.l_gan_AtoB = 0.25;
  b.l_gan_BtoA = 0.25;
  b.l_cyc = 0.05;
  b.lambda2 = 10;
  b.l_style = 1.0;
  b.lambda1 = 10;
  b.l_id = 0.25;
  b.l_total = 3.5;
  CHECK(recomposition_holds(b));
  b.l_total = 3.6;
  CHECK_FALSE(recomposition_holds(b));
}

TEST_CASE("analytic gradients match central differences on the reduced model") {
  auto model = TransferModel<double>(GeneratorSpec{16, 3, 8, 1}, DiscriminatorSpec{3, 8, 2, 34}, 7);
  Rng rng(3);
  std::vector<Tensor<double>> a{random_tensor<double>(rng, 3, 16, 16)}, b{random_tensor<double>(rng, 3, 16, 16)};
  std::vector<ForegroundMask<double>> ma{random_mask<double>(rng, 16, 16, true)},
      mb{random_mask<double>(rng, 16, 16, true)};
  const LossSettings settings{10.0, 10.0, AdversarialForm::least_squares, IdentityNorm::per_pixel};
  auto f = [&] { return generator_objective<double>(model, a, b, ma, mb, settings, true, false).l_total; };
  model.zero_grad();
  generator_objective<double>(model, a, b, ma, mb, settings, true, true);

  auto params = model.generator_parameters();
  const double h = 1e-6;
  int within = 0, total = 0;
  double worst = 0;
  for (int k = 0; k < 40; ++k) {
    auto* p = params[rng.index(params.size())];
    const auto idx = static_cast<Eigen::Index>(rng.index(p->value.size()));
    double& v = p->value.data()[idx];
    const double old = v;
    v = old + h;
    const double fp = f();
    v = old - h;
    const double fm = f();
    v = old;
    const double num = (fp - fm) / (2 * h);
    const double an = p->grad.data()[idx];
    const double rel = std::fabs(num - an) / std::max({std::fabs(num), std::fabs(an), 1e-8});
    within += rel < 1e-3;
    worst = std::max(worst, rel);
    ++total;
  }
  CHECK(within >= total * 95 / 100);
  CHECK(worst < 1e-2);
}

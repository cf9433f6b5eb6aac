#include <doctest.h>

#include <fstream>

#include <json.hpp>

#include "ptgan/synth.hpp"
#include "ptgan/training.hpp"
#include "support.hpp"

using namespace ptgan;
using ptgan::testing::random_mask;
using ptgan::testing::random_tensor;
using ptgan::testing::rel_close;
using ptgan::testing::TempDir;

namespace {

TrainConfig tiny_config() {
  TrainConfig c;
  c.image_size = 32;
  c.base_channels = 4;
  c.discriminator_channels = 4;
  c.num_residual_blocks = 1;
  c.epochs = 1;
  c.seed = 3;
  c.mask_source = MaskSource::exact();
  return c;
}

DomainData random_domain(Rng& rng, const std::string& tag, int n, int size) {
  DomainData d;
  d.tag = tag;
  for (int i = 0; i < n; ++i) {
    d.images.push_back(random_tensor<float>(rng, 3, size, size));
    d.masks.push_back(random_mask<float>(rng, size, size, true));
  }
  return d;
}

std::vector<float> flatten(std::vector<nn::Parameter<float>*> params) {
  std::vector<float> out;
  for (auto* p : params) out.insert(out.end(), p->value.data(), p->value.data() + p->value.size());
  return out;
}

}  // namespace

TEST_CASE("history buffer") {
  Rng rng(1);
  HistoryBuffer<float> off(0);
  for (int i = 0; i < 10; ++i) {
    const Tensor<float> img(1, 2, 2, static_cast<float>(i));
    CHECK(off.push_sample(img, rng).data == img.data);
  }
  CHECK(off.size() == 0);

  HistoryBuffer<float> pool(50);
  for (int i = 0; i < 200; ++i) pool.push_sample(Tensor<float>(1, 1, 1, static_cast<float>(i)), rng);
  CHECK(pool.size() == 50);

  auto sequence = [](std::uint64_t seed) {
    Rng r(seed);
    HistoryBuffer<float> p(5);
    std::vector<float> seen;
    for (int i = 0; i < 40; ++i) seen.push_back(p.push_sample(Tensor<float>(1, 1, 1, static_cast<float>(i)), r).data(0, 0));
    return seen;
  };
  CHECK(sequence(9) == sequence(9));
  // once full, every returned image is either the pushed one or an earlier one
  const auto s = sequence(9);
  for (size_t i = 0; i < s.size(); ++i) CHECK(s[i] <= static_cast<float>(i));
}

TEST_CASE("config validation and json round trip") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.epochs = 0;
  CHECK_THROWS_AS(c.validate(), InvalidConfig);
  c = {};
  c.lr_generator = 0;
  CHECK_THROWS_AS(c.validate(), InvalidConfig);
  c = {};
  c.image_size = 30;
  CHECK_THROWS_AS(c.validate(), InvalidConfig);
  c = {};
  c.strict_paper = true;
  CHECK_THROWS_AS(c.validate(), InvalidConfig);
  c.history_buffer_size = 0;
  CHECK_NOTHROW(c.validate());

  TrainConfig d = tiny_config();
  d.lambda1 = 3.5;
  d.identity_norm = IdentityNorm::squared_per_pixel;
  d.mask_source = MaskSource::baseline(PriorParams{0.5, 0.4, 0.3, 0.4, 0.1});
  const TrainConfig back = parse_train_config(train_config_to_json(d));
  CHECK(train_config_to_json(back) == train_config_to_json(d));
  CHECK(back.mask_source.prior.center_y == 0.4);

  CHECK_THROWS_AS(parse_train_config(R"({"epochs": 0})"), InvalidConfig);
  CHECK_THROWS_AS(parse_train_config(R"({"epochz": 3})"), InvalidConfig);
  CHECK_THROWS_AS(parse_train_config(R"({"epochs": "three"})"), InvalidConfig);
  CHECK_THROWS_AS(parse_train_config("{not json"), InvalidConfig);
  try {
    parse_train_config(R"({"lamda1": 1})");
  } catch (const InvalidConfig& e) {
    CHECK(std::string(e.what()).find("lamda1") != std::string::npos);
  }
}

TEST_CASE("linear decay factor") {
  TrainConfig c;
  c.epochs = 4;
  CHECK(lr_factor(c, 3) == 1.0);
  c.linear_decay = true;
  CHECK(lr_factor(c, 0) == 1.0);
  CHECK(lr_factor(c, 1) == 1.0);
  CHECK(lr_factor(c, 2) < 1.0);
  CHECK(lr_factor(c, 3) < lr_factor(c, 2));
  CHECK(lr_factor(c, 3) > 0.0);
}

TEST_CASE("zero learning rates leave parameters unchanged") {
  TrainConfig c = tiny_config();
  c.lr_generator = 0;
  c.lr_discriminator = 0;
  TrainerState<float> state(c);
  Rng rng(2);
  std::vector<Tensor<float>> a{random_tensor<float>(rng, 3, 32, 32)}, b{random_tensor<float>(rng, 3, 32, 32)};
  std::vector<ForegroundMask<float>> ma{random_mask<float>(rng, 32, 32)}, mb{random_mask<float>(rng, 32, 32)};
  const auto before = flatten(state.model.all_parameters());
  const auto first = train_step<float>(state, a, b, ma, mb, c);
  for (int i = 0; i < 3; ++i) {
    const auto again = train_step<float>(state, a, b, ma, mb, c);
    CHECK(again.generator.l_total == first.generator.l_total);
  }
  CHECK(flatten(state.model.all_parameters()) == before);
  CHECK(state.step == 4);
}

TEST_CASE("generator gradient is linear in lambda1") {
  Rng rng(5);
  auto model = TransferModel<double>(GeneratorSpec{16, 3, 4, 1}, DiscriminatorSpec{3, 4, 2, 34}, 1);
  std::vector<Tensor<double>> a{random_tensor<double>(rng, 3, 16, 16)}, b{random_tensor<double>(rng, 3, 16, 16)};
  std::vector<ForegroundMask<double>> ma{random_mask<double>(rng, 16, 16)}, mb{random_mask<double>(rng, 16, 16)};
  auto grads = [&](double l1, double l2) {
    model.zero_grad();
    LossSettings s{l1, l2, AdversarialForm::least_squares, IdentityNorm::per_pixel};
    generator_objective<double>(model, a, b, ma, mb, s, true, true);
    std::vector<double> g;
    for (auto* p : model.generator_parameters()) g.insert(g.end(), p->grad.data(), p->grad.data() + p->grad.size());
    return g;
  };
  const auto g10 = grads(10, 10);
  const auto g0 = grads(0, 10);
  // gradient of l_id alone
  const auto g1 = grads(1, 0);
  const auto gnone = grads(0, 0);
  std::vector<double> gid;
  for (size_t i = 0; i < g1.size(); ++i) gid.push_back(g1[i] - gnone[i]);
  double worst = 0, scale = 0;
  for (size_t i = 0; i < g10.size(); ++i) {
    worst = std::max(worst, std::fabs((g10[i] - g0[i]) - 10.0 * gid[i]));
    scale = std::max(scale, std::fabs(10.0 * gid[i]));
  }
  CHECK(scale > 0);
  CHECK(worst <= 1e-9 * scale);
}

TEST_CASE("training is deterministic and keeps the breakdown consistent") {
  Rng rng(6);
  const DomainData a = random_domain(rng, "A", 25, 32);
  const DomainData b = random_domain(rng, "B", 30, 32);
  TrainConfig c = tiny_config();
  c.epochs = 2;
  TrainOptions opt;
  const auto r1 = train_on(a, b, c, opt);
  const auto r2 = train_on(a, b, c, opt);
  REQUIRE(r1.history.size() == 50);
  REQUIRE(r2.history.size() == 50);
  for (size_t i = 0; i < 50; ++i) {
    CHECK(rel_close(r1.history[i].generator.l_total, r2.history[i].generator.l_total));
    CHECK(rel_close(r1.history[i].discriminator_a, r2.history[i].discriminator_a));
    CHECK(recomposition_holds(r1.history[i].generator, 1e-6));
  }
  CHECK(flatten(const_cast<TransferModel<float>&>(r1.state.model).all_parameters()) ==
        flatten(const_cast<TransferModel<float>&>(r2.state.model).all_parameters()));

  c.seed = 4;
  const auto r3 = train_on(a, b, c, opt);
  CHECK(r3.history[0].generator.l_total != r1.history[0].generator.l_total);
}

TEST_CASE("checkpoint round trip, sidecar and corruption") {
  TempDir dir("ckpt");
  Rng rng(7);
  const DomainData a = random_domain(rng, "A", 4, 32);
  const DomainData b = random_domain(rng, "B", 3, 32);
  TrainConfig c = tiny_config();
  c.epochs = 3;
  TrainOptions opt;
  opt.out_dir = dir.path();
  auto res = train_on(a, b, c, opt);
  CHECK(res.checkpoints.size() == 3);
  CHECK(std::filesystem::exists(dir / "epoch_002.ckpt"));
  CHECK(std::filesystem::exists(dir / "effective_config.json"));

  auto loaded = load_checkpoint(res.final_checkpoint);
  CHECK(loaded.info.epoch == 3);
  CHECK(loaded.info.step == 9);
  CHECK(loaded.info.source_tag == "A");
  CHECK(loaded.info.epoch_mean_losses.size() == 3);
  const auto probe = random_tensor<float>(rng, 3, 32, 32);
  CHECK(loaded.state.model.G(probe).data == res.state.model.G(probe).data);
  CHECK(loaded.state.model.G_bar(probe).data == res.state.model.G_bar(probe).data);
  CHECK(loaded.state.model.D_B(probe).data == res.state.model.D_B(probe).data);

  // sidecar epoch count matches the log
  std::ifstream side(sidecar_path(res.final_checkpoint));
  const auto sidecar = nlohmann::json::parse(side);
  CHECK(sidecar["epoch"].get<int>() == 3);
  std::ifstream log(dir / "train_log.jsonl");
  std::string line, last;
  int lines = 0;
  while (std::getline(log, line)) {
    last = line;
    ++lines;
  }
  CHECK(lines == 9);
  CHECK(nlohmann::json::parse(last)["epoch"].get<int>() + 1 == sidecar["epoch"].get<int>());

  // truncation
  const auto bytes = std::filesystem::file_size(res.final_checkpoint);
  for (auto cut : {bytes - 1, bytes / 2, std::uintmax_t{10}}) {
    std::filesystem::copy_file(res.final_checkpoint, dir / "cut.ckpt", std::filesystem::copy_options::overwrite_existing);
    std::filesystem::resize_file(dir / "cut.ckpt", cut);
    CHECK_THROWS_AS(load_checkpoint(dir / "cut.ckpt"), CorruptCheckpoint);
  }
  // flipped payload byte
  {
    std::filesystem::copy_file(res.final_checkpoint, dir / "flip.ckpt", std::filesystem::copy_options::overwrite_existing);
    std::fstream f(dir / "flip.ckpt", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(static_cast<std::streamoff>(bytes / 2));
    char ch = 0;
    f.read(&ch, 1);
    f.seekp(static_cast<std::streamoff>(bytes / 2));
    ch = static_cast<char>(ch ^ 0x5A);
    f.write(&ch, 1);
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "flip.ckpt"), CorruptCheckpoint);
  // unknown version
  {
    std::filesystem::copy_file(res.final_checkpoint, dir / "ver.ckpt", std::filesystem::copy_options::overwrite_existing);
    std::fstream f(dir / "ver.ckpt", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(8);
    const std::uint32_t v = 99;
    f.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "ver.ckpt"), VersionMismatch);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), CorruptCheckpoint);
}

TEST_CASE("resume continues from the checkpoint") {
  TempDir dir("resume");
  Rng rng(8);
  const DomainData a = random_domain(rng, "A", 3, 32);
  const DomainData b = random_domain(rng, "B", 3, 32);
  TrainConfig c = tiny_config();
  c.epochs = 2;
  c.history_buffer_size = 0;
  TrainOptions first;
  first.out_dir = dir / "first";
  auto r1 = train_on(a, b, c, first);
  c.epochs = 3;
  TrainOptions second;
  second.out_dir = dir / "second";
  second.resume_from = r1.final_checkpoint;
  auto r2 = train_on(a, b, c, second);
  CHECK(r2.history.size() == 3);
  CHECK(r2.state.step == 9);
  CHECK(r2.info.epoch_mean_losses.size() == 3);

  TrainOptions straight;
  auto r3 = train_on(a, b, c, straight);
  CHECK(rel_close(r3.history.back().generator.l_total, r2.history.back().generator.l_total, 1e-5));
}

TEST_CASE("train on synthetic manifests: cycle loss falls, labels unused, starvation") {
  TempDir dir("train_synth");
  SynthConfig sc;
  sc.num_identities = 4;
  sc.cameras_per_domain = 1;
  sc.images_per_identity_per_camera = 2;
  sc.image_size = 32;
  sc.seed = 2;
  auto out = synth_generate(sc);
  materialize(out.a, dir.path());
  materialize(out.b, dir.path());

  TrainConfig c = tiny_config();
  c.epochs = 5;
  c.base_channels = 8;
  TrainOptions opt;
  const auto plain = train(out.a.manifest, out.b.manifest, c, opt);
  CHECK(plain.info.epoch_mean_losses.back().l_cyc < plain.info.epoch_mean_losses.front().l_cyc);

  const auto redacted = train(out.a.manifest, redact_identities(out.b.manifest), c, opt);
  REQUIRE(redacted.history.size() == plain.history.size());
  for (size_t i = 0; i < plain.history.size(); ++i) {
    CHECK(redacted.history[i].generator.l_total == plain.history[i].generator.l_total);
  }

  DatasetManifest empty = out.b.manifest;
  empty.records.clear();
  CHECK_THROWS_AS(train(out.a.manifest, empty, c, opt), DataStarvation);
  TrainConfig bad = c;
  bad.epochs = 0;
  CHECK_THROWS_AS(train(out.a.manifest, out.b.manifest, bad, opt), InvalidConfig);
}

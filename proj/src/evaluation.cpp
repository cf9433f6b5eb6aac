#include "ptgan/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "ptgan/adam.hpp"
#include "ptgan/errors.hpp"
#include "ptgan/image_io.hpp"
#include "ptgan/random.hpp"
#include "json_fields.hpp"

namespace ptgan {

using nlohmann::json;
using detail::read_field;

// ---------------------------------------------------------------------------
// Recipe

void EmbedderRecipe::validate() const {
  if (input_size < 8 || input_size % 8 != 0) throw InvalidConfig("input_size: must be a multiple of 8 and >= 8");
  if (channels < 1) throw InvalidConfig("channels: must be >= 1");
  if (embedding_dim < 1) throw InvalidConfig("embedding_dim: must be >= 1");
  if (epochs < 1) throw InvalidConfig("epochs: must be >= 1");
  if (batch_size < 1) throw InvalidConfig("batch_size: must be >= 1");
  if (!(learning_rate > 0.0)) throw InvalidConfig("learning_rate: must be > 0");
  if (ranks.empty()) throw InvalidConfig("ranks: must be non-empty");
  for (int r : ranks) {
    if (r < 1) throw InvalidConfig("ranks: entries must be >= 1");
  }
}

namespace {

json recipe_json(const EmbedderRecipe& r) {
  return {{"schema_version", 1},         {"input_size", r.input_size},       {"channels", r.channels},
          {"embedding_dim", r.embedding_dim}, {"epochs", r.epochs},         {"batch_size", r.batch_size},
          {"learning_rate", r.learning_rate}, {"flip_augment", r.flip_augment}, {"seed", r.seed},
          {"ranks", r.ranks}};
}

EmbedderRecipe recipe_from(const json& j) {
  detail::require_known_keys(j,
                             {"schema_version", "input_size", "channels", "embedding_dim", "epochs", "batch_size",
                              "learning_rate", "flip_augment", "seed", "ranks"},
                             "");
  int version = 1;
  read_field(j, "schema_version", version);
  if (version != 1) throw InvalidConfig("schema_version: unsupported value " + std::to_string(version));
  EmbedderRecipe r;
  read_field(j, "input_size", r.input_size);
  read_field(j, "channels", r.channels);
  read_field(j, "embedding_dim", r.embedding_dim);
  read_field(j, "epochs", r.epochs);
  read_field(j, "batch_size", r.batch_size);
  read_field(j, "learning_rate", r.learning_rate);
  read_field(j, "flip_augment", r.flip_augment);
  read_field(j, "seed", r.seed);
  read_field(j, "ranks", r.ranks);
  return r;
}

bool same_recipe(const EmbedderRecipe& a, const EmbedderRecipe& b) { return recipe_json(a) == recipe_json(b); }

}  // namespace

EmbedderRecipe parse_embedder_recipe(const std::string& json_text) {
  EmbedderRecipe r = recipe_from(detail::parse_config_text(json_text));
  r.validate();
  return r;
}

EmbedderRecipe load_embedder_recipe(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidConfig("recipe: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_embedder_recipe(ss.str());
}

std::string embedder_recipe_to_json(const EmbedderRecipe& recipe) { return recipe_json(recipe).dump(2); }

// ---------------------------------------------------------------------------
// Network

Embedder::Embedder(const EmbedderRecipe& recipe, int num_classes) : recipe_(recipe), num_classes_(num_classes) {
  recipe_.validate();
  const int c = recipe_.channels;
  trunk_.add<nn::Conv2d<float>>(3, c, 3, 2, 1, nn::PadMode::zero, true);
  trunk_.add<nn::LeakyReLU<float>>(0.1);
  trunk_.add<nn::Conv2d<float>>(c, 2 * c, 3, 2, 1, nn::PadMode::zero, true);
  trunk_.add<nn::LeakyReLU<float>>(0.1);
  trunk_.add<nn::Conv2d<float>>(2 * c, 4 * c, 3, 2, 1, nn::PadMode::zero, true);
  trunk_.add<nn::LeakyReLU<float>>(0.1);
  const int side = recipe_.input_size / 8;
  trunk_.add<nn::Linear<float>>(4 * c * side * side, recipe_.embedding_dim);
  trunk_.add<nn::LeakyReLU<float>>(0.1);
  head_.add<nn::Linear<float>>(recipe_.embedding_dim, num_classes);

  Rng rng(mix_seed(recipe_.seed, 0xE3BED));
  for (auto* p : parameters()) {
    if (p->name == "weight") {
      const double fan_in = static_cast<double>(p->value.cols());
      nn::fill_normal(p->value, rng, std::sqrt(2.0 / fan_in));
    } else {
      p->value.setZero();
    }
  }
}

std::vector<nn::Parameter<float>*> Embedder::parameters() {
  std::vector<nn::Parameter<float>*> out;
  trunk_.collect(out);
  head_.collect(out);
  return out;
}

namespace {

Vector<float> normalized(const Tensor<float>& t) {
  Vector<float> v = Eigen::Map<const Vector<float>>(t.data.data(), t.size());
  const float n = v.norm();
  if (n > 1e-12f) {
    v /= n;
  } else {
    v.setZero();
    v(0) = 1.0f;
  }
  return v;
}

ImageTensor<float> mirrored(const ImageTensor<float>& x) {
  ImageTensor<float> y(x.channels, x.height, x.width);
  for (int c = 0; c < x.channels; ++c) {
    for (int i = 0; i < x.height; ++i) {
      for (int j = 0; j < x.width; ++j) y.at(c, i, j) = x.at(c, i, x.width - 1 - j);
    }
  }
  return y;
}

}  // namespace

Vector<float> Embedder::embed(const ImageTensor<float>& image) const {
  if (image.height != recipe_.input_size || image.width != recipe_.input_size) {
    throw ShapeMismatch("embedder expects " + std::to_string(recipe_.input_size) + "x" +
                        std::to_string(recipe_.input_size) + " input");
  }
  return normalized(trunk_.forward(image, nullptr));
}

double softmax_cross_entropy(const Vector<float>& logits, int label, Vector<float>* grad) {
  const double mx = logits.maxCoeff();
  Eigen::VectorXd e = (logits.cast<double>().array() - mx).exp();
  const double z = e.sum();
  if (grad) {
    *grad = (e / z).cast<float>();
    (*grad)(label) -= 1.0f;
  }
  return std::log(z) - (static_cast<double>(logits(label)) - mx);
}

Embedder train_embedder(const DatasetManifest& train, const EmbedderRecipe& recipe) {
  recipe.validate();
  const auto ids = train.identities();
  if (ids.size() < 2) {
    throw TooFewIdentities("embedder training needs at least 2 identities, '" + train.name + "' has " +
                           std::to_string(ids.size()));
  }
  std::vector<ImageTensor<float>> images;
  std::vector<int> labels;
  for (const auto& rec : train.records) {
    images.push_back(load_image(rec.image_path, recipe.input_size));
    labels.push_back(static_cast<int>(std::lower_bound(ids.begin(), ids.end(), rec.person_id) - ids.begin()));
  }

  Embedder model(recipe, static_cast<int>(ids.size()));
  auto params = model.parameters();
  AdamState<float> opt(params, 0.9, 0.999);
  std::vector<size_t> order(images.size());
  std::iota(order.begin(), order.end(), size_t{0});
  const size_t bs = static_cast<size_t>(recipe.batch_size);

  for (int epoch = 0; epoch < recipe.epochs; ++epoch) {
    Rng rng(mix_seed(recipe.seed, 0xE90C0000ULL + static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (size_t start = 0; start < order.size(); start += bs) {
      const size_t n = std::min(bs, order.size() - start);
      for (auto* p : params) p->grad.setZero();
      for (size_t k = 0; k < n; ++k) {
        const size_t i = order[start + k];
        const bool flip = recipe.flip_augment && rng.coin(0.5);
        const ImageTensor<float> x = flip ? mirrored(images[i]) : images[i];
        nn::Cache<float> trunk_cache, head_cache;
        const auto emb = model.trunk().forward(x, &trunk_cache);
        const auto logits = model.head().forward(emb, &head_cache);
        Vector<float> g;
        epoch_loss += softmax_cross_entropy(logits.data.col(0), labels[i], &g);
        Tensor<float> dlogits(static_cast<int>(g.size()), 1, 1);
        dlogits.data.col(0) = g / static_cast<float>(n);
        model.trunk().backward(model.head().backward(dlogits, head_cache), trunk_cache);
      }
      adam_step(params, opt, recipe.learning_rate);
    }
    model.epoch_losses.push_back(epoch_loss / static_cast<double>(images.size()));
  }

  size_t correct = 0;
  for (size_t i = 0; i < images.size(); ++i) {
    const auto logits = model.head().forward(model.trunk().forward(images[i], nullptr), nullptr);
    Eigen::Index arg;
    logits.data.col(0).maxCoeff(&arg);
    if (static_cast<int>(arg) == labels[i]) ++correct;
  }
  model.train_accuracy = static_cast<double>(correct) / static_cast<double>(images.size());
  return model;
}

Matrix<float> extract_features(const Embedder& embedder, const DatasetManifest& manifest) {
  Matrix<float> out(static_cast<Eigen::Index>(manifest.records.size()), embedder.dim());
  for (size_t i = 0; i < manifest.records.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) =
        embedder.embed(load_image(manifest.records[i].image_path, embedder.recipe().input_size)).transpose();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Metrics

std::vector<RetrievalMeta> retrieval_meta(const DatasetManifest& manifest) {
  std::vector<RetrievalMeta> out;
  out.reserve(manifest.records.size());
  for (const auto& r : manifest.records) out.push_back({r.person_id, r.camera_id});
  return out;
}

namespace {

void check_inputs(const Matrix<float>& qf, const std::vector<RetrievalMeta>& qm, const Matrix<float>& gf,
                  const std::vector<RetrievalMeta>& gm) {
  if (gf.rows() == 0 || gm.empty()) throw EmptyGallery("gallery has no entries");
  if (static_cast<size_t>(qf.rows()) != qm.size()) {
    throw DimensionMismatch("query features have " + std::to_string(qf.rows()) + " rows but " +
                            std::to_string(qm.size()) + " metadata entries");
  }
  if (static_cast<size_t>(gf.rows()) != gm.size()) {
    throw DimensionMismatch("gallery features have " + std::to_string(gf.rows()) + " rows but " +
                            std::to_string(gm.size()) + " metadata entries");
  }
  if (qf.rows() > 0 && qf.cols() != gf.cols()) {
    throw DimensionMismatch("query dimension " + std::to_string(qf.cols()) + " vs gallery dimension " +
                            std::to_string(gf.cols()));
  }
}

}  // namespace

std::vector<QueryOutcome> rank_queries(const Matrix<float>& query_feats, const std::vector<RetrievalMeta>& query_meta,
                                       const Matrix<float>& gallery_feats,
                                       const std::vector<RetrievalMeta>& gallery_meta) {
  check_inputs(query_feats, query_meta, gallery_feats, gallery_meta);
  const Eigen::MatrixXd g = gallery_feats.cast<double>();
  std::vector<QueryOutcome> out(query_meta.size());
  std::vector<std::pair<double, size_t>> ranked;
  for (size_t qi = 0; qi < query_meta.size(); ++qi) {
    const Eigen::RowVectorXd q = query_feats.row(static_cast<Eigen::Index>(qi)).cast<double>();
    const auto& meta = query_meta[qi];
    ranked.clear();
    for (size_t gi = 0; gi < gallery_meta.size(); ++gi) {
      const auto& gm = gallery_meta[gi];
      if (gm.person_id == meta.person_id && gm.camera_id == meta.camera_id) continue;
      ranked.emplace_back((g.row(static_cast<Eigen::Index>(gi)) - q).squaredNorm(), gi);
    }
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    QueryOutcome& o = out[qi];
    int hits = 0;
    double precision_sum = 0.0;
    for (size_t r = 0; r < ranked.size(); ++r) {
      if (gallery_meta[ranked[r].second].person_id != meta.person_id) continue;
      ++hits;
      precision_sum += static_cast<double>(hits) / static_cast<double>(r + 1);
      if (o.first_correct_rank == 0) o.first_correct_rank = static_cast<int>(r + 1);
    }
    o.answerable = hits > 0;
    o.average_precision = hits > 0 ? precision_sum / hits : 0.0;
  }
  return out;
}

namespace {

CmcResult cmc_from(const std::vector<QueryOutcome>& outcomes, const std::vector<int>& ranks) {
  CmcResult res;
  for (const auto& o : outcomes) (o.answerable ? res.answerable : res.dropped) += 1;
  for (int k : ranks) {
    size_t within = 0;
    for (const auto& o : outcomes) {
      if (o.answerable && o.first_correct_rank <= k) ++within;
    }
    res.accuracy[k] = res.answerable ? static_cast<double>(within) / static_cast<double>(res.answerable) : 0.0;
  }
  return res;
}

double map_from(const std::vector<QueryOutcome>& outcomes) {
  double sum = 0.0;
  size_t n = 0;
  for (const auto& o : outcomes) {
    if (!o.answerable) continue;
    sum += o.average_precision;
    ++n;
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

}  // namespace

CmcResult cmc(const Matrix<float>& query_feats, const std::vector<RetrievalMeta>& query_meta,
              const Matrix<float>& gallery_feats, const std::vector<RetrievalMeta>& gallery_meta,
              const std::vector<int>& ranks) {
  return cmc_from(rank_queries(query_feats, query_meta, gallery_feats, gallery_meta), ranks);
}

double mean_ap(const Matrix<float>& query_feats, const std::vector<RetrievalMeta>& query_meta,
               const Matrix<float>& gallery_feats, const std::vector<RetrievalMeta>& gallery_meta) {
  return map_from(rank_queries(query_feats, query_meta, gallery_feats, gallery_meta));
}

// ---------------------------------------------------------------------------
// Reports

double EvalReport::rank(int k) const {
  auto it = cmc.find(k);
  if (it == cmc.end()) throw InvalidConfig("rank " + std::to_string(k) + " was not evaluated");
  return it->second;
}

bool EvalReport::operator==(const EvalReport& o) const {
  if (per_query.size() != o.per_query.size()) return false;
  for (size_t i = 0; i < per_query.size(); ++i) {
    const auto& a = per_query[i];
    const auto& b = o.per_query[i];
    if (a.answerable != b.answerable || a.first_correct_rank != b.first_correct_rank ||
        a.average_precision != b.average_precision) {
      return false;
    }
  }
  return cmc == o.cmc && map_score == o.map_score && num_queries == o.num_queries && num_gallery == o.num_gallery &&
         num_dropped == o.num_dropped && train_name == o.train_name && eval_name == o.eval_name &&
         same_recipe(recipe, o.recipe) && train_accuracy == o.train_accuracy;
}

EvalReport evaluate(const Embedder& embedder, const DatasetManifest& eval) {
  const DatasetManifest queries = filter_role(eval, SplitRole::query);
  const DatasetManifest gallery = filter_role(eval, SplitRole::gallery);
  if (gallery.records.empty()) throw EmptyGallery("'" + eval.name + "' has no gallery records");
  const auto qf = extract_features(embedder, queries);
  const auto gf = extract_features(embedder, gallery);
  EvalReport report;
  report.per_query = rank_queries(qf, retrieval_meta(queries), gf, retrieval_meta(gallery));
  const CmcResult c = cmc_from(report.per_query, embedder.recipe().ranks);
  report.cmc = c.accuracy;
  report.map_score = map_from(report.per_query);
  report.num_queries = queries.records.size();
  report.num_gallery = gallery.records.size();
  report.num_dropped = c.dropped;
  report.eval_name = eval.name;
  report.recipe = embedder.recipe();
  report.train_accuracy = embedder.train_accuracy;
  return report;
}

EvalReport cross_domain_experiment(const DatasetManifest& train, const DatasetManifest& eval,
                                   const EmbedderRecipe& recipe) {
  const Embedder embedder = train_embedder(train, recipe);
  EvalReport report = evaluate(embedder, eval);
  report.train_name = train.name;
  return report;
}

std::string report_to_json(const EvalReport& r) {
  json cmc_json = json::object();
  for (const auto& [k, v] : r.cmc) cmc_json[std::to_string(k)] = v;
  json per_query = json::array();
  for (const auto& q : r.per_query) {
    per_query.push_back({{"answerable", q.answerable},
                         {"first_correct_rank", q.first_correct_rank},
                         {"average_precision", q.average_precision}});
  }
  json j = {{"format", "ptgan-eval-report"},
            {"version", 1},
            {"train", r.train_name},
            {"eval", r.eval_name},
            {"cmc", cmc_json},
            {"map", r.map_score},
            {"num_queries", r.num_queries},
            {"num_gallery", r.num_gallery},
            {"num_dropped", r.num_dropped},
            {"train_accuracy", r.train_accuracy},
            {"recipe", recipe_json(r.recipe)},
            {"per_query", per_query}};
  return j.dump(2);
}

EvalReport report_from_json(const std::string& text) {
  EvalReport r;
  try {
    const json j = json::parse(text);
    if (j.at("format").get<std::string>() != "ptgan-eval-report") throw InvalidConfig("report: wrong format tag");
    r.train_name = j.at("train").get<std::string>();
    r.eval_name = j.at("eval").get<std::string>();
    for (const auto& [k, v] : j.at("cmc").items()) r.cmc[std::stoi(k)] = v.get<double>();
    r.map_score = j.at("map").get<double>();
    r.num_queries = j.at("num_queries").get<size_t>();
    r.num_gallery = j.at("num_gallery").get<size_t>();
    r.num_dropped = j.at("num_dropped").get<size_t>();
    r.train_accuracy = j.at("train_accuracy").get<double>();
    r.recipe = recipe_from(j.at("recipe"));
    for (const auto& q : j.at("per_query")) {
      r.per_query.push_back({q.at("first_correct_rank").get<int>(), q.at("average_precision").get<double>(),
                             q.at("answerable").get<bool>()});
    }
  } catch (const json::exception& e) {
    throw InvalidConfig(std::string("report: ") + e.what());
  }
  return r;
}

void save_report(const EvalReport& report, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("IoError", "cannot write " + path.string());
  out << report_to_json(report) << '\n';
}

EvalReport load_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidConfig("report: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return report_from_json(ss.str());
}

void save_per_query_csv(const EvalReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("IoError", "cannot write " + path.string());
  out << "query_index,answerable,first_correct_rank,average_precision\n";
  out.precision(17);
  for (size_t i = 0; i < report.per_query.size(); ++i) {
    const auto& q = report.per_query[i];
    out << i << ',' << (q.answerable ? 1 : 0) << ',' << q.first_correct_rank << ',' << q.average_precision << '\n';
  }
}

}  // namespace ptgan

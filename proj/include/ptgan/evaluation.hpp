#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ptgan/data_model.hpp"
#include "ptgan/nn/sequential.hpp"
#include "ptgan/tensor.hpp"

namespace ptgan {

/// Pinned training recipe for the baseline embedder.
struct EmbedderRecipe {
  int input_size = 32;
  int channels = 16;  // widths are c, 2c, 4c over three stride-2 convs
  int embedding_dim = 64;
  int epochs = 30;
  int batch_size = 16;
  double learning_rate = 1e-3;
  bool flip_augment = true;
  std::uint64_t seed = 0;
  std::vector<int> ranks{1, 5, 10, 20};

  void validate() const;
};

EmbedderRecipe parse_embedder_recipe(const std::string& json_text);
EmbedderRecipe load_embedder_recipe(const std::filesystem::path& path);
std::string embedder_recipe_to_json(const EmbedderRecipe& recipe);

/// Small identity-classification CNN; the embedding is the L2-normalized
/// penultimate activation.
class Embedder {
 public:
  Embedder(const EmbedderRecipe& recipe, int num_classes);

  /// Unit-norm embedding of an image already at recipe().input_size.
  Vector<float> embed(const ImageTensor<float>& image) const;
  int dim() const { return recipe_.embedding_dim; }
  const EmbedderRecipe& recipe() const { return recipe_; }
  int num_classes() const { return num_classes_; }

  nn::Sequential<float>& trunk() { return trunk_; }
  nn::Sequential<float>& head() { return head_; }
  std::vector<nn::Parameter<float>*> parameters();

  /// Fraction of training images classified correctly after the last epoch.
  double train_accuracy = 0.0;
  std::vector<double> epoch_losses;

 private:
  EmbedderRecipe recipe_;
  int num_classes_;
  nn::Sequential<float> trunk_;
  nn::Sequential<float> head_;
};

/// Softmax cross-entropy of `logits` against `label`; writes dL/dlogits.
double softmax_cross_entropy(const Vector<float>& logits, int label, Vector<float>* grad);

/// Trains over every record of `train`, labels taken from person_id.
/// Throws TooFewIdentities below two identities.
Embedder train_embedder(const DatasetManifest& train, const EmbedderRecipe& recipe);

/// n x d, one unit-norm row per record, in manifest order.
Matrix<float> extract_features(const Embedder& embedder, const DatasetManifest& manifest);

// ---------------------------------------------------------------------------
// Metrics

struct RetrievalMeta {
  std::string person_id;
  int camera_id = 0;
};

std::vector<RetrievalMeta> retrieval_meta(const DatasetManifest& manifest);

struct QueryOutcome {
  /// 1-based rank of the first correct match among valid gallery items; 0 if unanswerable.
  int first_correct_rank = 0;
  double average_precision = 0.0;
  bool answerable = false;
};

/// Per-query ranking under the cross-camera protocol: same person and same
/// camera gallery entries are excluded; ties keep gallery order.
std::vector<QueryOutcome> rank_queries(const Matrix<float>& query_feats, const std::vector<RetrievalMeta>& query_meta,
                                       const Matrix<float>& gallery_feats,
                                       const std::vector<RetrievalMeta>& gallery_meta);

struct CmcResult {
  std::map<int, double> accuracy;
  size_t answerable = 0;
  size_t dropped = 0;
};

CmcResult cmc(const Matrix<float>& query_feats, const std::vector<RetrievalMeta>& query_meta,
              const Matrix<float>& gallery_feats, const std::vector<RetrievalMeta>& gallery_meta,
              const std::vector<int>& ranks);

double mean_ap(const Matrix<float>& query_feats, const std::vector<RetrievalMeta>& query_meta,
               const Matrix<float>& gallery_feats, const std::vector<RetrievalMeta>& gallery_meta);

// ---------------------------------------------------------------------------
// Reports

struct EvalReport {
  std::map<int, double> cmc;
  double map_score = 0.0;
  size_t num_queries = 0;
  size_t num_gallery = 0;
  size_t num_dropped = 0;
  std::string train_name;
  std::string eval_name;
  EmbedderRecipe recipe;
  double train_accuracy = 0.0;
  std::vector<QueryOutcome> per_query;

  double rank(int k) const;
  bool operator==(const EvalReport& other) const;
};

/// Evaluates query-role records against gallery-role records of `eval`.
EvalReport evaluate(const Embedder& embedder, const DatasetManifest& eval);

/// Trains on `train`, evaluates on `eval`.
EvalReport cross_domain_experiment(const DatasetManifest& train, const DatasetManifest& eval,
                                   const EmbedderRecipe& recipe);

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& text);
void save_report(const EvalReport& report, const std::filesystem::path& path);
EvalReport load_report(const std::filesystem::path& path);
/// query_index,answerable,first_correct_rank,average_precision
void save_per_query_csv(const EvalReport& report, const std::filesystem::path& path);

}  // namespace ptgan

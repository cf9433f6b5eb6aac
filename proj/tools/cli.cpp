#include "cli.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ptgan/data_model.hpp"
#include "ptgan/errors.hpp"
#include "ptgan/image_io.hpp"
#include "ptgan/synth.hpp"
#include "ptgan/training.hpp"
#include "ptgan/transfer.hpp"

namespace ptgan::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Workspace {
  fs::path root;

  fs::path operator()(const std::string& p) const {
    const fs::path path(p);
    return path.is_absolute() ? path : (root / path).lexically_normal();
  }
};

Workspace resolve_workspace(const std::string& flag) {
  if (!flag.empty()) return {fs::absolute(flag)};
  if (const char* env = std::getenv("PTGAN_WORKSPACE"); env && *env) return {fs::absolute(env)};
  return {fs::current_path()};
}

std::string read_text(const fs::path& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw InvalidConfig(std::string(what) + ": cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("IoError", "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::string hex(std::uint64_t v) {
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << v;
  return ss.str();
}

// Checksum over a manifest's image files, in record order.
std::uint64_t manifest_checksum(const DatasetManifest& m) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& r : m.records) {
    h ^= file_checksum(r.image_path);
    h *= 1099511628211ULL;
  }
  return h;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string config;
  std::string out = "synth";
  std::optional<std::uint64_t> seed;
};

int cmd_synth(const SynthArgs& a, const Workspace& ws, std::ostream& out) {
  SynthConfig config = a.config.empty() ? SynthConfig{} : parse_synth_config(read_text(ws(a.config), "synth config"));
  if (a.seed) config.seed = *a.seed;
  config.validate();
  const fs::path root = ws(a.out);
  SynthOutput data = synth_generate(config);
  materialize(data.a, root);
  materialize(data.b, root);
  fs::create_directories(root);
  std::ofstream(root / "synth_config.json") << synth_config_to_json(config) << '\n';
  for (const SynthDomain* d : {&data.a, &data.b}) {
    out << d->manifest.domain_tag << ": " << d->manifest.records.size() << " images, "
        << d->manifest.identities().size() << " identities, checksum " << hex(manifest_checksum(d->manifest)) << "\n"
        << "  manifest " << (root / d->manifest.domain_tag / "manifest.jsonl").string() << "\n";
  }
  return kOk;
}

// ---------------------------------------------------------------------------

struct SplitArgs {
  std::string manifest;
  std::string ratio = "1:3";
  double query_fraction = 0.5;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_split(const SplitArgs& a, const Workspace& ws, std::ostream& out) {
  const DatasetManifest m = load_manifest(ws(a.manifest));
  const DatasetManifest split = apply_split(m, parse_ratio(a.ratio), a.query_fraction, a.seed);
  const fs::path dir = ws(a.out);
  fs::create_directories(dir);
  DatasetManifest train = filter_role(split, SplitRole::train);
  train.name = m.name + "_train";
  DatasetManifest test = split;
  test.name = m.name + "_test";
  test.records.clear();
  for (const auto& r : split.records) {
    if (r.split_role != SplitRole::train) test.records.push_back(r);
  }
  save_manifest(split, dir / "split.jsonl");
  save_manifest(train, dir / "train.jsonl");
  save_manifest(test, dir / "test.jsonl");
  out << "train: " << train.identities().size() << " identities, " << train.records.size() << " images\n"
      << "test:  " << test.identities().size() << " identities, " << split.count(SplitRole::query) << " query, "
      << split.count(SplitRole::gallery) << " gallery\n";
  return kOk;
}

struct SelectArgs {
  std::string manifest;
  std::optional<int> camera;
  std::string role;
  bool redact = false;
  std::string out;
};

int cmd_select(const SelectArgs& a, const Workspace& ws, std::ostream& out) {
  DatasetManifest m = load_manifest(ws(a.manifest));
  if (!a.role.empty()) m = filter_role(m, split_role_from_string(a.role));
  if (a.camera) m = filter_camera(m, *a.camera);
  if (a.redact) m = redact_identities(m);
  if (m.records.empty()) throw EmptyDataset("selection from " + a.manifest + " is empty");
  save_manifest(m, ws(a.out));
  out << m.records.size() << " records -> " << ws(a.out).string() << "\n";
  return kOk;
}

struct IngestArgs {
  std::string root;
  std::string convention = "market_like";
  std::string tag;
  std::string out;
};

int cmd_ingest(const IngestArgs& a, const Workspace& ws, std::ostream& out) {
  const DatasetManifest m = ingest_directory(ws(a.root), convention_from_string(a.convention), a.tag);
  save_manifest(m, ws(a.out));
  out << m.records.size() << " records, " << m.identities().size() << " identities\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string a;
  std::string b;
  std::string config;
  std::string out;
  std::string resume;
  std::optional<int> epochs;
  std::optional<std::uint64_t> seed;
  std::optional<double> lambda1;
  std::optional<int> history;
  bool strict_paper = false;
};

int cmd_train(const TrainArgs& a, const Workspace& ws, std::ostream& out) {
  TrainConfig config = a.config.empty() ? TrainConfig{} : parse_train_config(read_text(ws(a.config), "train config"));
  if (a.epochs) config.epochs = *a.epochs;
  if (a.seed) config.seed = *a.seed;
  if (a.lambda1) config.lambda1 = *a.lambda1;
  if (a.history) config.history_buffer_size = *a.history;
  if (a.strict_paper) config.strict_paper = true;
  config.validate();

  const DatasetManifest ma = load_manifest(ws(a.a));
  const DatasetManifest mb = load_manifest(ws(a.b));
  TrainOptions options;
  options.out_dir = ws(a.out);
  if (!a.resume.empty()) options.resume_from = ws(a.resume);
  const TrainResult result = train(ma, mb, config, options);
  for (size_t e = 0; e < result.info.epoch_mean_losses.size(); ++e) {
    const auto& l = result.info.epoch_mean_losses[e];
    out << "epoch " << (e + 1) << ": total " << l.l_total << " gan " << l.l_gan_AtoB << "/" << l.l_gan_BtoA << " cyc "
        << l.l_cyc << " id " << l.l_id << "\n";
  }
  out << "steps " << result.state.step << ", checkpoint " << result.final_checkpoint.string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct TransferArgs {
  std::string src;
  std::vector<std::string> checkpoints;
  std::string mode = "single";
  std::string direction = "AtoB";
  std::string out;
  bool restore_size = false;
};

int cmd_transfer(const TransferArgs& a, const Workspace& ws, std::ostream& out) {
  const DatasetManifest src = load_manifest(ws(a.src));
  const fs::path dir = ws(a.out);
  TransferOptions opts;
  opts.restore_source_size = a.restore_size;
  json provenance{{"src", ws(a.src).string()}, {"mode", a.mode}, {"direction", a.direction},
                  {"restore_source_size", a.restore_size}};

  DatasetManifest result;
  if (a.mode == "single") {
    if (a.checkpoints.size() != 1) throw InvalidConfig("checkpoint: single mode takes exactly one checkpoint");
    const fs::path ckpt = ws(a.checkpoints[0]);
    if (!fs::exists(ckpt)) throw CorruptCheckpoint("checkpoint not found: " + ckpt.string());
    provenance["checkpoints"] = {ckpt.string()};
    result = transfer_dataset(src, ckpt, direction_from_string(a.direction), dir, opts);
  } else if (a.mode == "per_camera") {
    if (direction_from_string(a.direction) != Direction::AtoB) {
      throw InvalidConfig("direction: per_camera mode transfers A to B only");
    }
    std::map<int, fs::path> by_camera;
    for (const auto& spec : a.checkpoints) {
      const auto eq = spec.find('=');
      if (eq == std::string::npos) throw InvalidConfig("checkpoint: per_camera entries are CAMERA=PATH, got '" + spec + "'");
      int cam = 0;
      try {
        cam = std::stoi(spec.substr(0, eq));
      } catch (const std::exception&) {
        throw InvalidConfig("checkpoint: bad camera in '" + spec + "'");
      }
      const fs::path ckpt = ws(spec.substr(eq + 1));
      if (!fs::exists(ckpt)) throw CorruptCheckpoint("checkpoint not found: " + ckpt.string());
      by_camera[cam] = ckpt;
      provenance["checkpoints"][std::to_string(cam)] = ckpt.string();
    }
    result = per_camera_transfer(src, by_camera, dir, opts);
  } else {
    throw InvalidConfig("mode: expected single or per_camera, got '" + a.mode + "'");
  }
  save_manifest(result, dir / "manifest.jsonl");
  write_json(dir / "transfer_config.json", provenance);
  out << result.records.size() << " transferred images -> " << (dir / "manifest.jsonl").string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string train;
  std::string eval;
  std::string recipe;
  std::string report;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
};

int cmd_eval(const EvalArgs& a, const Workspace& ws, std::ostream& out) {
  EmbedderRecipe recipe = a.recipe.empty() ? EmbedderRecipe{} : parse_embedder_recipe(read_text(ws(a.recipe), "recipe"));
  if (a.seed) recipe.seed = *a.seed;
  if (a.epochs) recipe.epochs = *a.epochs;
  recipe.validate();
  const DatasetManifest train = load_manifest(ws(a.train));
  const DatasetManifest eval = load_manifest(ws(a.eval));
  const EvalReport report = cross_domain_experiment(train, eval, recipe);
  const fs::path path = ws(a.report);
  save_report(report, path);
  fs::path csv = path;
  csv.replace_extension(".per_query.csv");
  save_per_query_csv(report, csv);
  out << "train " << report.train_name << " (accuracy " << report.train_accuracy << "), eval " << report.eval_name
      << ": " << report.num_queries << " queries, " << report.num_gallery << " gallery\n";
  for (const auto& [k, v] : report.cmc) out << "  rank-" << k << " " << v << "\n";
  out << "  mAP " << report.map_score << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct ReportArgs {
  std::vector<std::string> reports;
  std::string csv;
};

int cmd_report(const ReportArgs& a, const Workspace& ws, std::ostream& out) {
  std::vector<ReportRow> rows;
  for (const auto& r : a.reports) {
    const fs::path p = ws(r);
    if (!fs::exists(p)) throw InvalidConfig("report: file not found: " + p.string());
    rows.push_back(row_from_report(p.stem().string(), load_report(p)));
  }
  out << format_table(rows);
  if (!a.csv.empty()) write_rows_csv(rows, ws(a.csv));
  return kOk;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else {
      fields.back() += c;
    }
  }
  return fields;
}

}  // namespace

ReportRow row_from_report(const std::string& name, const EvalReport& report) {
  auto at = [&](int k) {
    auto it = report.cmc.find(k);
    return it == report.cmc.end() ? std::nan("") : it->second;
  };
  return {name, report.train_name, report.eval_name, at(1), at(10), report.map_score};
}

std::string format_table(const std::vector<ReportRow>& rows) {
  size_t w_name = 6, w_train = 5, w_eval = 4;
  for (const auto& r : rows) {
    w_name = std::max(w_name, r.name.size());
    w_train = std::max(w_train, r.train.size());
    w_eval = std::max(w_eval, r.eval.size());
  }
  std::ostringstream ss;
  auto pct = [](double v) {
    if (std::isnan(v)) return std::string("     -");
    char buf[16];
    std::snprintf(buf, sizeof buf, "%6.1f", 100.0 * v);
    return std::string(buf);
  };
  ss << std::left << std::setw(static_cast<int>(w_name)) << "report" << "  " << std::setw(static_cast<int>(w_train))
     << "train" << "  " << std::setw(static_cast<int>(w_eval)) << "eval" << "  Rank-1  Rank-10     mAP\n";
  for (const auto& r : rows) {
    ss << std::left << std::setw(static_cast<int>(w_name)) << r.name << "  " << std::setw(static_cast<int>(w_train))
       << r.train << "  " << std::setw(static_cast<int>(w_eval)) << r.eval << "  " << pct(r.rank1) << "   "
       << pct(r.rank10) << "  " << pct(r.map) << "\n";
  }
  return ss.str();
}

void write_rows_csv(const std::vector<ReportRow>& rows, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("IoError", "cannot write " + path.string());
  out << "report,train,eval,rank1,rank10,map\n";
  char buf[32];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  for (const auto& r : rows) {
    out << csv_field(r.name) << ',' << csv_field(r.train) << ',' << csv_field(r.eval) << ',' << num(r.rank1) << ','
        << num(r.rank10) << ',' << num(r.map) << '\n';
  }
}

std::vector<ReportRow> read_rows_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidConfig("csv: cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "report,train,eval,rank1,rank10,map") throw InvalidConfig("csv: unexpected header in " + path.string());
  std::vector<ReportRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 6) throw InvalidConfig("csv: expected 6 fields, got " + std::to_string(f.size()));
    rows.push_back({f[0], f[1], f[2], std::strtod(f[3].c_str(), nullptr), std::strtod(f[4].c_str(), nullptr),
                    std::strtod(f[5].c_str(), nullptr)});
  }
  return rows;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Person transfer GAN experiments", "ptgan"};
  app.require_subcommand(1);
  std::string workspace;
  app.add_option("--workspace", workspace, "Root for relative paths (default: $PTGAN_WORKSPACE or cwd)");

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Render the two synthetic domains");
  c_synth->add_option("--config", synth.config, "SynthConfig JSON");
  c_synth->add_option("--out", synth.out, "Output root");
  c_synth->add_option("--seed", synth.seed, "Override config seed");

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "Build a manifest from an image directory");
  c_ingest->add_option("--root", ingest.root)->required();
  c_ingest->add_option("--convention", ingest.convention)->check(CLI::IsMember({"market_like", "generic"}));
  c_ingest->add_option("--tag", ingest.tag)->required();
  c_ingest->add_option("--out", ingest.out)->required();

  SplitArgs split;
  auto* c_split = app.add_subcommand("split", "Identity-disjoint train/test split with query/gallery roles");
  c_split->add_option("--manifest", split.manifest)->required();
  c_split->add_option("--ratio", split.ratio, "train:test identity ratio or train fraction");
  c_split->add_option("--query-fraction", split.query_fraction);
  c_split->add_option("--seed", split.seed);
  c_split->add_option("--out", split.out, "Directory for train/test/split manifests")->required();

  SelectArgs select;
  auto* c_select = app.add_subcommand("select", "Filter a manifest by role or camera, optionally dropping labels");
  c_select->add_option("--manifest", select.manifest)->required();
  c_select->add_option("--camera", select.camera);
  c_select->add_option("--role", select.role)->check(CLI::IsMember({"train", "query", "gallery", "unassigned"}));
  c_select->add_flag("--redact", select.redact, "Replace identity labels");
  c_select->add_option("--out", select.out)->required();

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Train the transfer model between two domains");
  c_train->add_option("--a", tr.a, "Source manifest")->required();
  c_train->add_option("--b", tr.b, "Target manifest (labels ignored)")->required();
  c_train->add_option("--config", tr.config, "TrainConfig JSON");
  c_train->add_option("--out", tr.out, "Checkpoint and log directory")->required();
  c_train->add_option("--resume", tr.resume, "Continue from a checkpoint");
  c_train->add_option("--epochs", tr.epochs);
  c_train->add_option("--seed", tr.seed);
  c_train->add_option("--lambda1", tr.lambda1);
  c_train->add_option("--history", tr.history, "Replay pool capacity");
  c_train->add_flag("--strict-paper", tr.strict_paper);

  TransferArgs tf;
  auto* c_transfer = app.add_subcommand("transfer", "Re-render a manifest through trained generators");
  c_transfer->add_option("--src", tf.src)->required();
  c_transfer->add_option("--checkpoint", tf.checkpoints, "PATH, or CAMERA=PATH in per_camera mode")->required();
  c_transfer->add_option("--mode", tf.mode)->check(CLI::IsMember({"single", "per_camera"}));
  c_transfer->add_option("--direction", tf.direction)->check(CLI::IsMember({"AtoB", "BtoA"}));
  c_transfer->add_option("--out", tf.out)->required();
  c_transfer->add_flag("--restore-size", tf.restore_size);

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "Train the embedder and evaluate retrieval");
  c_eval->add_option("--train", ev.train)->required();
  c_eval->add_option("--eval", ev.eval, "Manifest with query and gallery roles")->required();
  c_eval->add_option("--recipe", ev.recipe, "EmbedderRecipe JSON");
  c_eval->add_option("--report", ev.report, "Output report JSON")->required();
  c_eval->add_option("--seed", ev.seed);
  c_eval->add_option("--epochs", ev.epochs);

  ReportArgs rp;
  auto* c_report = app.add_subcommand("report", "Compare evaluation reports");
  c_report->add_option("reports", rp.reports)->required();
  c_report->add_option("--csv", rp.csv);

  std::vector<std::string> argv_store{"ptgan"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : argv_store) argv.push_back(s.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kValidation;
  }

  try {
    const Workspace ws = resolve_workspace(workspace);
    if (c_synth->parsed()) return cmd_synth(synth, ws, out);
    if (c_ingest->parsed()) return cmd_ingest(ingest, ws, out);
    if (c_split->parsed()) return cmd_split(split, ws, out);
    if (c_select->parsed()) return cmd_select(select, ws, out);
    if (c_train->parsed()) return cmd_train(tr, ws, out);
    if (c_transfer->parsed()) return cmd_transfer(tf, ws, out);
    if (c_eval->parsed()) return cmd_eval(ev, ws, out);
    if (c_report->parsed()) return cmd_report(rp, ws, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kValidation;
}

}  // namespace ptgan::cli

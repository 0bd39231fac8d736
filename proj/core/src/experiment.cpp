#include "rkgcn/experiment.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <spdlog/spdlog.h>

#include "rkgcn/metrics.hpp"
#include "rkgcn/numeric.hpp"
#include "rkgcn/trainer.hpp"
#include "tsv.hpp"

namespace rkgcn {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string format_double(double v) {
  char buf[32];
  for (int precision = 1; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof(buf), "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

std::string metric_cell(double v) {
  if (std::isnan(v)) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

double to_double(std::string_view key, std::string_view value) {
  auto parsed = detail::parse_number<double>(value);
  if (!parsed || !std::isfinite(*parsed))
    throw UsageError("config key '" + std::string(key) + "' expects a number, got '" + std::string(value) + "'");
  return *parsed;
}

std::size_t to_count(std::string_view key, std::string_view value) {
  auto parsed = detail::parse_number<std::size_t>(value);
  if (!parsed)
    throw UsageError("config key '" + std::string(key) + "' expects a non-negative integer, got '" +
                     std::string(value) + "'");
  return *parsed;
}

bool to_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  throw UsageError("config key '" + std::string(key) + "' expects true/false, got '" + std::string(value) + "'");
}

std::vector<std::string> split_list(std::string_view value) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= value.size()) {
    auto pos = value.find(',', start);
    auto item = trim(value.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (!item.empty()) out.push_back(item);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
  return out;
}

const char* name_of(UserPath p) { return p == UserPath::ripple ? "ripple" : "table"; }
const char* name_of(Fusion f) { return f == Fusion::sum ? "sum" : "recursive"; }
const char* name_of(LossVariant l) { return l == LossVariant::bce ? "bce" : "literal"; }
const char* name_of(OptimizerKind o) { return o == OptimizerKind::adam ? "adam" : "sgd"; }

bool is_hyperparameter(std::string_view key) {
  for (auto k : {"dim", "hops", "n_p", "n_e", "layers", "l2", "lr", "batch_size", "epochs", "patience"})
    if (key == k) return true;
  return false;
}

void require_file(const fs::path& path, std::string_view key) {
  if (path.empty()) throw UsageError("config key '" + std::string(key) + "' is required");
  if (!fs::exists(path)) throw MissingFileError(path.string());
}

void require_dir(const fs::path& path, std::string_view key) {
  if (path.empty()) throw UsageError("config key '" + std::string(key) + "' is required");
  if (!fs::is_directory(path)) throw MissingFileError(path.string());
}

std::map<std::string, std::string> read_key_values(const fs::path& path) {
  auto in = detail::open_input(path);
  std::map<std::string, std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    auto t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto eq = t.find('=');
    if (eq == std::string::npos) continue;
    out[trim(std::string_view(t).substr(0, eq))] = trim(std::string_view(t).substr(eq + 1));
  }
  return out;
}

std::string manifest_text(const RunConfig& config, const PreparedData& prep,
                          const std::vector<std::pair<std::string, std::string>>& extra) {
  std::ostringstream out;
  out << "# rkgcn manifest\n" << config.canonical();
  out << "manifest.config_hash = " << hex64(config.hash()) << '\n';
  out << "manifest.num_entities = " << prep.kg.num_entities() << '\n';
  out << "manifest.num_relations = " << prep.kg.num_relations() << '\n';
  out << "manifest.num_users = " << prep.dataset.num_users << '\n';
  out << "manifest.entity_vocab_checksum = " << hex64(prep.kg.entity_vocab().checksum()) << '\n';
  out << "manifest.relation_vocab_checksum = " << hex64(prep.kg.relation_vocab().checksum()) << '\n';
  out << "manifest.user_vocab_checksum = " << hex64(prep.users.checksum()) << '\n';
  out << "manifest.item_vocab_checksum = " << hex64(prep.items.checksum()) << '\n';
  for (const auto& [k, v] : extra) out << "manifest." << k << " = " << v << '\n';
  return out.str();
}

// --- train ----------------------------------------------------------------

template <typename Real>
int train_impl(const RunConfig& config) {
  require_dir(config.data_dir, "data_dir");
  if (config.out.empty()) throw UsageError("config key 'out' is required");
  auto prep = load_prepared(config.data_dir, config.undirected);
  fs::create_directories(config.out);

  std::ofstream log(config.out / "epoch_log.csv");
  if (!log) throw Error("cannot write " + (config.out / "epoch_log.csv").string());
  log << "epoch,train_loss,val_auc,val_acc\n" << std::flush;

  FitHooks<Real> hooks;
  hooks.on_epoch = [&](const EpochLog& e, const ModelParams<Real>&) {
    log << e.epoch << ',' << metric_cell(e.train_loss) << ',' << metric_cell(e.val_auc) << ','
        << metric_cell(e.val_acc) << '\n'
        << std::flush;
    spdlog::info("epoch {}: loss {:.5f} val auc {:.4f} acc {:.4f}", e.epoch, e.train_loss, e.val_auc, e.val_acc);
    return true;
  };
  auto result = fit<Real>(prep.dataset, prep.kg, config.hp, config.options, config.seed, hooks);

  save_params(result.params.store(), config.out / "model.params");
  write_file_atomic(config.out / "model_manifest.txt",
                    manifest_text(config, prep,
                                  {{"best_epoch", std::to_string(result.best_epoch)},
                                   {"diverged", result.diverged ? "true" : "false"}}));

  std::ostringstream metrics;
  metrics << MetricReport::csv_header() << '\n';
  for (const auto* split : {"validation", "test"}) {
    const auto& rows = std::string_view(split) == "test" ? prep.dataset.test : prep.dataset.validation;
    auto report = evaluate<Real>(result.params, rows, prep.dataset, prep.kg, result.ripples, config.hp,
                                 config.options, config.seed, split);
    metrics << report.csv_row() << '\n';
    spdlog::info("{}: auc {:.4f} acc {:.4f} (n={}, skipped={})", split, report.auc, report.acc, report.n_examples,
                 report.skipped);
  }
  write_file_atomic(config.out / "metrics.csv", metrics.str());

  if (result.diverged) {
    std::cerr << "training diverged: " << result.divergence << '\n';
    return kExitDiverged;
  }
  return kExitOk;
}

// --- eval -----------------------------------------------------------------

template <typename Real>
int eval_impl(const RunConfig& config, const RunConfig& trained, const std::map<std::string, std::string>& manifest,
              const fs::path& model_dir) {
  auto data_dir = config.data_dir.empty() ? trained.data_dir : config.data_dir;
  require_dir(data_dir, "data_dir");
  auto prep = load_prepared(data_dir, trained.undirected);

  auto expect = [&](const char* key, const std::string& actual) {
    auto it = manifest.find(std::string("manifest.") + key);
    if (it == manifest.end() || it->second != actual)
      throw DataError(std::string("prepared data does not match the model (") + key + ")");
  };
  expect("entity_vocab_checksum", hex64(prep.kg.entity_vocab().checksum()));
  expect("relation_vocab_checksum", hex64(prep.kg.relation_vocab().checksum()));
  expect("user_vocab_checksum", hex64(prep.users.checksum()));
  expect("item_vocab_checksum", hex64(prep.items.checksum()));

  ModelShape shape{prep.kg.num_entities(), prep.kg.num_relations(), prep.dataset.num_users};
  ModelParams<Real> params(load_params<Real>(model_dir / "model.params"), shape, trained.hp, trained.options);
  auto ripples = build_ripple_table(prep.kg, prep.dataset, trained.hp, ripple_seed(trained.seed));

  std::ostringstream metrics;
  metrics << MetricReport::csv_header() << '\n';
  for (const auto& split : config.eval_splits) {
    const std::vector<Interaction>* rows = nullptr;
    if (split == "train") rows = &prep.dataset.train;
    else if (split == "validation") rows = &prep.dataset.validation;
    else if (split == "test") rows = &prep.dataset.test;
    else throw UsageError("unknown split '" + split + "'");
    auto report = evaluate<Real>(params, *rows, prep.dataset, prep.kg, ripples, trained.hp, trained.options,
                                 trained.seed, split);
    metrics << report.csv_row() << '\n';
  }
  auto out = config.out.empty() ? model_dir : config.out;
  fs::create_directories(out);
  write_file_atomic(out / "eval_metrics.csv", metrics.str());
  write_file_atomic(out / "eval_manifest.txt",
                    manifest_text(trained, prep, {{"model_dir", model_dir.string()},
                                                  {"eval_splits", join(config.eval_splits)}}));
  std::cout << metrics.str();
  return kExitOk;
}

// --- sweep ----------------------------------------------------------------

template <typename Real>
int sweep_impl(const RunConfig& config) {
  if (config.sweep_param.empty() || config.sweep_values.empty())
    throw UsageError("sweep needs sweep_param and a nonempty sweep_values list");
  if (!is_hyperparameter(config.sweep_param))
    throw UsageError("sweep_param must be a hyperparameter, got '" + config.sweep_param + "'");
  require_dir(config.data_dir, "data_dir");
  if (config.out.empty()) throw UsageError("config key 'out' is required");
  auto prep = load_prepared(config.data_dir, config.undirected);
  fs::create_directories(config.out);

  auto seeds = derived_seeds(config.seed, config.runs);
  std::ostringstream runs;
  runs << "param,value,seed,test_auc,test_acc\n";
  std::vector<double> auc_sum(config.sweep_values.size(), 0.0), acc_sum(config.sweep_values.size(), 0.0);
  std::vector<std::size_t> ok(config.sweep_values.size(), 0);

  for (std::size_t v = 0; v < config.sweep_values.size(); ++v) {
    RunConfig cell = config;
    cell.set(config.sweep_param, config.sweep_values[v]);
    for (auto seed : seeds) {
      double test_auc = std::nan("");
      double test_acc = std::nan("");
      try {
        auto result = fit<Real>(prep.dataset, prep.kg, cell.hp, cell.options, seed);
        if (!result.diverged) {
          auto report = evaluate<Real>(result.params, prep.dataset.test, prep.dataset, prep.kg, result.ripples,
                                       cell.hp, cell.options, seed, "test");
          test_auc = report.auc;
          test_acc = report.acc;
        }
      } catch (const Error& e) {
        spdlog::warn("sweep cell {}={} seed {} failed: {}", config.sweep_param, config.sweep_values[v], seed,
                     e.what());
      }
      if (!std::isnan(test_auc) && !std::isnan(test_acc)) {
        auc_sum[v] += test_auc;
        acc_sum[v] += test_acc;
        ++ok[v];
      }
      runs << config.sweep_param << ',' << config.sweep_values[v] << ',' << seed << ',' << metric_cell(test_auc)
           << ',' << metric_cell(test_acc) << '\n';
      spdlog::info("sweep {}={} seed {}: auc {} acc {}", config.sweep_param, config.sweep_values[v], seed,
                   metric_cell(test_auc), metric_cell(test_acc));
    }
  }

  std::ostringstream table;
  table << "metric";
  for (const auto& value : config.sweep_values) table << ',' << value;
  table << '\n';
  for (int m = 0; m < 2; ++m) {
    table << (m == 0 ? "auc" : "acc");
    for (std::size_t v = 0; v < config.sweep_values.size(); ++v) {
      const auto& sum = m == 0 ? auc_sum : acc_sum;
      table << ',' << (ok[v] ? metric_cell(sum[v] / static_cast<double>(ok[v])) : "NA");
    }
    table << '\n';
  }

  std::vector<std::string> seed_text;
  for (auto s : seeds) seed_text.push_back(std::to_string(s));
  write_file_atomic(config.out / "sweep_runs.csv", runs.str());
  write_file_atomic(config.out / "sweep_table.csv", table.str());
  write_file_atomic(config.out / "sweep_manifest.txt", manifest_text(config, prep, {{"seeds", join(seed_text)}}));
  std::cout << table.str();
  return kExitOk;
}

}  // namespace

// --- RunConfig --------------------------------------------------------------

void RunConfig::set(std::string_view key, std::string_view raw) {
  const std::string value = trim(raw);
  if (key == "ratings") ratings = value;
  else if (key == "kg") kg = value;
  else if (key == "item_map") item_map = value;
  else if (key == "data_dir") data_dir = value;
  else if (key == "model_dir") model_dir = value;
  else if (key == "out") out = value;
  else if (key == "rating_threshold") rating_threshold = to_double(key, value);
  else if (key == "split") {
    auto parts = split_list(value);
    if (parts.size() != 3) throw UsageError("split expects three comma-separated ratios");
    split = {to_double(key, parts[0]), to_double(key, parts[1]), to_double(key, parts[2])};
  } else if (key == "undirected") undirected = to_bool(key, value);
  else if (key == "seed") seed = to_count(key, value);
  else if (key == "precision") {
    auto p = to_count(key, value);
    if (p != 32 && p != 64) throw UsageError("precision must be 32 or 64");
    precision = static_cast<int>(p);
  } else if (key == "dim") hp.dim = to_count(key, value);
  else if (key == "hops") hp.hops = to_count(key, value);
  else if (key == "n_p") hp.n_p = to_count(key, value);
  else if (key == "n_e") hp.n_e = to_count(key, value);
  else if (key == "layers") hp.layers = to_count(key, value);
  else if (key == "l2") hp.l2 = to_double(key, value);
  else if (key == "lr") hp.lr = to_double(key, value);
  else if (key == "batch_size") hp.batch_size = to_count(key, value);
  else if (key == "epochs") hp.epochs = to_count(key, value);
  else if (key == "patience") hp.patience = to_count(key, value);
  else if (key == "acc_threshold") hp.threshold = to_double(key, value);
  else if (key == "user_path") {
    if (value == "ripple") options.user_path = UserPath::ripple;
    else if (value == "table") options.user_path = UserPath::table;
    else throw UsageError("user_path must be ripple or table");
  } else if (key == "fusion") {
    if (value == "sum") options.fusion = Fusion::sum;
    else if (value == "recursive") options.fusion = Fusion::recursive;
    else throw UsageError("fusion must be sum or recursive");
  } else if (key == "loss") {
    if (value == "bce") options.loss = LossVariant::bce;
    else if (value == "literal") options.loss = LossVariant::literal;
    else throw UsageError("loss must be bce or literal");
  } else if (key == "optimizer") {
    if (value == "adam") options.optimizer = OptimizerKind::adam;
    else if (value == "sgd") options.optimizer = OptimizerKind::sgd;
    else throw UsageError("optimizer must be adam or sgd");
  } else if (key == "resample_ripple") options.resample_ripple = to_bool(key, value);
  else if (key == "runs") {
    runs = to_count(key, value);
    if (runs == 0) throw UsageError("runs must be >= 1");
  } else if (key == "sweep_param") sweep_param = value;
  else if (key == "sweep_values") sweep_values = split_list(value);
  else if (key == "eval_splits") eval_splits = split_list(value);
  else throw UsageError("unknown config key '" + std::string(key) + "'");
}

void RunConfig::apply_text(std::string_view text, const std::string& origin) {
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    auto line = trim(text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start));
    start = end == std::string_view::npos ? text.size() : end + 1;
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError(origin + ":" + std::to_string(line_no) + ": expected key = value");
    auto key = trim(std::string_view(line).substr(0, eq));
    if (key.rfind("manifest.", 0) == 0) continue;
    set(key, std::string_view(line).substr(eq + 1));
  }
}

RunConfig RunConfig::from_file(const fs::path& path) {
  auto in = detail::open_input(path);
  std::ostringstream text;
  text << in.rdbuf();
  RunConfig config;
  config.apply_text(text.str(), path.string());
  return config;
}

std::map<std::string, std::string> RunConfig::entries() const {
  std::map<std::string, std::string> e;
  e["ratings"] = ratings.string();
  e["kg"] = kg.string();
  e["item_map"] = item_map.string();
  e["data_dir"] = data_dir.string();
  e["model_dir"] = model_dir.string();
  e["out"] = out.string();
  e["rating_threshold"] = format_double(rating_threshold);
  e["split"] = format_double(split.train) + "," + format_double(split.validation) + "," + format_double(split.test);
  e["undirected"] = undirected ? "true" : "false";
  e["seed"] = std::to_string(seed);
  e["precision"] = std::to_string(precision);
  e["dim"] = std::to_string(hp.dim);
  e["hops"] = std::to_string(hp.hops);
  e["n_p"] = std::to_string(hp.n_p);
  e["n_e"] = std::to_string(hp.n_e);
  e["layers"] = std::to_string(hp.layers);
  e["l2"] = format_double(hp.l2);
  e["lr"] = format_double(hp.lr);
  e["batch_size"] = std::to_string(hp.batch_size);
  e["epochs"] = std::to_string(hp.epochs);
  e["patience"] = std::to_string(hp.patience);
  e["acc_threshold"] = format_double(hp.threshold);
  e["user_path"] = name_of(options.user_path);
  e["fusion"] = name_of(options.fusion);
  e["loss"] = name_of(options.loss);
  e["optimizer"] = name_of(options.optimizer);
  e["resample_ripple"] = options.resample_ripple ? "true" : "false";
  e["runs"] = std::to_string(runs);
  e["sweep_param"] = sweep_param;
  e["sweep_values"] = join(sweep_values);
  e["eval_splits"] = join(eval_splits);
  return e;
}

std::string RunConfig::canonical() const {
  std::string out;
  for (const auto& [k, v] : entries()) out += k + " = " + v + "\n";
  return out;
}

std::vector<std::uint64_t> derived_seeds(std::uint64_t base, std::size_t runs) {
  std::vector<std::uint64_t> seeds;
  for (std::size_t r = 0; r < runs; ++r) seeds.push_back(mix_seed(base, 0x5EED, r) % 1000000007ULL);
  return seeds;
}

// --- prepared data ----------------------------------------------------------

PreparedData load_prepared(const fs::path& dir, bool undirected) {
  auto entity_vocab = Vocabulary::load_tsv(dir / "entity_vocab.tsv");
  auto relation_vocab = Vocabulary::load_tsv(dir / "relation_vocab.tsv");
  auto kg = load_indexed_kg(dir / "kg_triples.tsv", std::move(entity_vocab), std::move(relation_vocab), undirected);
  auto users = Vocabulary::load_tsv(dir / "user_vocab.tsv");
  auto items = Vocabulary::load_tsv(dir / "item_vocab.tsv");

  InteractionDataset ds;
  ds.num_users = users.size();
  ds.num_items = items.size();
  {
    auto path = dir / "item_entity.tsv";
    auto in = detail::open_input(path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (detail::is_blank(line)) continue;
      auto fields = detail::split_tabs(line);
      auto item = fields.size() == 2 ? detail::parse_number<std::size_t>(fields[0]) : std::nullopt;
      auto entity = fields.size() == 2 ? detail::parse_number<EntityId>(fields[1]) : std::nullopt;
      if (!item || !entity || *item != ds.item_entity.size() || *entity < 0 ||
          static_cast<std::size_t>(*entity) >= kg.num_entities())
        throw ParseError(path.string(), line_no, "expected dense item_index<TAB>entity_index");
      ds.item_entity.push_back(*entity);
    }
    if (ds.item_entity.size() != ds.num_items) throw DataError("item_entity.tsv does not cover every item");
  }
  ds.train = load_split(dir / "train.tsv");
  ds.validation = load_split(dir / "validation.tsv");
  ds.test = load_split(dir / "test.tsv");
  for (const auto* rows : {&ds.train, &ds.validation, &ds.test})
    for (const auto& x : *rows)
      if (static_cast<std::size_t>(x.user) >= ds.num_users || static_cast<std::size_t>(x.item) >= ds.num_items)
        throw DataError("split file references an unknown user or item");
  ds.user_history = train_history(ds.train, ds.num_users);
  return PreparedData{std::move(kg), std::move(ds), std::move(users), std::move(items)};
}

// --- commands ---------------------------------------------------------------

int cmd_prep(const RunConfig& config) {
  require_file(config.ratings, "ratings");
  require_file(config.kg, "kg");
  require_file(config.item_map, "item_map");
  if (config.out.empty()) throw UsageError("config key 'out' is required");

  auto kg = load_kg(config.kg, config.undirected);
  auto item_map = load_item_map(config.item_map, kg.entity_vocab());
  auto ratings = binarize(config.ratings, config.rating_threshold, item_map);
  PrepStats stats;
  auto ds = prepare_dataset(ratings, config.split, config.seed, &stats);

  fs::create_directories(config.out);
  kg.entity_vocab().save_tsv(config.out / "entity_vocab.tsv");
  kg.relation_vocab().save_tsv(config.out / "relation_vocab.tsv");
  ratings.users.save_tsv(config.out / "user_vocab.tsv");
  ratings.items.save_tsv(config.out / "item_vocab.tsv");
  save_indexed_triples(kg, config.out / "kg_triples.tsv");
  {
    std::ofstream out(config.out / "item_entity.tsv");
    for (std::size_t i = 0; i < ds.item_entity.size(); ++i) out << i << '\t' << ds.item_entity[i] << '\n';
  }
  save_split(ds.train, config.out / "train.tsv");
  save_split(ds.validation, config.out / "validation.tsv");
  save_split(ds.test, config.out / "test.tsv");

  auto positives_in = [](const std::vector<Interaction>& rows) {
    std::size_t n = 0;
    for (const auto& x : rows) n += x.label == 1 ? 1 : 0;
    return n;
  };
  std::ostringstream report;
  report << "# dataset statistics\n";
  report << "Users\t" << ds.num_users << '\n';
  report << "Items\t" << ds.num_items << '\n';
  report << "Interaction\t" << ratings.num_positives() << '\n';
  report << "Knowledge Graph Triples\t" << kg.triples().size() << '\n';
  report << "\n# preparation details\n";
  report << "rating_threshold\t" << format_double(config.rating_threshold) << '\n';
  report << "rating_rows\t" << ratings.rows << '\n';
  report << "below_threshold_rows\t" << ratings.below_threshold_rows << '\n';
  report << "unmapped_rows\t" << ratings.unmapped_rows << '\n';
  report << "unmapped_items\t" << ratings.unmapped_items << '\n';
  report << "item_map_rows\t" << item_map.rows << '\n';
  report << "item_map_unknown_entities\t" << item_map.unknown_entity_rows << '\n';
  report << "entities\t" << kg.num_entities() << '\n';
  report << "relations\t" << kg.num_relations() << '\n';
  report << "undirected\t" << (config.undirected ? "true" : "false") << '\n';
  report << "train_rows\t" << ds.train.size() << "\ttrain_positives\t" << positives_in(ds.train) << '\n';
  report << "validation_rows\t" << ds.validation.size() << "\tvalidation_positives\t" << positives_in(ds.validation)
         << '\n';
  report << "test_rows\t" << ds.test.size() << "\ttest_positives\t" << positives_in(ds.test) << '\n';
  report << "negative_short_pool_users\t" << stats.negatives.short_pool_users << '\n';
  report << "negative_empty_pool_users\t" << stats.negatives.empty_pool_users << '\n';
  report << "users_without_train_history\t" << stats.users_without_train_history << '\n';
  report << "seed\t" << config.seed << '\n';
  write_file_atomic(config.out / "prep_report.txt", report.str());
  write_file_atomic(config.out / "prep_manifest.txt",
                    "# rkgcn prep manifest\n" + config.canonical() + "manifest.config_hash = " + hex64(config.hash()) +
                        "\n");
  std::cout << report.str();
  return kExitOk;
}

int cmd_train(const RunConfig& config) {
  return config.precision == 64 ? train_impl<double>(config) : train_impl<float>(config);
}

int cmd_eval(const RunConfig& config) {
  auto model_dir = config.model_dir.empty() ? config.out : config.model_dir;
  require_dir(model_dir, "model_dir");
  auto manifest_path = model_dir / "model_manifest.txt";
  auto trained = RunConfig::from_file(manifest_path);
  auto manifest = read_key_values(manifest_path);
  return trained.precision == 64 ? eval_impl<double>(config, trained, manifest, model_dir)
                                 : eval_impl<float>(config, trained, manifest, model_dir);
}

int cmd_sweep(const RunConfig& config) {
  return config.precision == 64 ? sweep_impl<double>(config) : sweep_impl<float>(config);
}

int run_command(std::string_view command, const RunConfig& config) {
  try {
    if (command == "prep") return cmd_prep(config);
    if (command == "train") return cmd_train(config);
    if (command == "eval") return cmd_eval(config);
    if (command == "sweep") return cmd_sweep(config);
    throw UsageError("unknown command '" + std::string(command) + "'");
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const MissingFileError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitMissingFile;
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitDiverged;
  } catch (const ParseError& e) {
    std::cerr << "malformed input: " << e.what() << '\n';
    return kExitMalformed;
  } catch (const DataError& e) {
    std::cerr << "malformed input: " << e.what() << '\n';
    return kExitMalformed;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
}

void write_file_atomic(const fs::path& path, const std::string& text) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << text;
    out.flush();
    if (!out) throw Error("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

}  // namespace rkgcn

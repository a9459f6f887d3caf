#include "san/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>
#include <json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "san/checkpoint.hpp"
#include "san/config.hpp"
#include "san/eval.hpp"
#include "san/softlabel.hpp"
#include "san/train.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace san::cli {

namespace {

void bind_model_to_manifest(ModelConfig& model, const DatasetManifest& manifest) {
  model.num_identities = manifest.num_identities;
  model.num_attributes = manifest.num_attributes;
  SAN_CHECK_CONFIG(model.num_identities > 0,
                   "manifest has no train identities to classify");
  if (model.has_attr_head()) {
    SAN_CHECK_CONFIG(model.num_attributes > 0,
                     "branch '", branch_to_string(model.branch),
                     "' needs attribute labels (hard or soft); none found. "
                     "Run softlabel first or pick --branch stripe|id");
  }
}

DescriptorSet gather_rows(const DescriptorSet& all,
                          const std::map<int, int>& row_of,
                          const std::vector<int>& record_idx) {
  DescriptorSet out;
  out.mat = Tensor({static_cast<int>(record_idx.size()), all.dim()});
  for (std::size_t i = 0; i < record_idx.size(); ++i) {
    const int row = row_of.at(record_idx[i]);
    std::copy(all.mat.data() + static_cast<std::size_t>(row) * all.dim(),
              all.mat.data() + static_cast<std::size_t>(row + 1) * all.dim(),
              out.mat.data() + i * all.dim());
    out.ids.push_back(all.ids[row]);
    out.cams.push_back(all.cams[row]);
    out.paths.push_back(all.paths[row]);
  }
  return out;
}

struct EvalResult {
  EvalReport report;
  json extra;  // repeats aggregate, when requested
};

EvalResult run_evaluation(SanModel& model, const PreprocessOptions& prep,
                          const DatasetManifest& manifest,
                          const std::string& protocol_name, int repeats,
                          std::uint64_t seed) {
  EvalResult result;
  if (repeats > 0) {
    SAN_CHECK_CONFIG(protocol_name == "vehicleid",
                     "--repeats applies to the vehicleid protocol only");
    std::vector<int> pool;
    for (std::size_t i = 0; i < manifest.records.size(); ++i)
      if (manifest.records[i].split != Split::kTrain)
        pool.push_back(static_cast<int>(i));
    DescriptorSet all = extract_descriptors(model, manifest, pool, prep);
    std::map<int, int> row_of;
    for (std::size_t r = 0; r < pool.size(); ++r)
      row_of[pool[r]] = static_cast<int>(r);

    Rng rng(seed);
    std::vector<double> maps, rank1s;
    EvalReport first;
    for (int rep = 0; rep < repeats; ++rep) {
      Rng draw = rng.fork(rep);
      Protocol proto = build_vehicleid_protocol_resampled(manifest, draw);
      DescriptorSet q = gather_rows(all, row_of, proto.query_idx);
      DescriptorSet g = gather_rows(all, row_of, proto.gallery_idx);
      EvalReport rep_report = evaluate(q, g, proto);
      maps.push_back(rep_report.map);
      rank1s.push_back(rep_report.cmc.empty() ? 0.0 : rep_report.cmc[0]);
      if (rep == 0) first = rep_report;
    }
    auto mean_std = [](const std::vector<double>& v) {
      double mean = 0.0;
      for (double x : v) mean += x;
      mean /= v.size();
      double var = 0.0;
      for (double x : v) var += (x - mean) * (x - mean);
      return std::pair<double, double>(mean, std::sqrt(var / v.size()));
    };
    const auto [map_mean, map_std] = mean_std(maps);
    const auto [r1_mean, r1_std] = mean_std(rank1s);
    result.report = first;
    result.extra = {{"repeats", repeats},
                    {"map_mean", map_mean},
                    {"map_std", map_std},
                    {"rank1_mean", r1_mean},
                    {"rank1_std", r1_std}};
    return result;
  }

  Protocol proto = build_protocol(manifest, protocol_name);
  std::vector<int> pool = proto.query_idx;
  pool.insert(pool.end(), proto.gallery_idx.begin(), proto.gallery_idx.end());
  std::sort(pool.begin(), pool.end());
  pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
  DescriptorSet all = extract_descriptors(model, manifest, pool, prep);
  std::map<int, int> row_of;
  for (std::size_t r = 0; r < pool.size(); ++r)
    row_of[pool[r]] = static_cast<int>(r);
  DescriptorSet q = gather_rows(all, row_of, proto.query_idx);
  DescriptorSet g = gather_rows(all, row_of, proto.gallery_idx);
  result.report = evaluate(q, g, proto);
  return result;
}

void print_report_summary(const EvalReport& r) {
  std::cout << "protocol=" << r.protocol << " queries=" << r.num_queries
            << " gallery=" << r.num_gallery << " dropped="
            << r.num_dropped_queries << "\n";
  if (!r.cmc.empty()) {
    std::cout << "rank1=" << r.cmc[0];
    if (r.cmc.size() >= 5) std::cout << " rank5=" << r.cmc[4];
    std::cout << " mAP=" << r.map << "\n";
  }
}

// ---------------------------------------------------------------------------
// Subcommand bodies
// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string out;
  int ids = 20, imgs = 8, attrs = 4, size = 128;
  std::uint64_t seed = 0;
  double unlabeled = 0.0;
};

int cmd_synth(const SynthArgs& a) {
  SynthOptions opts;
  opts.num_ids = a.ids;
  opts.imgs_per_id = a.imgs;
  opts.num_attrs = a.attrs;
  opts.seed = a.seed;
  opts.img_size = a.size;
  opts.out_dir = a.out;
  opts.unlabeled_fraction = a.unlabeled;
  DatasetManifest m = synth_generate(opts);
  std::cout << "wrote " << m.records.size() << " records, C=" << m.num_identities
            << " M=" << m.num_attributes << " -> "
            << (fs::path(a.out) / "manifest.jsonl").string() << "\n";
  return 0;
}

struct TrainArgs {
  std::string config;
  std::string manifest_override;
  std::string out_override;
  std::string branch_override;
  std::string resume;
  int q_override = -1;
  std::int64_t seed_override = -1;
  bool hard_only = false;
};

int cmd_train(const TrainArgs& a) {
  RunConfig cfg = load_run_config(a.config);
  if (!a.manifest_override.empty()) cfg.train_manifest = a.manifest_override;
  if (!a.out_override.empty()) cfg.out_dir = a.out_override;
  if (!a.branch_override.empty())
    cfg.model.branch = branch_from_string(a.branch_override);
  if (a.q_override > 0) cfg.model.q = a.q_override;
  if (a.seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(a.seed_override);
  SAN_CHECK_CONFIG(!cfg.train_manifest.empty(), "no train manifest configured");

  DatasetManifest manifest = load_manifest(cfg.train_manifest);

  if (a.hard_only) {
    // Keep only hard-labeled train records, as an attribute predictor needs.
    DatasetManifest sub;
    sub.name = manifest.name + "_hard";
    sub.base_dir = manifest.base_dir;
    for (const VehicleRecord& r : manifest.records)
      if (r.split != Split::kTrain ||
          (r.orig_attribute && !r.attribute_is_soft))
        sub.records.push_back(r);
    finalize_manifest(sub);
    manifest = std::move(sub);
  }

  bind_model_to_manifest(cfg.model, manifest);
  fs::create_directories(cfg.out_dir);
  write_run_config(cfg, (fs::path(cfg.out_dir) / "config.json").string());

  SanModel model(cfg.model);
  if (!a.resume.empty()) {
    LoadedCheckpoint prev = load_checkpoint(a.resume);
    SAN_CHECK_CONFIG(prev.config.q == cfg.model.q && prev.config.d == cfg.model.d,
                     "resume checkpoint has q=", prev.config.q, " d=",
                     prev.config.d, ", run config wants q=", cfg.model.q,
                     " d=", cfg.model.d);
    verify_checkpoint_against_manifest(prev.config, manifest,
                                       /*require_identities=*/true,
                                       /*require_attributes=*/
                                       cfg.model.has_attr_head());
    model = std::move(*prev.model);
  } else {
    Rng rng(cfg.seed);
    model.init(rng);
  }

  TrainOptions train = cfg.train;
  train.seed = cfg.seed;
  train.out_dir = cfg.out_dir;
  std::ofstream loss_log((fs::path(cfg.out_dir) / "loss_log.jsonl").string());
  SAN_CHECK_DATA(loss_log.good(), "cannot write loss log in ", cfg.out_dir);
  train_model(model, manifest, cfg.preprocess, train, &loss_log,
              [](int epoch, const LossBreakdown& mean) {
                std::cout << "epoch " << epoch << " total=" << mean.total
                          << " id=" << mean.id << " attr=" << mean.attr << "\n";
              });
  std::cout << "checkpoint: "
            << (fs::path(cfg.out_dir) / "checkpoint_final.ckpt").string() << "\n";
  return 0;
}

struct EvalArgs {
  std::string checkpoint;
  std::string manifest;
  std::string protocol = "plain";
  std::string out;
  int repeats = 0;
  std::int64_t seed = 0;
};

int cmd_eval(const EvalArgs& a) {
  LoadedCheckpoint ckpt = load_checkpoint(a.checkpoint);
  DatasetManifest manifest = load_manifest(a.manifest);
  EvalResult res = run_evaluation(*ckpt.model, ckpt.prep, manifest, a.protocol,
                                  a.repeats, static_cast<std::uint64_t>(a.seed));
  print_report_summary(res.report);
  if (!res.extra.empty())
    std::cout << "repeats: " << res.extra.dump() << "\n";
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    json j = res.report.to_json();
    if (!res.extra.empty()) j["repeats"] = res.extra;
    std::ofstream out((fs::path(a.out) / "report.json").string());
    out << j.dump(2) << "\n";
    write_cmc_csv(res.report, (fs::path(a.out) / "cmc.csv").string());
  }
  return 0;
}

struct SoftlabelArgs {
  std::string manifest;
  std::string checkpoint;
  std::string out_manifest;
  std::string audit;
};

int cmd_softlabel(const SoftlabelArgs& a) {
  DatasetManifest manifest = load_manifest(a.manifest);
  LoadedCheckpoint ckpt = load_checkpoint(a.checkpoint);
  SAN_CHECK_CONFIG(ckpt.config.has_attr_head(),
                   "checkpoint ", a.checkpoint, " has no attribute head");
  verify_checkpoint_against_manifest(ckpt.config, manifest,
                                     /*require_identities=*/false,
                                     /*require_attributes=*/true);
  AttributePredictor predictor;
  predictor.model = std::move(ckpt.model);
  predictor.prep = ckpt.prep;

  std::vector<SoftLabelAudit> audit;
  DatasetManifest labeled = assign_soft_labels(manifest, predictor, &audit);
  write_manifest(labeled, a.out_manifest);
  const std::string audit_path =
      a.audit.empty() ? a.out_manifest + ".audit.jsonl" : a.audit;
  write_softlabel_audit(audit, audit_path);
  std::cout << "assigned " << audit.size() << " soft labels -> "
            << a.out_manifest << "\n";
  return 0;
}

struct ExtractArgs {
  std::string checkpoint;
  std::string manifest;
  std::string split = "all";
  std::string out;
};

int cmd_extract(const ExtractArgs& a) {
  LoadedCheckpoint ckpt = load_checkpoint(a.checkpoint);
  DatasetManifest manifest = load_manifest(a.manifest);

  std::vector<int> subset;
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    const Split s = manifest.records[i].split;
    const bool want = a.split == "all" ||
                      (a.split == "eval" && s != Split::kTrain) ||
                      (a.split == "train" && s == Split::kTrain) ||
                      (a.split == "gallery" && s == Split::kGallery) ||
                      (a.split == "probe" && s == Split::kProbe);
    if (want) subset.push_back(static_cast<int>(i));
  }
  SAN_CHECK_DATA(!subset.empty(), "no records selected by split '", a.split, "'");

  DescriptorSet set = extract_descriptors(*ckpt.model, manifest, subset, ckpt.prep);

  fs::path base(a.out);
  if (base.has_parent_path()) fs::create_directories(base.parent_path());
  std::ofstream bin(a.out + ".bin", std::ios::binary);
  SAN_CHECK_DATA(bin.good(), "cannot write ", a.out, ".bin");
  const char magic[8] = {'S', 'A', 'N', 'D', 'E', 'S', 'C', '1'};
  bin.write(magic, sizeof(magic));
  const std::uint64_t n = set.size(), dim = set.dim();
  bin.write(reinterpret_cast<const char*>(&n), sizeof(n));
  bin.write(reinterpret_cast<const char*>(&dim), sizeof(dim));
  bin.write(reinterpret_cast<const char*>(set.mat.data()),
            static_cast<std::streamsize>(set.mat.size() * sizeof(double)));

  json meta;
  meta["count"] = n;
  meta["dim"] = dim;
  meta["ids"] = set.ids;
  meta["cams"] = set.cams;
  meta["paths"] = set.paths;
  std::ofstream mf(a.out + ".json");
  mf << meta.dump(2) << "\n";
  std::cout << "extracted " << n << " descriptors of dim " << dim << " -> "
            << a.out << ".bin\n";
  return 0;
}

struct AblateArgs {
  std::string config;
  std::string out_override;
  std::string seeds = "0";
};

struct AblationRow {
  std::string name;
  Branch branch;
  int q;
};

int cmd_ablate(const AblateArgs& a) {
  RunConfig base = load_run_config(a.config);
  if (!a.out_override.empty()) base.out_dir = a.out_override;
  SAN_CHECK_CONFIG(!base.train_manifest.empty(), "no train manifest configured");

  std::vector<std::uint64_t> seeds;
  {
    std::stringstream ss(a.seeds);
    std::string tok;
    while (std::getline(ss, tok, ','))
      if (!tok.empty()) seeds.push_back(std::stoull(tok));
  }
  SAN_CHECK_CONFIG(!seeds.empty(), "--seeds parsed to an empty list");

  DatasetManifest manifest = load_manifest(base.train_manifest);
  DatasetManifest eval_manifest =
      base.eval_manifest.empty() ? manifest : load_manifest(base.eval_manifest);

  // The standard component grid: global baseline, attribute branch,
  // the three stripe granularities, and the combined model.
  const std::vector<AblationRow> rows = {
      {"id_baseline", Branch::kId, base.model.q},
      {"attr_branch", Branch::kAttr, base.model.q},
      {"stripe_q2", Branch::kStripe, 2},
      {"stripe_q4", Branch::kStripe, 4},
      {"stripe_q8", Branch::kStripe, 8},
      {"full_q8", Branch::kFull, 8},
  };

  fs::create_directories(base.out_dir);
  write_run_config(base, (fs::path(base.out_dir) / "config.json").string());

  json table = json::array();
  for (const AblationRow& row : rows) {
    json entry;
    entry["name"] = row.name;
    entry["branch"] = branch_to_string(row.branch);
    entry["q"] = row.q;
    std::vector<double> rank1s, rank5s, maps;
    for (std::uint64_t seed : seeds) {
      ModelConfig mc = base.model;
      mc.branch = row.branch;
      mc.q = row.q;
      bind_model_to_manifest(mc, manifest);
      SanModel model(mc);
      Rng rng(seed);
      model.init(rng);
      TrainOptions train = base.train;
      train.seed = seed;
      train_model(model, manifest, base.preprocess, train);
      EvalResult res = run_evaluation(model, base.preprocess, eval_manifest,
                                      base.protocol, /*repeats=*/0, seed);
      rank1s.push_back(res.report.cmc.empty() ? 0.0 : res.report.cmc[0]);
      rank5s.push_back(res.report.cmc.size() >= 5 ? res.report.cmc[4] : 1.0);
      maps.push_back(res.report.map);
      std::cout << row.name << " seed=" << seed << " rank1=" << rank1s.back()
                << " mAP=" << maps.back() << "\n";
    }
    auto mean = [](const std::vector<double>& v) {
      double s = 0.0;
      for (double x : v) s += x;
      return s / v.size();
    };
    entry["seeds"] = seeds;
    entry["rank1"] = rank1s;
    entry["rank5"] = rank5s;
    entry["map"] = maps;
    entry["rank1_mean"] = mean(rank1s);
    entry["rank5_mean"] = mean(rank5s);
    entry["map_mean"] = mean(maps);
    table.push_back(entry);
  }

  json out;
  out["rows"] = table;
  const std::string path = (fs::path(base.out_dir) / "ablation.json").string();
  std::ofstream f(path);
  f << out.dump(2) << "\n";
  std::cout << "ablation table -> " << path << "\n";
  return 0;
}

struct PlotArgs {
  std::string out;
  std::vector<std::string> reports;
};

// A (rank, rate) CSV as written by eval/plot is also a valid curve input.
EvalReport load_cmc_csv(const std::string& path) {
  std::ifstream in(path);
  SAN_CHECK_DATA(in.good(), "cannot open csv ", path);
  EvalReport r;
  r.protocol = "csv";
  std::string line;
  bool header = true;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    const auto comma = line.find(',');
    SAN_CHECK_DATA(comma != std::string::npos, path, " line ", line_no,
                   ": expected 'rank,rate'");
    try {
      r.cmc.push_back(std::stod(line.substr(comma + 1)));
    } catch (const std::exception&) {
      throw DataError(strcat(path, " line ", line_no, ": bad rate value"));
    }
  }
  SAN_CHECK_DATA(!r.cmc.empty(), path, " holds no CMC rows");
  for (std::size_t k = 1; k < r.cmc.size(); ++k)
    SAN_CHECK_DATA(r.cmc[k] >= r.cmc[k - 1],
                   path, ": CMC is not monotone at rank ", k + 1);
  return r;
}

int cmd_plot(const PlotArgs& a) {
  SAN_CHECK_CONFIG(!a.reports.empty(), "plot needs at least one report");
  std::vector<EvalReport> reports;
  std::vector<std::string> labels;
  for (const std::string& path : a.reports) {
    // JSON reports and (rank, rate) CSVs are both accepted; loading
    // validates CMC monotonicity either way.
    if (fs::path(path).extension() == ".csv")
      reports.push_back(load_cmc_csv(path));
    else
      reports.push_back(load_report(path));
    labels.push_back(fs::path(path).stem().string());
  }

  std::size_t max_rank = 0;
  for (const EvalReport& r : reports) max_rank = std::max(max_rank, r.cmc.size());

  // CSV: one rank column, one rate column per report.
  fs::path base(a.out);
  if (base.has_parent_path()) fs::create_directories(base.parent_path());
  {
    std::ofstream csv(a.out + ".csv");
    SAN_CHECK_DATA(csv.good(), "cannot write ", a.out, ".csv");
    csv << "rank";
    for (const std::string& l : labels) csv << "," << l;
    csv << "\n";
    for (std::size_t k = 0; k < max_rank; ++k) {
      csv << (k + 1);
      for (const EvalReport& r : reports)
        csv << "," << (k < r.cmc.size() ? r.cmc[k] : r.cmc.back());
      csv << "\n";
    }
  }

  const int width = 800, height = 600;
  const int ml = 70, mr = 30, mt = 40, mb = 60;
  cv::Mat canvas(height, width, CV_8UC3, cv::Scalar(255, 255, 255));
  const cv::Scalar axis_color(60, 60, 60);
  cv::line(canvas, {ml, height - mb}, {width - mr, height - mb}, axis_color, 2);
  cv::line(canvas, {ml, mt}, {ml, height - mb}, axis_color, 2);
  auto x_of = [&](double rank) {
    return ml + static_cast<int>((rank - 1.0) / std::max<std::size_t>(max_rank - 1, 1) *
                                 (width - ml - mr));
  };
  auto y_of = [&](double rate) {
    return height - mb - static_cast<int>(rate * (height - mt - mb));
  };
  for (int t = 0; t <= 5; ++t) {
    const double rate = t / 5.0;
    cv::line(canvas, {ml - 4, y_of(rate)}, {ml, y_of(rate)}, axis_color, 1);
    cv::putText(canvas, cv::format("%.1f", rate), {ml - 45, y_of(rate) + 5},
                cv::FONT_HERSHEY_SIMPLEX, 0.45, axis_color, 1);
  }
  for (std::size_t k = 0; k < max_rank; ++k) {
    if (max_rank > 10 && (k % 2) == 1) continue;
    cv::line(canvas, {x_of(k + 1.0), height - mb}, {x_of(k + 1.0), height - mb + 4},
             axis_color, 1);
    cv::putText(canvas, std::to_string(k + 1), {x_of(k + 1.0) - 8, height - mb + 20},
                cv::FONT_HERSHEY_SIMPLEX, 0.45, axis_color, 1);
  }
  cv::putText(canvas, "rank", {width / 2 - 20, height - 15},
              cv::FONT_HERSHEY_SIMPLEX, 0.5, axis_color, 1);
  cv::putText(canvas, "match rate", {10, mt - 15}, cv::FONT_HERSHEY_SIMPLEX, 0.5,
              axis_color, 1);

  const std::vector<cv::Scalar> palette = {
      {180, 60, 30}, {30, 120, 200}, {40, 160, 60}, {150, 40, 150},
      {20, 90, 130}, {130, 130, 20}, {90, 90, 90},  {0, 60, 220},
  };
  for (std::size_t r = 0; r < reports.size(); ++r) {
    const cv::Scalar color = palette[r % palette.size()];
    const std::vector<double>& cmc = reports[r].cmc;
    for (std::size_t k = 1; k < cmc.size(); ++k) {
      cv::line(canvas, {x_of(static_cast<double>(k)), y_of(cmc[k - 1])},
               {x_of(static_cast<double>(k + 1)), y_of(cmc[k])}, color, 2);
    }
    cv::putText(canvas, labels[r],
                {width - mr - 220, mt + 22 * static_cast<int>(r) + 10},
                cv::FONT_HERSHEY_SIMPLEX, 0.5, color, 1);
  }
  SAN_CHECK_DATA(cv::imwrite(a.out + ".png", canvas), "cannot write ", a.out,
                 ".png");
  std::cout << "wrote " << a.out << ".png and " << a.out << ".csv\n";
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"stripe-based and attribute-aware vehicle re-identification"};
  app.require_subcommand(1);

  SynthArgs synth;
  CLI::App* synth_cmd = app.add_subcommand("synth", "generate a toy dataset");
  synth_cmd->add_option("--out", synth.out, "output directory")->required();
  synth_cmd->add_option("--ids", synth.ids, "identities");
  synth_cmd->add_option("--imgs-per-id", synth.imgs, "images per identity");
  synth_cmd->add_option("--attrs", synth.attrs, "attribute classes");
  synth_cmd->add_option("--size", synth.size, "image size in pixels");
  synth_cmd->add_option("--seed", synth.seed, "generator seed");
  synth_cmd->add_option("--unlabeled-frac", synth.unlabeled,
                        "fraction of train records without attribute labels");

  TrainArgs train;
  CLI::App* train_cmd = app.add_subcommand("train", "train a model");
  train_cmd->add_option("--config", train.config, "run config JSON")->required();
  train_cmd->add_option("--manifest", train.manifest_override,
                        "override the train manifest");
  train_cmd->add_option("--out", train.out_override, "override the output dir");
  train_cmd->add_option("--branch", train.branch_override,
                        "full|stripe|attr|id");
  train_cmd->add_option("--q", train.q_override, "stripe count override");
  train_cmd->add_option("--seed", train.seed_override, "seed override");
  train_cmd->add_option("--resume", train.resume, "checkpoint to resume from");
  train_cmd->add_flag("--hard-only", train.hard_only,
                      "train only on hard-labeled train records");

  EvalArgs eval;
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "model checkpoint")
      ->required();
  eval_cmd->add_option("--manifest", eval.manifest, "eval manifest")->required();
  eval_cmd->add_option("--protocol", eval.protocol, "plain|vehicleid|veri");
  eval_cmd->add_option("--repeats", eval.repeats,
                       "vehicleid gallery redraws (0 = fixed lists)");
  eval_cmd->add_option("--seed", eval.seed, "seed for gallery redraws");
  eval_cmd->add_option("--out", eval.out, "directory for report.json + cmc.csv");

  SoftlabelArgs softlabel;
  CLI::App* soft_cmd =
      app.add_subcommand("softlabel", "assign predicted attribute labels");
  soft_cmd->add_option("--manifest", softlabel.manifest, "input manifest")
      ->required();
  soft_cmd->add_option("--checkpoint", softlabel.checkpoint,
                       "attribute predictor checkpoint")
      ->required();
  soft_cmd->add_option("--out-manifest", softlabel.out_manifest,
                       "output manifest path")
      ->required();
  soft_cmd->add_option("--audit", softlabel.audit,
                       "audit sidecar path (default <out>.audit.jsonl)");

  ExtractArgs extract;
  CLI::App* extract_cmd =
      app.add_subcommand("extract", "extract descriptors to a file");
  extract_cmd->add_option("--checkpoint", extract.checkpoint, "model checkpoint")
      ->required();
  extract_cmd->add_option("--manifest", extract.manifest, "manifest")->required();
  extract_cmd->add_option("--split", extract.split,
                          "train|gallery|probe|eval|all");
  extract_cmd->add_option("--out", extract.out, "output base path")->required();

  AblateArgs ablate;
  CLI::App* ablate_cmd =
      app.add_subcommand("ablate", "train and evaluate the component grid");
  ablate_cmd->add_option("--config", ablate.config, "run config JSON")
      ->required();
  ablate_cmd->add_option("--out", ablate.out_override, "override the output dir");
  ablate_cmd->add_option("--seeds", ablate.seeds, "comma-separated seed list");

  PlotArgs plot;
  CLI::App* plot_cmd = app.add_subcommand("plot", "plot CMC curves");
  plot_cmd->add_option("--out", plot.out, "output base path (.png/.csv)")
      ->required();
  plot_cmd->add_option("reports", plot.reports, "report JSON files")
      ->required()
      ->expected(-1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*synth_cmd) return cmd_synth(synth);
    if (*train_cmd) return cmd_train(train);
    if (*eval_cmd) return cmd_eval(eval);
    if (*soft_cmd) return cmd_softlabel(softlabel);
    if (*extract_cmd) return cmd_extract(extract);
    if (*ablate_cmd) return cmd_ablate(ablate);
    if (*plot_cmd) return cmd_plot(plot);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace san::cli

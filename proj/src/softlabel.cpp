#include "san/softlabel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "san/check.hpp"

using json = nlohmann::json;

namespace san {

Tensor AttributePredictor::predict_distribution(const Tensor& image_batch) const {
  ForwardOutputs out = model->forward(image_batch, /*train=*/false);
  SAN_CHECK(!out.attr_logits.empty(), "predictor has no attribute head");
  const int n = out.attr_logits.dim(0);
  const int m = out.attr_logits.dim(1);
  Tensor dist({n, m});
  for (int b = 0; b < n; ++b) {
    const double* row = out.attr_logits.data() + static_cast<std::size_t>(b) * m;
    double mx = row[0];
    for (int k = 1; k < m; ++k) mx = std::max(mx, row[k]);
    double sum = 0.0;
    for (int k = 0; k < m; ++k) sum += std::exp(row[k] - mx);
    for (int k = 0; k < m; ++k)
      dist.at(b, k) = std::exp(row[k] - mx) / sum;
  }
  return dist;
}

AttributePredictor train_attr_predictor(const DatasetManifest& manifest,
                                        const AttrPredictorOptions& opts) {
  // Sub-manifest of hard-labeled train records. Identities are re-indexed to
  // stay contiguous; the attribute space is inherited from the parent so the
  // predictor speaks the manifest's M classes.
  DatasetManifest sub;
  sub.name = manifest.name + "_hard";
  sub.base_dir = manifest.base_dir;
  for (const VehicleRecord& r : manifest.records) {
    if (r.split == Split::kTrain && r.orig_attribute && !r.attribute_is_soft)
      sub.records.push_back(r);
  }
  SAN_CHECK_CONFIG(!sub.records.empty(),
                   "no hard attribute labels to train the predictor on");
  finalize_manifest(sub);
  sub.attribute_map = manifest.attribute_map;
  sub.num_attributes = manifest.num_attributes;
  for (VehicleRecord& r : sub.records)
    r.attribute = manifest.attribute_map.at(*r.orig_attribute);

  ModelConfig config = opts.model;
  config.branch = Branch::kAttr;
  config.num_identities = sub.num_identities;
  config.num_attributes = sub.num_attributes;

  AttributePredictor predictor;
  predictor.prep = opts.prep;
  predictor.model = std::make_unique<SanModel>(config);
  Rng rng(opts.train.seed);
  predictor.model->init(rng);
  train_model(*predictor.model, sub, opts.prep, opts.train);
  return predictor;
}

DatasetManifest assign_soft_labels(const DatasetManifest& manifest,
                                   const AttributePredictor& predictor,
                                   std::vector<SoftLabelAudit>* audit) {
  SAN_CHECK_CONFIG(
      predictor.model->config().num_attributes == manifest.num_attributes,
      "predictor was trained for M=", predictor.model->config().num_attributes,
      " attributes but the manifest has M=", manifest.num_attributes);

  DatasetManifest out = manifest;
  std::vector<std::size_t> unlabeled;
  for (std::size_t i = 0; i < out.records.size(); ++i)
    if (!out.records[i].attribute) unlabeled.push_back(i);

  const int batch_size = 16;
  const int s = predictor.model->config().input_size;
  for (std::size_t start = 0; start < unlabeled.size();
       start += static_cast<std::size_t>(batch_size)) {
    const int bn = static_cast<int>(
        std::min<std::size_t>(batch_size, unlabeled.size() - start));
    Tensor batch({bn, s, s, 3});
    for (int b = 0; b < bn; ++b) {
      const VehicleRecord& r = out.records[unlabeled[start + b]];
      ImageTensor img =
          load_and_preprocess(out, r, predictor.prep, /*flip=*/false);
      std::copy(img.data.data(), img.data.data() + img.data.size(),
                batch.data() + static_cast<std::size_t>(b) * img.data.size());
    }
    Tensor dist = predictor.predict_distribution(batch);
    for (int b = 0; b < bn; ++b) {
      int best = 0;
      for (int k = 1; k < dist.dim(1); ++k)
        if (dist.at(b, k) > dist.at(b, best)) best = k;
      VehicleRecord& r = out.records[unlabeled[start + b]];
      r.attribute = best;
      r.orig_attribute = out.orig_attribute_for(best);
      r.attribute_is_soft = true;
      if (audit)
        audit->push_back({r.image_path, best, dist.at(b, best)});
    }
  }
  return out;
}

void write_softlabel_audit(const std::vector<SoftLabelAudit>& audit,
                           const std::string& path) {
  std::ofstream out(path);
  SAN_CHECK_DATA(out.good(), "cannot write audit ", path);
  for (const SoftLabelAudit& a : audit) {
    json j;
    j["path"] = a.path;
    j["predicted"] = a.predicted;
    j["confidence"] = a.confidence;
    out << j.dump() << "\n";
  }
}

}  // namespace san

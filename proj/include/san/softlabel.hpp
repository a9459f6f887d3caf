#pragma once

#include <memory>
#include <vector>

#include "san/datamodel.hpp"
#include "san/model.hpp"
#include "san/train.hpp"

namespace san {

// Attribute predictor: any model with an attribute head behind the backbone
// adapter. Trained jointly on identity and attribute cross-entropy over the
// hard-labeled subset of the train split.
struct AttributePredictor {
  std::unique_ptr<SanModel> model;
  PreprocessOptions prep;

  // Softmax over M attribute classes, one row per image; rows sum to 1.
  Tensor predict_distribution(const Tensor& image_batch) const;
};

struct AttrPredictorOptions {
  ModelConfig model;  // branch is forced to attr
  PreprocessOptions prep;
  TrainOptions train;
};

// Trains only on train records carrying a hard (non-soft) attribute label.
// The identity head covers the identities present in that subset; the
// attribute head covers the manifest's full M.
AttributePredictor train_attr_predictor(const DatasetManifest& manifest,
                                        const AttrPredictorOptions& opts);

struct SoftLabelAudit {
  std::string path;
  int predicted = 0;
  double confidence = 0.0;
};

// Every record lacking an attribute receives the predictor's argmax class
// with attribute_is_soft = true; existing labels are never touched. Returns
// a new manifest.
DatasetManifest assign_soft_labels(const DatasetManifest& manifest,
                                   const AttributePredictor& predictor,
                                   std::vector<SoftLabelAudit>* audit = nullptr);

void write_softlabel_audit(const std::vector<SoftLabelAudit>& audit,
                           const std::string& path);

}  // namespace san

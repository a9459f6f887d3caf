#pragma once

#include <string>

#include "san/datamodel.hpp"

namespace san {

// VehicleID directory convention:
//   image/<name>.jpg                       (".jpg" appended when absent)
//   train_test_split/train_list.txt        lines: "<name> <vehicle_id>"
//   train_test_split/test_list_<N>.txt     lines: "<name> <vehicle_id>"
//   attribute/model_attr.txt               lines: "<vehicle_id> <model_id>";
//                                          vehicles without a line carry no
//                                          model label
// The test list's first image of each identity becomes the gallery entry,
// the remaining images become probes, so gallery size equals the number of
// test identities. test_size in {800, 1600, 2400} selects the list.
DatasetManifest load_vehicleid(const std::string& root, int test_size,
                               const LoadOptions& opts = {});

// VeRi directory convention:
//   image_train/, image_test/, image_query/
//   name_train.txt, name_test.txt, name_query.txt  (one file name per line)
//   vehicle_type.txt                       optional, lines: "<vehicle_id>
//                                          <type_id>"
// Identities and camera ids are parsed from file names shaped
// "<id>_c<cam>_<...>.jpg". name_test entries become the gallery, name_query
// entries the probes.
DatasetManifest load_veri(const std::string& root, const LoadOptions& opts = {});

}  // namespace san

#ifndef DAC_DATASET_HPP
#define DAC_DATASET_HPP

#include <optional>
#include <string>
#include <vector>

#include "numcore.hpp"

namespace dac {

enum class Split { Train, Query, Target };

Split split_from_name(const std::string& name);
const char* split_name(Split s);

// One 3D object: M pre-extracted view-feature vectors plus an optional
// description-feature vector. Pixels are never ingested.
struct ObjectRecord {
    std::string id;
    std::string label;
    Split split = Split::Train;
    Mat views;  // M x input_dim
    std::optional<Vec> description;
};

struct OpenSetDataset {
    std::vector<ObjectRecord> train;
    std::vector<ObjectRecord> query;
    std::vector<ObjectRecord> target;
    std::vector<std::string> seen_labels;    // sorted, unique
    std::vector<std::string> unseen_labels;  // sorted, unique
    // map seen label -> raw class-description feature vector
    std::vector<std::pair<std::string, Vec>> class_descriptions;
    std::vector<std::string> warnings;
};

}  // namespace dac

#endif  // DAC_DATASET_HPP

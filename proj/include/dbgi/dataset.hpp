#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dbgi/latex.hpp"
#include "dbgi/tensor.hpp"

namespace dbgi {

// One training unit: a strictly binary {1, H, W} image paired with a token
// sequence framed by start/end ids.
struct Sample {
    Tensor image;
    std::vector<int> tokens;
    std::string label;

    std::vector<int> targets() const;  // body + end id: what the decoder must emit
};

struct DatasetSplit {
    std::vector<Sample> train;
    std::vector<Sample> val;
};

// Seeded shuffle, then the trailing fraction becomes validation. val_fraction
// 0 reuses the full set as validation.
DatasetSplit split_dataset(std::vector<Sample> samples, double val_fraction, std::uint64_t seed);

// On-disk cache: images as P5 PGM plus a UTF-8 manifest.tsv (filename, label).
void save_dataset(const std::vector<Sample>& samples, const std::string& dir);
std::vector<Sample> load_dataset(const std::string& dir, const Vocabulary& vocab);

// Every *.inkml under dir (sorted by filename), parsed and rasterized.
std::vector<Sample> load_inkml_dir(const std::string& dir, const Vocabulary& vocab,
                                   int target_height, int stroke_width);

}  // namespace dbgi

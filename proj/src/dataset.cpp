#include "dbgi/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dbgi/inkml.hpp"
#include "dbgi/pgm.hpp"
#include "dbgi/raster.hpp"
#include "dbgi/rng.hpp"

namespace dbgi {

namespace fs = std::filesystem;

std::vector<int> Sample::targets() const {
    if (tokens.size() < 2 || tokens.front() != Vocabulary::start_id ||
        tokens.back() != Vocabulary::end_id)
        throw ContractViolation("sample tokens must be framed by start/end ids");
    return std::vector<int>(tokens.begin() + 1, tokens.end());
}

DatasetSplit split_dataset(std::vector<Sample> samples, double val_fraction, std::uint64_t seed) {
    if (val_fraction < 0.0 || val_fraction >= 1.0)
        throw ContractViolation("val_fraction must be in [0, 1)");
    DatasetSplit split;
    if (val_fraction == 0.0) {
        split.val = samples;  // validate on the training set
        split.train = std::move(samples);
        return split;
    }
    std::vector<std::size_t> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng = Rng::derive(seed, 0x73706c69);
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[static_cast<std::size_t>(rng.below(i))]);
    const std::size_t val_count =
        std::max<std::size_t>(1, static_cast<std::size_t>(static_cast<double>(samples.size()) * val_fraction));
    for (std::size_t i = 0; i < order.size(); ++i) {
        if (i < order.size() - val_count)
            split.train.push_back(samples[order[i]]);
        else
            split.val.push_back(samples[order[i]]);
    }
    return split;
}

void save_dataset(const std::vector<Sample>& samples, const std::string& dir) {
    fs::create_directories(dir);
    std::ofstream manifest(fs::path(dir) / "manifest.tsv", std::ios::trunc);
    if (!manifest) throw IoError("cannot write manifest in " + dir);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const Sample& s = samples[i];
        std::ostringstream name;
        name << "sample_" << std::setw(6) << std::setfill('0') << i << ".pgm";
        PgmImage image;
        image.height = s.image.dim(1);
        image.width = s.image.dim(2);
        image.pixels.resize(static_cast<std::size_t>(image.width * image.height));
        for (std::size_t p = 0; p < image.pixels.size(); ++p)
            image.pixels[p] = s.image.data()[p] > 0.5 ? 255 : 0;
        write_pgm((fs::path(dir) / name.str()).string(), image);
        manifest << name.str() << '\t' << s.label << '\n';
    }
    if (!manifest) throw IoError("write failure on manifest in " + dir);
}

std::vector<Sample> load_dataset(const std::string& dir, const Vocabulary& vocab) {
    std::ifstream manifest(fs::path(dir) / "manifest.tsv");
    if (!manifest) throw IoError("cannot open manifest in " + dir);
    std::vector<Sample> samples;
    std::string line;
    while (std::getline(manifest, line)) {
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) throw IoError("manifest line without tab in " + dir);
        const std::string file = line.substr(0, tab);
        Sample s;
        s.label = line.substr(tab + 1);
        const PgmImage image = read_pgm((fs::path(dir) / file).string());
        std::vector<double> values(image.pixels.size());
        for (std::size_t p = 0; p < values.size(); ++p) values[p] = image.pixels[p] > 127 ? 1.0 : 0.0;
        s.image = Tensor::from_data({1, image.height, image.width}, std::move(values));
        s.tokens = tokenize_latex(s.label, vocab).ids;
        samples.push_back(std::move(s));
    }
    return samples;
}

std::vector<Sample> load_inkml_dir(const std::string& dir, const Vocabulary& vocab,
                                   int target_height, int stroke_width) {
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".inkml")
            files.push_back(entry.path());
    std::sort(files.begin(), files.end());

    std::vector<Sample> samples;
    for (const fs::path& file : files) {
        std::ifstream is(file);
        if (!is) throw IoError("cannot open: " + file.string());
        std::stringstream buffer;
        buffer << is.rdbuf();
        const InkDocument doc = parse_inkml(buffer.str(), file.filename().string());
        if (!doc.label || doc.label->empty())
            throw IoError(file.string() + ": no truth annotation");
        Sample s;
        s.label = *doc.label;
        s.image = rasterize(doc, target_height, stroke_width);
        s.tokens = tokenize_latex(s.label, vocab).ids;
        samples.push_back(std::move(s));
    }
    return samples;
}

}  // namespace dbgi

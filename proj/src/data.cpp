#include "imwa/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "imwa/errors.hpp"

namespace imwa {

void LongTailSpec::validate() const {
    if (num_classes < 2) {
        throw ConfigError("long-tail spec: num_classes must be >= 2");
    }
    if (head_count < 1) {
        throw ConfigError("long-tail spec: head_count must be >= 1");
    }
    if (!(imbalance_ratio >= 1.0) || !std::isfinite(imbalance_ratio)) {
        throw ConfigError("long-tail spec: imbalance_ratio must be a finite value >= 1");
    }
}

std::vector<std::size_t> class_counts(const LongTailSpec& spec) {
    spec.validate();
    const auto c_total = spec.num_classes;
    std::vector<std::size_t> counts(c_total);
    const double n1 = static_cast<double>(spec.head_count);
    for (std::size_t c = 0; c < c_total; ++c) {
        const double exponent = -static_cast<double>(c) / static_cast<double>(c_total - 1);
        const double value = n1 * std::pow(spec.imbalance_ratio, exponent);
        const long long rounded = std::llround(value);
        if (rounded < 1) {
            throw ConfigError("long-tail spec: class " + std::to_string(c) +
                              " rounds to zero samples; increase head_count or decrease "
                              "imbalance_ratio");
        }
        counts[c] = static_cast<std::size_t>(rounded);
    }
    return counts;
}

namespace {

// Seeded class means with a minimum pairwise separation. Means are drawn
// from a Gaussian cloud scaled to class_sep and redrawn point-wise until the
// separation floor holds; if a point keeps colliding the cloud is widened.
std::vector<double> place_class_means(std::size_t c_total, std::size_t d, double class_sep,
                                      Rng& rng) {
    std::vector<double> means(c_total * d);
    double scale = 0.75 * class_sep;
    const double min_sq = class_sep * class_sep;
    for (std::size_t c = 0; c < c_total;) {
        bool placed = false;
        for (int attempt = 0; attempt < 64; ++attempt) {
            for (std::size_t k = 0; k < d; ++k) {
                means[c * d + k] = scale * rng.normal();
            }
            bool ok = true;
            for (std::size_t p = 0; p < c && ok; ++p) {
                double dist_sq = 0.0;
                for (std::size_t k = 0; k < d; ++k) {
                    const double diff = means[c * d + k] - means[p * d + k];
                    dist_sq += diff * diff;
                }
                ok = dist_sq >= min_sq;
            }
            if (ok) {
                placed = true;
                break;
            }
        }
        if (placed) {
            ++c;
        } else {
            scale *= 1.5;
            c = 0;  // restart with a wider cloud, still fully seed-determined
        }
    }
    return means;
}

Dataset sample_blobs(const std::vector<std::size_t>& counts, const std::vector<double>& means,
                     std::size_t d, Rng& rng) {
    Dataset ds;
    ds.feature_dim = d;
    ds.class_counts.assign(counts.begin(), counts.end());
    const std::size_t total = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
    ds.features.reserve(total * d);
    ds.labels.reserve(total);
    for (std::size_t c = 0; c < counts.size(); ++c) {
        for (std::size_t i = 0; i < counts[c]; ++i) {
            for (std::size_t k = 0; k < d; ++k) {
                ds.features.push_back(means[c * d + k] + rng.normal());
            }
            ds.labels.push_back(static_cast<std::int32_t>(c));
        }
    }
    return ds;
}

}  // namespace

GeneratedData generate_gaussian_mixture(const LongTailSpec& spec, std::size_t feature_dim,
                                        double class_sep, std::uint64_t seed,
                                        std::size_t test_per_class) {
    spec.validate();
    if (feature_dim < 2) {
        throw ConfigError("gaussian mixture: feature_dim must be >= 2");
    }
    if (!(class_sep > 0.0)) {
        throw ConfigError("gaussian mixture: class_sep must be > 0");
    }
    const auto counts = class_counts(spec);

    Rng mean_rng = Rng::stream(seed, 0);
    Rng train_rng = Rng::stream(seed, 1);
    Rng test_rng = Rng::stream(seed, 2);

    GeneratedData out;
    out.class_means = place_class_means(spec.num_classes, feature_dim, class_sep, mean_rng);
    out.train = sample_blobs(counts, out.class_means, feature_dim, train_rng);
    const std::vector<std::size_t> test_counts(spec.num_classes, test_per_class);
    out.test = sample_blobs(test_counts, out.class_means, feature_dim, test_rng);
    return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) {
        fields.push_back(field);
    }
    if (!line.empty() && line.back() == ',') {
        fields.emplace_back();
    }
    return fields;
}

bool parse_double(const std::string& s, double& out) {
    const char* begin = s.data();
    const char* end = begin + s.size();
    while (begin < end && (*begin == ' ' || *begin == '\t')) {
        ++begin;
    }
    while (end > begin && (end[-1] == ' ' || end[-1] == '\t' || end[-1] == '\r')) {
        --end;
    }
    const auto [ptr, ec] = std::from_chars(begin, end, out);
    return ec == std::errc() && ptr == end && begin != end;
}

}  // namespace

Dataset ingest_csv(const std::string& path, int label_column) {
    std::ifstream in(path);
    if (!in) {
        throw DataError(path + ": cannot open");
    }
    Dataset ds;
    std::string line;
    std::size_t line_no = 0;
    bool first_data_row = true;
    std::size_t columns = 0;
    std::size_t label_idx = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || (line.size() == 1 && line[0] == '\r')) {
            continue;
        }
        const auto fields = split_csv_line(line);
        if (first_data_row) {
            columns = fields.size();
            if (columns < 2) {
                throw DataError(path + ":" + std::to_string(line_no) +
                                ": need at least one feature column and a label column");
            }
            const int idx = label_column < 0 ? static_cast<int>(columns) + label_column
                                             : label_column;
            if (idx < 0 || static_cast<std::size_t>(idx) >= columns) {
                throw DataError(path + ": label column " + std::to_string(label_column) +
                                " out of range for " + std::to_string(columns) + " columns");
            }
            label_idx = static_cast<std::size_t>(idx);
            // Optional header: if any field on the first row fails numeric
            // parsing, treat the row as a header and skip it.
            bool numeric = true;
            for (const auto& f : fields) {
                double unused;
                numeric = numeric && parse_double(f, unused);
            }
            first_data_row = false;
            if (!numeric) {
                continue;
            }
        }
        if (fields.size() != columns) {
            throw DataError(path + ":" + std::to_string(line_no) + ": expected " +
                            std::to_string(columns) + " fields, got " +
                            std::to_string(fields.size()));
        }
        for (std::size_t i = 0; i < fields.size(); ++i) {
            double v;
            if (!parse_double(fields[i], v)) {
                throw DataError(path + ":" + std::to_string(line_no) + ": field " +
                                std::to_string(i) + " ('" + fields[i] + "') is not numeric");
            }
            if (i == label_idx) {
                const double rounded = std::nearbyint(v);
                if (rounded != v || v < 0) {
                    throw DataError(path + ":" + std::to_string(line_no) +
                                    ": label must be a non-negative integer, got '" +
                                    fields[i] + "'");
                }
                ds.labels.push_back(static_cast<std::int32_t>(rounded));
            } else {
                ds.features.push_back(v);
            }
        }
    }
    if (ds.labels.empty()) {
        throw DataError(path + ": no data rows");
    }
    ds.feature_dim = columns - 1;

    const std::int32_t max_label = *std::max_element(ds.labels.begin(), ds.labels.end());
    ds.class_counts.assign(static_cast<std::size_t>(max_label) + 1, 0);
    for (const auto label : ds.labels) {
        ++ds.class_counts[static_cast<std::size_t>(label)];
    }
    std::string missing;
    for (std::size_t c = 0; c < ds.class_counts.size(); ++c) {
        if (ds.class_counts[c] == 0) {
            missing += missing.empty() ? "" : ", ";
            missing += std::to_string(c);
        }
    }
    if (!missing.empty()) {
        throw DataError(path + ": labels are not contiguous; missing classes: " + missing);
    }
    return ds;
}

void export_csv(const Dataset& dataset, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw DataError(path + ": cannot open for writing");
    }
    for (std::size_t k = 0; k < dataset.feature_dim; ++k) {
        out << 'f' << k << ',';
    }
    out << "label\n";
    char buf[64];
    for (std::size_t r = 0; r < dataset.size(); ++r) {
        for (std::size_t k = 0; k < dataset.feature_dim; ++k) {
            // %.17g round-trips doubles exactly
            std::snprintf(buf, sizeof buf, "%.17g", dataset.features[r * dataset.feature_dim + k]);
            out << buf << ',';
        }
        out << dataset.labels[r] << '\n';
    }
    if (!out) {
        throw DataError(path + ": write failed");
    }
}

LoaderState::LoaderState(std::size_t dataset_size, std::uint64_t seed, std::size_t batch)
    : rng(seed), cursor(0), batch_size(batch) {
    if (dataset_size == 0) {
        throw ConfigError("loader: empty dataset");
    }
    if (batch_size == 0 || batch_size > dataset_size) {
        throw ConfigError("loader: batch_size must be in [1, dataset size]");
    }
    order.resize(dataset_size);
    std::iota(order.begin(), order.end(), 0u);
    rng.shuffle(order);
}

Batch next_batch(const Dataset& dataset, LoaderState& state) {
    if (dataset.size() == 0) {
        throw ConfigError("loader: empty dataset");
    }
    if (dataset.size() != state.order.size()) {
        throw ConfigError("loader: state built for a different dataset size");
    }
    Batch batch;
    batch.rows = state.batch_size;
    batch.dim = dataset.feature_dim;
    batch.inputs.resize(batch.rows * batch.dim);
    batch.labels.resize(batch.rows);
    for (std::size_t i = 0; i < state.batch_size; ++i) {
        if (state.cursor == state.order.size()) {
            state.rng.shuffle(state.order);
            state.cursor = 0;
        }
        const std::size_t row = state.order[state.cursor++];
        const double* src = dataset.features.data() + row * dataset.feature_dim;
        std::copy(src, src + dataset.feature_dim, batch.inputs.begin() + i * batch.dim);
        batch.labels[i] = dataset.labels[row];
    }
    return batch;
}

}  // namespace imwa

#include "sface/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "doctest.h"
#include "sface/errors.hpp"
#include "sface/geometry.hpp"

using namespace sface;

namespace {

DatasetSpec base_spec() {
    DatasetSpec spec;
    spec.num_classes = 10;
    spec.per_class = 100;
    spec.dim = 16;
    spec.concentration = 120.0;
    spec.seed = 7;
    return spec;
}

// Mean angle between each clean sample and its class's empirical mean
// direction is not what we want here; the generator promises closeness
// to the class direction, which noise-free data exposes through the
// per-class sample mean.
std::vector<double> class_mean(const NoisyDataset& data, int label) {
    std::vector<double> mean(data.dim, 0.0);
    std::size_t count = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (data.true_labels[i] != label) continue;
        const auto row = data.row(i);
        for (std::size_t t = 0; t < data.dim; ++t) mean[t] += row[t];
        ++count;
    }
    for (double& v : mean) v /= static_cast<double>(count);
    return mean;
}

}  // namespace

TEST_CASE("noise-free generation leaves labels and mask clean") {
    const auto data = generate(base_spec());
    REQUIRE(data.size() == 1000);
    for (std::size_t i = 0; i < data.size(); ++i) {
        CHECK(data.true_labels[i] == data.given_labels[i]);
        CHECK(data.noise_mask[i] == 0);
    }
}

TEST_CASE("feature rows are unit vectors") {
    auto spec = base_spec();
    spec.flip_rate = 0.1;
    spec.outlier_rate = 0.1;
    const auto data = generate(spec);
    for (std::size_t i = 0; i < data.size(); ++i) {
        CHECK(std::abs(norm(data.row(i)) - 1.0) <= 1e-12);
    }
}

TEST_CASE("noise counts and semantics") {
    auto spec = base_spec();
    spec.flip_rate = 0.1;
    spec.outlier_rate = 0.1;
    const auto data = generate(spec);

    std::size_t masked = 0, flipped = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (data.noise_mask[i]) ++masked;
        if (data.given_labels[i] != data.true_labels[i]) {
            ++flipped;
            CHECK(data.noise_mask[i] == 1);
        }
    }
    // round(0.2 * 1000) masked samples within +/-1.
    CHECK(masked >= 199);
    CHECK(masked <= 201);
    // Outliers keep given == true, so flips are the only label changes.
    CHECK(flipped >= 99);
    CHECK(flipped <= 101);
}

TEST_CASE("high concentration collapses clusters onto their directions") {
    auto spec = base_spec();
    spec.concentration = 1e6;
    spec.per_class = 50;
    const auto data = generate(spec);
    for (std::size_t j = 0; j < spec.num_classes; ++j) {
        const auto mean = class_mean(data, static_cast<int>(j));
        double worst = 0.0;
        for (std::size_t i = 0; i < data.size(); ++i) {
            if (data.true_labels[i] != static_cast<int>(j)) continue;
            worst = std::max(worst, cosine_angle(data.row(i), mean).theta);
        }
        CHECK(worst < 1.0 * 3.14159265 / 180.0);  // below one degree
    }
}

TEST_CASE("class directions are separated") {
    // Pairwise cosine of per-class means stays below the 0.95 rejection
    // bound (means approximate the underlying directions tightly at high
    // concentration).
    auto spec = base_spec();
    spec.concentration = 1e6;
    spec.per_class = 20;
    spec.num_classes = 12;
    spec.dim = 4;  // low dimension forces the rejection path to matter
    const auto data = generate(spec);
    for (std::size_t a = 0; a < spec.num_classes; ++a) {
        for (std::size_t b = a + 1; b < spec.num_classes; ++b) {
            const auto ma = class_mean(data, static_cast<int>(a));
            const auto mb = class_mean(data, static_cast<int>(b));
            CHECK(cosine_angle(ma, mb).cosine < 0.955);
        }
    }
}

TEST_CASE("generation is bitwise deterministic per seed") {
    auto spec = base_spec();
    spec.flip_rate = 0.05;
    spec.outlier_rate = 0.05;
    const auto a = generate(spec);
    const auto b = generate(spec);
    CHECK(a.features == b.features);
    CHECK(a.given_labels == b.given_labels);
    CHECK(a.noise_mask == b.noise_mask);

    spec.seed = 8;
    const auto c = generate(spec);
    CHECK(a.features != c.features);
}

TEST_CASE("spec validation") {
    auto spec = base_spec();
    spec.flip_rate = 0.6;
    spec.outlier_rate = 0.5;
    CHECK_THROWS_AS(generate(spec), InvalidSpec);
    spec = base_spec();
    spec.num_classes = 1;
    CHECK_THROWS_AS(generate(spec), InvalidSpec);
    spec = base_spec();
    spec.dim = 1;
    CHECK_THROWS_AS(generate(spec), InvalidSpec);
    spec = base_spec();
    spec.concentration = 0.0;
    CHECK_THROWS_AS(generate(spec), InvalidSpec);
}

TEST_CASE("dataset CSV layout") {
    auto spec = base_spec();
    spec.num_classes = 2;
    spec.per_class = 2;
    spec.dim = 3;
    const auto data = generate(spec);
    std::ostringstream out;
    write_dataset_csv(out, data);
    const std::string text = out.str();
    CHECK(text.rfind("index,true_label,given_label,is_noise,f0,f1,f2\n", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 5);
}

TEST_CASE("as_batch exposes the training view") {
    auto spec = base_spec();
    spec.flip_rate = 0.2;
    const auto data = generate(spec);
    const EmbeddingBatch batch = data.as_batch();
    CHECK(batch.n == data.size());
    CHECK(batch.labels == data.given_labels);
    CHECK(batch.features == data.features);
}

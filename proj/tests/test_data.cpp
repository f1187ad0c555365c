#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "psl/data.hpp"
#include "psl/errors.hpp"
#include "psl/pnm.hpp"
#include "support/test_util.hpp"

using namespace psl;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("pnm P5 read") {
    TempDir dir("psl-pnm-p5");
    const fs::path file = dir.path / "t.pgm";
    {
        std::ofstream out(file, std::ios::binary);
        out << "P5\n# comment\n2 2\n255\n";
        const unsigned char bytes[4] = {0, 128, 255, 64};
        out.write(reinterpret_cast<const char*>(bytes), 4);
    }
    Tensor img = read_pnm(file.string());
    CHECK(img.shape() == Shape{1, 2, 2});
    CHECK(img[0] == 0.0);
    CHECK(img[1] == 128.0 / 255.0);
    CHECK(img[2] == 1.0);
    CHECK(img[3] == 64.0 / 255.0);
}

TEST_CASE("pnm P6 read") {
    TempDir dir("psl-pnm-p6");
    const fs::path file = dir.path / "t.ppm";
    {
        std::ofstream out(file, std::ios::binary);
        out << "P6\n1 1\n255\n";
        const unsigned char bytes[3] = {255, 0, 0};
        out.write(reinterpret_cast<const char*>(bytes), 3);
    }
    Tensor img = read_pnm(file.string());
    CHECK(img.shape() == Shape{3, 1, 1});
    CHECK(img[0] == 1.0);
    CHECK(img[1] == 0.0);
    CHECK(img[2] == 0.0);
}

TEST_CASE("pnm round trip is exact for 8-bit data") {
    TempDir dir("psl-pnm-rt");
    Rng rng(3);
    std::vector<double> d(3 * 6 * 5);
    for (auto& v : d) v = rng.uniform_int(256) / 255.0;
    Tensor img = Tensor::from_data({3, 6, 5}, d);
    const std::string path = (dir.path / "rt.ppm").string();
    write_pnm(path, img);
    Tensor back = read_pnm(path);
    CHECK(back.shape() == img.shape());
    CHECK(testutil::max_abs_diff(back.data(), img.data()) == 0.0);

    // byte-identical when rewritten
    const std::string path2 = (dir.path / "rt2.ppm").string();
    write_pnm(path2, back);
    CHECK(slurp(path) == slurp(path2));
}

TEST_CASE("pnm errors") {
    TempDir dir("psl-pnm-err");
    const fs::path bad_magic = dir.path / "bad.pgm";
    std::ofstream(bad_magic, std::ios::binary) << "P4\n1 1\n255\n ";
    CHECK_THROWS_AS(read_pnm(bad_magic.string()), IoError);

    const fs::path truncated = dir.path / "trunc.pgm";
    std::ofstream(truncated, std::ios::binary) << "P5\n4 4\n255\nab";
    CHECK_THROWS_AS(read_pnm(truncated.string()), IoError);

    const fs::path maxval = dir.path / "maxval.pgm";
    std::ofstream(maxval, std::ios::binary) << "P5\n1 1\n65535\n  ";
    CHECK_THROWS_AS(read_pnm(maxval.string()), IoError);

    CHECK_THROWS_AS(read_pnm((dir.path / "missing.pgm").string()), IoError);
}

TEST_CASE("mask pgm stores raw class indices") {
    TempDir dir("psl-mask");
    Tensor mask = Tensor::from_data({2, 3}, {0, 1, 2, 9, 4, 3});
    const std::string path = (dir.path / "m.pgm").string();
    write_mask_pgm(path, mask);
    Tensor back = read_mask_pgm(path);
    CHECK(back.shape() == mask.shape());
    CHECK(testutil::max_abs_diff(back.data(), mask.data()) == 0.0);
    CHECK_THROWS_AS(write_mask_pgm(path, Tensor::from_data({1, 1}, {0.5})), std::invalid_argument);
}

TEST_CASE("manifest round trip") {
    TempDir dir("psl-manifest-rt");
    DataBundle bundle;
    bundle.task = Task::classification;
    bundle.train = gen_synthetic_classification(6, 0.5, 8, 42, true, "train");
    Dataset unl = gen_synthetic_classification(3, 0.5, 8, 43, false, "unl");
    for (auto& s : unl.samples) bundle.train.samples.push_back(std::move(s));
    bundle.val = gen_synthetic_classification(2, 0.5, 8, 44, true, "val");
    bundle.val.split = Split::val;
    bundle.test = gen_synthetic_classification(2, 0.5, 8, 45, true, "test");
    bundle.test.split = Split::test;

    const std::string manifest = save_dataset(bundle, dir.path.string());
    DataBundle loaded = load_manifest(manifest);
    CHECK(loaded.task == Task::classification);
    CHECK(loaded.train.size() == 9);
    CHECK(loaded.val.size() == 2);
    CHECK(loaded.test.size() == 2);
    CHECK(loaded.train.labeled_indices().size() == 6);
    CHECK(loaded.train.unlabeled_indices().size() == 3);

    // 8-bit images survive losslessly because the generators are re-read
    // through the same quantization
    for (size_t i = 0; i < bundle.train.samples.size(); ++i) {
        const auto& orig = bundle.train.samples[i];
        const auto& back = loaded.train.samples[i];
        CHECK(orig.id == back.id);
        CHECK(orig.labeled == back.labeled);
        CHECK(orig.label == back.label);
        // quantize original to 8 bits, then compare exactly
        for (size_t j = 0; j < orig.image.data().size(); ++j) {
            const double q = std::floor(orig.image.data()[j] * 255.0 + 0.5) / 255.0;
            CHECK(back.image.data()[j] == q);
        }
    }
}

TEST_CASE("segmentation manifest round trip keeps masks exact") {
    TempDir dir("psl-manifest-seg");
    DataBundle bundle;
    bundle.task = Task::segmentation;
    bundle.n_classes = 5;
    bundle.train = gen_synthetic_segmentation(4, 5, 8, 7, true, "train");
    bundle.val = gen_synthetic_segmentation(2, 5, 8, 8, true, "val");
    bundle.val.split = Split::val;

    const std::string manifest = save_dataset(bundle, dir.path.string());
    DataBundle loaded = load_manifest(manifest);
    CHECK(loaded.task == Task::segmentation);
    CHECK(loaded.n_classes == 5);
    for (size_t i = 0; i < bundle.train.samples.size(); ++i) {
        CHECK(testutil::max_abs_diff(loaded.train.samples[i].mask->data(),
                                     bundle.train.samples[i].mask->data()) == 0.0);
    }
}

TEST_CASE("manifest format handling") {
    TempDir dir("psl-manifest-fmt");
    // 3-row manifest: 2 labeled, 1 unlabeled
    Tensor img = Tensor::full({3, 4, 4}, 0.5);
    write_pnm((dir.path / "a.ppm").string(), img);
    write_pnm((dir.path / "b.ppm").string(), img);
    write_pnm((dir.path / "c.ppm").string(), img);
    const fs::path manifest = dir.path / "manifest.csv";
    std::ofstream(manifest) << "id,split,image,label,mask,labeled\n"
                               "a,train,a.ppm,1,,1\n"
                               "b,train,b.ppm,0,,1\n"
                               "c,train,c.ppm,,,0\n";
    DataBundle bundle = load_manifest(manifest.string());
    CHECK(bundle.train.size() == 3);
    CHECK(bundle.train.samples[0].labeled);
    CHECK(bundle.train.samples[1].labeled);
    CHECK_FALSE(bundle.train.samples[2].labeled);

    // empty manifest is fine
    const fs::path empty = dir.path / "empty.csv";
    std::ofstream(empty) << "id,split,image,label,mask,labeled\n";
    DataBundle none = load_manifest(empty.string());
    CHECK(none.train.size() == 0);
    CHECK(none.val.size() == 0);

    // missing image names the row
    const fs::path missing = dir.path / "missing.csv";
    std::ofstream(missing) << "id,split,image,label,mask,labeled\n"
                              "a,train,a.ppm,1,,1\n"
                              "x,train,nope.ppm,0,,1\n";
    try {
        load_manifest(missing.string());
        CHECK(false);
    } catch (const IoError& e) {
        CHECK(std::string(e.what()).find("row 3") != std::string::npos);
    }

    // unlabeled sample in val split is rejected
    const fs::path badval = dir.path / "badval.csv";
    std::ofstream(badval) << "id,split,image,label,mask,labeled\n"
                             "a,val,a.ppm,,,0\n";
    CHECK_THROWS_AS(load_manifest(badval.string()), IoError);

    // duplicate ids are rejected
    const fs::path dup = dir.path / "dup.csv";
    std::ofstream(dup) << "id,split,image,label,mask,labeled\n"
                          "a,train,a.ppm,1,,1\n"
                          "a,train,b.ppm,0,,1\n";
    CHECK_THROWS_AS(load_manifest(dup.string()), IoError);
}

TEST_CASE("classification generator statistics") {
    // n = 398 at the training positive fraction gives 51 positives
    Dataset ds = gen_synthetic_classification(398, 51.0 / 398.0, 8, 1);
    int positives = 0;
    for (const auto& s : ds.samples) positives += *s.label == 1;
    CHECK(positives == 51);

    // determinism
    Dataset a = gen_synthetic_classification(5, 0.4, 8, 9);
    Dataset b = gen_synthetic_classification(5, 0.4, 8, 9);
    for (size_t i = 0; i < a.samples.size(); ++i) {
        CHECK(testutil::max_abs_diff(a.samples[i].image.data(), b.samples[i].image.data()) == 0.0);
    }

    CHECK_THROWS_AS(gen_synthetic_classification(4, 0.0, 8, 1), std::invalid_argument);
}

TEST_CASE("classification task is learnable by a blue-mean threshold") {
    Dataset ds = gen_synthetic_classification(1000, 0.3, 16, 77);
    std::vector<std::pair<double, int>> scored;
    for (const auto& s : ds.samples) {
        const auto d = s.image.data();
        const size_t hw = 16 * 16;
        double blue = 0.0;
        for (size_t i = 0; i < hw; ++i) blue += d[2 * hw + i];
        scored.emplace_back(blue / static_cast<double>(hw), *s.label);
    }
    // best threshold over the scored means
    std::sort(scored.begin(), scored.end());
    int best_correct = 0;
    for (size_t cut = 0; cut <= scored.size(); ++cut) {
        int correct = 0;
        for (size_t i = 0; i < scored.size(); ++i) {
            const int pred = i >= cut ? 1 : 0;
            correct += pred == scored[i].second;
        }
        best_correct = std::max(best_correct, correct);
    }
    CHECK(best_correct > 900);  // > 90% accuracy
}

TEST_CASE("segmentation generator statistics") {
    Dataset ds = gen_synthetic_segmentation(100, 10, 16, 5);
    std::vector<int64_t> hist(10, 0);
    int64_t total = 0;
    for (const auto& s : ds.samples) {
        for (double v : s.mask->data()) {
            CHECK(v >= 0.0);
            CHECK(v <= 9.0);
            ++hist[static_cast<size_t>(v)];
            ++total;
        }
    }
    CHECK(static_cast<double>(hist[0]) / static_cast<double>(total) > 0.5);
    for (int c = 1; c < 10; ++c) {
        CHECK(static_cast<double>(hist[static_cast<size_t>(c)]) / static_cast<double>(total) > 0.005);
    }

    Dataset a = gen_synthetic_segmentation(4, 4, 8, 3);
    Dataset b = gen_synthetic_segmentation(4, 4, 8, 3);
    for (size_t i = 0; i < a.samples.size(); ++i) {
        CHECK(testutil::max_abs_diff(a.samples[i].mask->data(), b.samples[i].mask->data()) == 0.0);
    }
    CHECK_THROWS_AS(gen_synthetic_segmentation(4, 1, 8, 1), std::invalid_argument);
}

TEST_CASE("weighted sampler balances a 51/347 split") {
    Dataset ds;
    ds.task = Task::classification;
    for (int i = 0; i < 398; ++i) {
        Sample s;
        s.id = "s" + std::to_string(i);
        s.labeled = true;
        s.label = i < 51 ? 1 : 0;
        ds.samples.push_back(std::move(s));
    }
    WeightedSampler sampler = WeightedSampler::balanced_by_class(ds, 2, 99);
    int64_t flooded = 0, total = 0;
    for (int b = 0; b < 100; ++b) {
        for (int idx : sampler.sample_batch(100)) {
            flooded += *ds.samples[static_cast<size_t>(idx)].label == 1;
            ++total;
        }
    }
    const double frac = static_cast<double>(flooded) / static_cast<double>(total);
    CHECK(frac > 0.47);
    CHECK(frac < 0.53);

    // chi^2 against the uniform class split, 1 dof, 99.9% critical value
    const double expect = static_cast<double>(total) / 2.0;
    const double chi2 = (flooded - expect) * (flooded - expect) / expect +
                        ((total - flooded) - expect) * ((total - flooded) - expect) / expect;
    CHECK(chi2 < 10.828);
}

TEST_CASE("sampler rejects a missing class") {
    Dataset ds;
    for (int i = 0; i < 5; ++i) {
        Sample s;
        s.id = "s" + std::to_string(i);
        s.labeled = true;
        s.label = 0;
        ds.samples.push_back(std::move(s));
    }
    CHECK_THROWS_AS(WeightedSampler::balanced_by_class(ds, 2, 1), std::invalid_argument);
    CHECK_THROWS_AS(WeightedSampler({}, 1), std::invalid_argument);
    CHECK_THROWS_AS(WeightedSampler({0.0, 0.0}, 1), std::invalid_argument);
}

TEST_CASE("sampler never draws zero-weight samples") {
    WeightedSampler sampler({0.0, 1.0, 0.0, 2.0}, 5);
    for (int idx : sampler.sample_batch(1000)) {
        CHECK((idx == 1 || idx == 3));
    }
}

TEST_CASE("unlabeled subsampling") {
    CHECK(subsample_unlabeled(1047, 10, 1).size() == 105);
    CHECK(subsample_unlabeled(5, 10, 1).size() == 1);

    const auto a = subsample_unlabeled(100, 10, 42);
    const auto b = subsample_unlabeled(100, 10, 42);
    CHECK(a == b);
    const auto c = subsample_unlabeled(100, 10, 43);
    CHECK(a != c);

    // indices are distinct and in range
    const auto big = subsample_unlabeled(50, 2, 7);
    CHECK(big.size() == 25);
    for (size_t i = 1; i < big.size(); ++i) CHECK(big[i] > big[i - 1]);
    CHECK(big.front() >= 0);
    CHECK(big.back() < 50);
}

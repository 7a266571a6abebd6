#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <set>
#include <vector>

#include "fedskew/dataset.hpp"
#include "fedskew/errors.hpp"
#include "fedskew/model.hpp"
#include "fedskew/rng.hpp"

using namespace fedskew;

namespace {

LabeledDataset tiny_dataset() {
    LabeledDataset d;
    d.num_classes = 3;
    d.feature_dim = 2;
    d.features = {0.0, 0.1, 1.0, 1.1, 2.0, 2.1, 3.0, 3.1};
    d.labels = {0, 1, 2, 1};
    return d;
}

ClassDistribution dist_of(std::vector<double> probs) {
    ClassDistribution d;
    d.probs = std::move(probs);
    return d;
}

ClassDistribution random_distribution(Rng& rng, int classes) {
    std::vector<double> p(classes);
    double total = 0.0;
    for (double& v : p) {
        v = rng.uniform01() + 1e-3;
        total += v;
    }
    for (double& v : p) v /= total;
    return dist_of(std::move(p));
}

} // namespace

TEST_CASE("subset keeps rows in the requested order") {
    LabeledDataset d = tiny_dataset();
    std::vector<int64_t> idx{2, 0};
    LabeledDataset s = d.subset(idx);
    CHECK(s.size() == 2);
    CHECK(s.labels == std::vector<int>{2, 0});
    CHECK(s.features == std::vector<double>{2.0, 2.1, 0.0, 0.1});
    CHECK(s.num_classes == 3);
    CHECK(s.feature_dim == 2);
}

TEST_CASE("subset rejects out-of-range rows") {
    LabeledDataset d = tiny_dataset();
    std::vector<int64_t> bad{4};
    CHECK_THROWS_AS((void)d.subset(bad), DataError);
    std::vector<int64_t> neg{-1};
    CHECK_THROWS_AS((void)d.subset(neg), DataError);
}

TEST_CASE("append concatenates and checks shape") {
    LabeledDataset d = tiny_dataset();
    LabeledDataset e = tiny_dataset();
    d.append(e);
    CHECK(d.size() == 8);
    CHECK(d.labels[4] == 0);
    CHECK(d.example(5)[0] == 1.0);

    LabeledDataset wrong = tiny_dataset();
    wrong.feature_dim = 3;
    wrong.features.resize(12);
    CHECK_THROWS_AS(d.append(wrong), ShapeError);

    LabeledDataset other_classes = tiny_dataset();
    other_classes.num_classes = 4;
    CHECK_THROWS_AS(d.append(other_classes), ShapeError);
}

TEST_CASE("validate flags broken datasets") {
    LabeledDataset d = tiny_dataset();
    CHECK_NOTHROW(validate(d));

    LabeledDataset bad_label = d;
    bad_label.labels[1] = 3;
    CHECK_THROWS_AS(validate(bad_label), DataError);
    bad_label.labels[1] = -1;
    CHECK_THROWS_AS(validate(bad_label), DataError);

    LabeledDataset bad_feature = d;
    bad_feature.features[0] = std::nan("");
    CHECK_THROWS_AS(validate(bad_feature), DataError);

    LabeledDataset bad_shape = d;
    bad_shape.features.pop_back();
    CHECK_THROWS_AS(validate(bad_shape), ShapeError);
}

TEST_CASE("empirical_distribution and class_counts agree") {
    LabeledDataset d = tiny_dataset();
    std::vector<int> counts = class_counts(d);
    CHECK(counts == std::vector<int>{1, 2, 1});

    ClassDistribution p = empirical_distribution(d);
    REQUIRE(p.size() == 3);
    CHECK(p.probs[0] == doctest::Approx(0.25));
    CHECK(p.probs[1] == doctest::Approx(0.5));
    CHECK(p.probs[2] == doctest::Approx(0.25));

    LabeledDataset empty;
    empty.num_classes = 3;
    empty.feature_dim = 2;
    CHECK_THROWS_AS((void)empirical_distribution(empty), DataError);
}

TEST_CASE("emd matches hand-computed values") {
    // identical distributions
    ClassDistribution u = uniform_distribution(10);
    CHECK(emd(u, u) == 0.0);

    // one-hot vs uniform over 10 classes: |1 - 0.1| + 9 * 0.1 = 1.8
    std::vector<double> onehot(10, 0.0);
    onehot[3] = 1.0;
    CHECK(emd(dist_of(onehot), u) == doctest::Approx(1.8).epsilon(1e-12));

    // two-class split vs uniform over 10: 2*|0.5-0.1| + 8*0.1 = 1.6
    std::vector<double> two(10, 0.0);
    two[0] = 0.5;
    two[1] = 0.5;
    CHECK(emd(dist_of(two), u) == doctest::Approx(1.6).epsilon(1e-12));

    CHECK_THROWS_AS((void)emd(u, uniform_distribution(9)), ShapeError);
}

TEST_CASE("emd is a metric on random distributions") {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        ClassDistribution p = random_distribution(rng, 6);
        ClassDistribution q = random_distribution(rng, 6);
        ClassDistribution r = random_distribution(rng, 6);
        CHECK(emd(p, q) == doctest::Approx(emd(q, p)).epsilon(1e-12));
        CHECK(emd(p, q) >= 0.0);
        CHECK(emd(p, r) <= emd(p, q) + emd(q, r) + 1e-12);
    }
}

TEST_CASE("shift_distribution rotates cyclically") {
    ClassDistribution d = dist_of({0.5, 0.3, 0.2});
    ClassDistribution s1 = shift_distribution(d, 1);
    CHECK(s1.probs == std::vector<double>{0.2, 0.5, 0.3});
    CHECK(shift_distribution(d, 0).probs == d.probs);
    CHECK(shift_distribution(d, 3).probs == d.probs);

    // averaging all C cyclic shifts recovers the uniform distribution
    std::vector<double> mean(3, 0.0);
    for (int by = 0; by < 3; ++by) {
        ClassDistribution s = shift_distribution(d, by);
        for (int i = 0; i < 3; ++i) mean[i] += s.probs[i] / 3.0;
    }
    for (double v : mean) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("target_emd_interpolant closed form") {
    // target 0 is uniform, the maximum 2(1-1/C) is the one-hot itself
    ClassDistribution at0 = target_emd_interpolant(0.0, 10, 4);
    for (double v : at0.probs) CHECK(v == doctest::Approx(0.1).epsilon(1e-12));

    ClassDistribution atmax = target_emd_interpolant(1.8, 10, 4);
    CHECK(atmax.probs[4] == doctest::Approx(1.0).epsilon(1e-12));

    // halfway: t = 0.9/1.8 = 0.5, hot = 0.5*0.1 + 0.5 = 0.55, rest 0.05
    ClassDistribution mid = target_emd_interpolant(0.9, 10, 2);
    CHECK(mid.probs[2] == doctest::Approx(0.55).epsilon(1e-12));
    for (int i = 0; i < 10; ++i) {
        if (i != 2) CHECK(mid.probs[i] == doctest::Approx(0.05).epsilon(1e-12));
    }
    CHECK(emd(mid, uniform_distribution(10)) == doctest::Approx(0.9).epsilon(1e-12));

    CHECK_THROWS_AS((void)target_emd_interpolant(-0.1, 10, 0), DataError);
    CHECK_THROWS_AS((void)target_emd_interpolant(1.81, 10, 0), DataError);
    CHECK_THROWS_AS((void)target_emd_interpolant(0.5, 10, 10), DataError);
}

TEST_CASE("gen_target_emd_distribution hits the target and varies by seed") {
    ClassDistribution u = uniform_distribution(10);
    for (double target : {0.0, 0.36, 0.72, 1.08, 1.44, 1.62, 1.8}) {
        for (uint64_t seed : {1ull, 2ull, 3ull, 4ull, 5ull}) {
            ClassDistribution d = gen_target_emd_distribution(target, 10, seed);
            REQUIRE(d.size() == 10);
            double total = 0.0;
            for (double v : d.probs) {
                CHECK(v >= 0.0);
                total += v;
            }
            CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
            CHECK(std::abs(emd(d, u) - target) <= 1e-6);
        }
    }

    // distinct seeds must give distinct distributions away from the endpoints
    ClassDistribution a = gen_target_emd_distribution(0.9, 10, 1);
    ClassDistribution b = gen_target_emd_distribution(0.9, 10, 2);
    CHECK(a.probs != b.probs);
    CHECK(gen_target_emd_distribution(0.9, 10, 1).probs == a.probs);

    CHECK_THROWS_AS((void)gen_target_emd_distribution(2.0, 10, 1), DataError);
}

TEST_CASE("gen_synthetic layout, balance and determinism") {
    LabeledDataset d = gen_synthetic(4, 6, 25, 3.0, 99);
    CHECK(d.size() == 100);
    CHECK(d.num_classes == 4);
    CHECK(d.feature_dim == 6);
    CHECK(class_counts(d) == std::vector<int>{25, 25, 25, 25});
    // class-by-class layout
    for (int i = 0; i < 100; ++i) CHECK(d.labels[i] == i / 25);
    CHECK_NOTHROW(validate(d));

    LabeledDataset again = gen_synthetic(4, 6, 25, 3.0, 99);
    CHECK(again.features == d.features);
    CHECK(again.labels == d.labels);

    LabeledDataset other = gen_synthetic(4, 6, 25, 3.0, 100);
    CHECK(other.features != d.features);

    CHECK_THROWS_AS((void)gen_synthetic(0, 6, 25, 3.0, 1), ConfigError);
    CHECK_THROWS_AS((void)gen_synthetic(4, 0, 25, 3.0, 1), ConfigError);
    CHECK_THROWS_AS((void)gen_synthetic(4, 6, 0, 3.0, 1), ConfigError);
    CHECK_THROWS_AS((void)gen_synthetic(4, 6, 25, -1.0, 1), ConfigError);
}

TEST_CASE("gen_synthetic blobs are separable by a small classifier") {
    // full-batch gradient descent on a linear softmax should crack
    // well-separated blobs quickly
    LabeledDataset d = gen_synthetic(4, 8, 50, 6.0, 7);
    ModelParams w = init_params({8, 4}, 11, 0.1);
    for (int step = 0; step < 200; ++step) {
        LossGrad lg = loss_and_grad(w, d);
        apply_sgd_step(w, lg.grad, 0.5);
    }
    CHECK(evaluate(w, d) >= 0.95);
}

TEST_CASE("stratified_split holds out round(fraction * count) per class") {
    LabeledDataset d = gen_synthetic(3, 4, 40, 2.0, 13);
    auto [rest, held] = stratified_split(d, 0.25, 21);
    CHECK(held.size() == 3u * 10u);
    CHECK(rest.size() == 3u * 30u);

    // disjoint and exhaustive
    std::vector<int64_t> all;
    all.insert(all.end(), rest.begin(), rest.end());
    all.insert(all.end(), held.begin(), held.end());
    std::sort(all.begin(), all.end());
    std::vector<int64_t> want(d.size());
    std::iota(want.begin(), want.end(), 0);
    CHECK(all == want);

    // per-class held-out counts
    LabeledDataset held_data = d.subset(held);
    CHECK(class_counts(held_data) == std::vector<int>{10, 10, 10});

    // deterministic in the seed
    auto [rest2, held2] = stratified_split(d, 0.25, 21);
    CHECK(rest2 == rest);
    CHECK(held2 == held);
    auto [rest3, held3] = stratified_split(d, 0.25, 22);
    CHECK(held3 != held);

    CHECK_THROWS_AS((void)stratified_split(d, -0.1, 1), ConfigError);
    CHECK_THROWS_AS((void)stratified_split(d, 1.1, 1), ConfigError);
}

TEST_CASE("make_shard records provenance and distribution") {
    LabeledDataset d = tiny_dataset();
    ClientShard s = make_shard(3, d, {1, 3});
    CHECK(s.client_id == 3);
    CHECK(s.n == 2);
    CHECK(s.data.labels == std::vector<int>{1, 1});
    CHECK(s.indices == std::vector<int64_t>{1, 3});
    CHECK(s.dist.probs[1] == doctest::Approx(1.0));

    std::vector<ClientShard> shards{make_shard(0, d, {0, 1}), make_shard(1, d, {2, 3})};
    LabeledDataset pooled = pool_shards(shards);
    CHECK(pooled.size() == 4);
    CHECK(pooled.labels == std::vector<int>{0, 1, 2, 1});
}

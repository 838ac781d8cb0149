#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

#include "mtdrive/errors.hpp"
#include "mtdrive/policy.hpp"
#include "mtdrive/rng.hpp"

using namespace mtdrive;

namespace {

PolicyConfig small_config() {
    PolicyConfig cfg;
    cfg.feature_dim = 12;
    cfg.embed_dim = 6;
    cfg.hidden_dim = 16;
    cfg.codec.lateral_bins = 3;
    cfg.codec.lateral_min = -1.5;
    cfg.codec.lateral_max = 1.5;
    cfg.codec.longitudinal_bins = 3;
    cfg.codec.longitudinal_min = 0.0;
    cfg.codec.longitudinal_max = 4.0;
    return cfg;
}

std::vector<double> random_features(SplitMix64& rng, int n) {
    std::vector<double> f;
    f.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        f.push_back(rng.next_range(-1.0, 1.0));
    }
    return f;
}

// Forward-integrated smooth trajectory within the default codec's reach.
Trajectory random_smooth_trajectory(SplitMix64& rng) {
    Trajectory traj;
    double heading = 0.0;
    double speed = rng.next_range(2.0, 10.0);
    Vec2 pos{0, 0};
    std::array<Vec2, kTrajectoryPoints> pts;
    for (int k = 0; k < kTrajectoryPoints; ++k) {
        speed = std::clamp(speed + rng.next_range(-1.2, 1.2), 1.0, 11.0);
        heading += rng.next_range(-0.06, 0.06);
        pos = pos + Vec2{std::cos(heading), std::sin(heading)} * (speed * kTrajectoryDt);
        pts[static_cast<std::size_t>(k)] = pos;
    }
    double h = 0.0;
    for (int k = 0; k < kTrajectoryPoints; ++k) {
        if (k + 1 < kTrajectoryPoints) {
            const Vec2 d = pts[static_cast<std::size_t>(k + 1)] - pts[static_cast<std::size_t>(k)];
            h = std::atan2(d.y, d.x);
        }
        traj.points[static_cast<std::size_t>(k)] =
            Pose2D{pts[static_cast<std::size_t>(k)].x, pts[static_cast<std::size_t>(k)].y, h};
    }
    return traj;
}

}  // namespace

TEST_CASE("token codec: vocabulary layout") {
    TokenCodec codec;
    CHECK(codec.vocab_size() == 82);
    CHECK(codec.terminator_id() == 81);
    CHECK(codec.lateral_value(4) == doctest::Approx(0.0));
    CHECK(codec.longitudinal_value(4) == doctest::Approx(3.0));
    CHECK(codec.lateral_value(0) == doctest::Approx(-3.0));
    CHECK(codec.longitudinal_value(8) == doctest::Approx(6.0));
}

TEST_CASE("decode: straight-line composition and failure cases") {
    TokenCodec codec;
    const int straight = codec.token_id(4, 4);  // 3.0 m forward, no offset
    std::vector<int> tokens(kTrajectoryPoints, straight);
    tokens.push_back(codec.terminator_id());
    auto traj = decode_tokens(tokens, codec);
    REQUIRE(traj.has_value());
    for (int k = 0; k < kTrajectoryPoints; ++k) {
        CHECK(traj->points[static_cast<std::size_t>(k)].x == doctest::Approx(3.0 * (k + 1)));
        CHECK(traj->points[static_cast<std::size_t>(k)].y == doctest::Approx(0.0));
        CHECK(traj->points[static_cast<std::size_t>(k)].heading == doctest::Approx(0.0));
    }

    // 9 waypoint tokens
    std::vector<int> nine(9, straight);
    CHECK_FALSE(decode_tokens(nine, codec).has_value());
    // 7 waypoints + terminator
    std::vector<int> seven(7, straight);
    seven.push_back(codec.terminator_id());
    CHECK_FALSE(decode_tokens(seven, codec).has_value());
    // out-of-vocabulary id
    std::vector<int> oov = tokens;
    oov[3] = codec.vocab_size();
    CHECK_FALSE(decode_tokens(oov, codec).has_value());
    // tokens after the terminator
    std::vector<int> trailing = tokens;
    trailing.push_back(straight);
    CHECK_FALSE(decode_tokens(trailing, codec).has_value());
}

TEST_CASE("encode/decode round-trip stays within half a bin per step axis") {
    TokenCodec codec;
    SplitMix64 rng(3);
    const double half_bin = 0.5 * (codec.longitudinal_max - codec.longitudinal_min) /
                            (codec.longitudinal_bins - 1);
    for (int i = 0; i < 500; ++i) {
        const Trajectory traj = random_smooth_trajectory(rng);
        const std::vector<int> tokens = encode_trajectory(traj, codec);
        REQUIRE(tokens.size() == kTrajectoryPoints + 1);
        CHECK(tokens.back() == codec.terminator_id());
        const auto decoded = decode_tokens(tokens, codec);
        REQUIRE(decoded.has_value());

        // per-step quantization error in the composition frame: half a bin on
        // each of the (longitudinal, lateral) axes
        Vec2 pos{0, 0};
        double dir = 0.0;
        for (int k = 0; k < kTrajectoryPoints; ++k) {
            const Pose2D& target = traj.points[static_cast<std::size_t>(k)];
            const Pose2D& got = decoded->points[static_cast<std::size_t>(k)];
            const double c = std::cos(dir);
            const double s = std::sin(dir);
            const double err_lon = c * (target.x - got.x) + s * (target.y - got.y);
            const double err_lat = -s * (target.x - got.x) + c * (target.y - got.y);
            CHECK(std::fabs(err_lon) <= half_bin + 1e-9);
            CHECK(std::fabs(err_lat) <= half_bin + 1e-9);
            // in the world frame the two axes mix by the rotation
            CHECK(std::fabs(target.x - got.x) <= half_bin * std::sqrt(2.0) + 1e-9);
            CHECK(std::fabs(target.y - got.y) <= half_bin * std::sqrt(2.0) + 1e-9);
            const Vec2 step{got.x - pos.x, got.y - pos.y};
            pos = Vec2{got.x, got.y};
            if (step.norm() > 1e-9) {
                dir = std::atan2(step.y, step.x);
            }
        }
    }
}

TEST_CASE("logits: uniform at zero parameters, deterministic, input-sensitive") {
    const PolicyConfig cfg = small_config();
    PolicyParams params = init_policy(cfg, 1);
    std::fill(params.values.begin(), params.values.end(), 0.0);
    SplitMix64 rng(9);
    const std::vector<double> features = random_features(rng, cfg.feature_dim);
    const std::vector<double> logits = policy_logits(params, features, {});
    REQUIRE(static_cast<int>(logits.size()) == cfg.codec.vocab_size());
    for (double z : logits) {
        CHECK(z == doctest::Approx(0.0));
    }

    PolicyParams trained = init_policy(cfg, 2);
    const std::vector<double> l1 = policy_logits(trained, features, {0, 1});
    const std::vector<double> l2 = policy_logits(trained, features, {0, 1});
    CHECK(l1 == l2);

    std::vector<double> perturbed = features;
    perturbed[0] += 0.25;
    const std::vector<double> l3 = policy_logits(trained, perturbed, {0, 1});
    double diff = 0.0;
    for (std::size_t i = 0; i < l1.size(); ++i) {
        diff += std::fabs(l1[i] - l3[i]);
    }
    CHECK(diff > 1e-9);

    std::vector<double> bad(static_cast<std::size_t>(cfg.feature_dim + 1), 0.0);
    CHECK_THROWS_AS(policy_logits(trained, bad, {}), ConfigError);
}

TEST_CASE("sampling at vanishing temperature reduces to greedy argmax") {
    const PolicyConfig cfg = small_config();
    const PolicyParams params = init_policy(cfg, 5);
    SplitMix64 feat_rng(13);
    const std::vector<double> features = random_features(feat_rng, cfg.feature_dim);

    // greedy reference
    std::vector<int> greedy;
    for (int step = 0; step < cfg.max_response_tokens; ++step) {
        const std::vector<double> logits = policy_logits(params, features, greedy);
        int best = 0;
        for (int i = 1; i < static_cast<int>(logits.size()); ++i) {
            if (logits[static_cast<std::size_t>(i)] > logits[static_cast<std::size_t>(best)]) {
                best = i;
            }
        }
        greedy.push_back(best);
        if (best == cfg.codec.terminator_id()) {
            break;
        }
    }

    SplitMix64 rng(77);
    const SampledTurn turn = sample_turn(params, features, 1e-9, rng);
    CHECK(turn.tokens == greedy);
}

TEST_CASE("token frequencies match softmax probabilities within 3 sigma") {
    const PolicyConfig cfg = small_config();
    const PolicyParams params = init_policy(cfg, 21);
    SplitMix64 feat_rng(22);
    const std::vector<double> features = random_features(feat_rng, cfg.feature_dim);

    const std::vector<double> logits = policy_logits(params, features, {});
    std::vector<double> probs(logits.size());
    double max_z = logits[0];
    for (double z : logits) {
        max_z = std::max(max_z, z);
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        probs[i] = std::exp(logits[i] - max_z);
        sum += probs[i];
    }
    for (double& p : probs) {
        p /= sum;
    }

    const int n = 100000;
    std::vector<int> counts(logits.size(), 0);
    SplitMix64 rng(314159);
    for (int i = 0; i < n; ++i) {
        const SampledTurn turn = sample_turn(params, features, 1.0, rng);
        REQUIRE(!turn.tokens.empty());
        ++counts[static_cast<std::size_t>(turn.tokens.front())];
    }
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const double expect = probs[i] * n;
        const double sigma = std::sqrt(probs[i] * (1.0 - probs[i]) * n);
        CHECK(std::fabs(counts[i] - expect) <= 3.0 * sigma + 1.0);
    }
}

TEST_CASE("per-step log-probs normalize and match recomputation bit-for-bit") {
    const PolicyConfig cfg = small_config();
    const PolicyParams params = init_policy(cfg, 33);
    SplitMix64 feat_rng(34);
    const std::vector<double> features = random_features(feat_rng, cfg.feature_dim);
    SplitMix64 rng(35);
    const SampledTurn turn = sample_turn(params, features, 1.0, rng);

    // distribution normalizes at every step
    std::vector<int> prefix;
    for (int tok : turn.tokens) {
        const std::vector<double> logits = policy_logits(params, features, prefix);
        double max_z = logits[0];
        for (double z : logits) {
            max_z = std::max(max_z, z);
        }
        double sum = 0.0;
        for (double z : logits) {
            sum += std::exp(z - max_z);
        }
        CHECK(std::log(sum) + max_z == doctest::Approx(std::log(sum) + max_z));  // finite
        prefix.push_back(tok);
    }

    std::vector<TurnTokens> turns(1);
    turns[0].features = features;
    turns[0].tokens = turn.tokens;
    const std::vector<double> weights(turn.tokens.size(), 1.0);
    const LogProbGrad res = logprob_and_grad(params, turns, weights, 1.0, nullptr);
    REQUIRE(res.per_token_logp.size() == turn.logps.size());
    double sample_sum = 0.0;
    for (std::size_t i = 0; i < turn.logps.size(); ++i) {
        CHECK(res.per_token_logp[i] == turn.logps[i]);  // identical expression path
        sample_sum += turn.logps[i];
    }
    CHECK(res.weighted_logprob == doctest::Approx(sample_sum).epsilon(1e-12));
}

TEST_CASE("softmax shift invariance at the distribution level") {
    const PolicyConfig cfg = small_config();
    PolicyParams params = init_policy(cfg, 41);
    SplitMix64 feat_rng(42);
    const std::vector<double> features = random_features(feat_rng, cfg.feature_dim);
    SplitMix64 rng_a(55);
    const SampledTurn a = sample_turn(params, features, 1.0, rng_a);

    // shift every output logit by a constant via the vocabulary biases
    PolicyParams shifted = params;
    const std::size_t b2_off = cfg.w1_size() + cfg.b1_size() + cfg.w2_size();
    for (std::size_t i = 0; i < cfg.b2_size(); ++i) {
        shifted.values[b2_off + i] += 3.7;
    }
    SplitMix64 rng_b(55);
    const SampledTurn b = sample_turn(shifted, features, 1.0, rng_b);
    CHECK(a.tokens == b.tokens);
    for (std::size_t i = 0; i < a.logps.size(); ++i) {
        CHECK(a.logps[i] == doctest::Approx(b.logps[i]).epsilon(1e-9));
    }
}

TEST_CASE("logprob_and_grad: zero weights, linearity, weight-length validation") {
    const PolicyConfig cfg = small_config();
    const PolicyParams params = init_policy(cfg, 61);
    SplitMix64 rng(62);
    std::vector<TurnTokens> turns(2);
    for (TurnTokens& t : turns) {
        t.features = random_features(rng, cfg.feature_dim);
        for (int k = 0; k < 4; ++k) {
            t.tokens.push_back(static_cast<int>(rng.next_below(
                static_cast<std::uint64_t>(cfg.codec.vocab_size()))));
        }
    }
    const std::size_t n_tokens = 8;

    std::vector<double> grad(params.values.size(), 0.0);
    const LogProbGrad zero =
        logprob_and_grad(params, turns, std::vector<double>(n_tokens, 0.0), 1.0, &grad);
    CHECK(zero.weighted_logprob == 0.0);
    for (double g : grad) {
        CHECK(g == 0.0);
    }

    std::vector<double> w(n_tokens);
    for (double& x : w) {
        x = rng.next_range(-1.0, 1.0);
    }
    std::vector<double> g1(params.values.size(), 0.0);
    const LogProbGrad r1 = logprob_and_grad(params, turns, w, 1.0, &g1);
    std::vector<double> w2 = w;
    for (double& x : w2) {
        x *= 2.0;
    }
    std::vector<double> g2(params.values.size(), 0.0);
    const LogProbGrad r2 = logprob_and_grad(params, turns, w2, 1.0, &g2);
    CHECK(r2.weighted_logprob == doctest::Approx(2.0 * r1.weighted_logprob).epsilon(1e-12));
    for (std::size_t i = 0; i < g1.size(); ++i) {
        CHECK(g2[i] == doctest::Approx(2.0 * g1[i]).epsilon(1e-9));
    }

    CHECK_THROWS_AS(logprob_and_grad(params, turns, std::vector<double>(3, 1.0), 1.0, nullptr),
                    ConfigError);
}

TEST_CASE("analytic gradient matches central finite differences") {
    const PolicyConfig cfg = small_config();
    const PolicyParams params = init_policy(cfg, 71);
    SplitMix64 rng(72);
    std::vector<TurnTokens> turns(3);
    std::size_t n_tokens = 0;
    for (TurnTokens& t : turns) {
        t.features = random_features(rng, cfg.feature_dim);
        const int len = 3 + static_cast<int>(rng.next_below(5));
        for (int k = 0; k < len; ++k) {
            t.tokens.push_back(static_cast<int>(rng.next_below(
                static_cast<std::uint64_t>(cfg.codec.vocab_size()))));
        }
        n_tokens += t.tokens.size();
    }
    std::vector<double> weights(n_tokens);
    for (double& w : weights) {
        w = rng.next_range(-1.5, 1.5);
    }

    std::vector<double> grad(params.values.size(), 0.0);
    logprob_and_grad(params, turns, weights, 1.0, &grad);

    const double h = 1e-5;
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t i = static_cast<std::size_t>(rng.next_below(params.values.size()));
        PolicyParams plus = params;
        plus.values[i] += h;
        PolicyParams minus = params;
        minus.values[i] -= h;
        const double fp = logprob_and_grad(plus, turns, weights, 1.0, nullptr).weighted_logprob;
        const double fm = logprob_and_grad(minus, turns, weights, 1.0, nullptr).weighted_logprob;
        const double fd = (fp - fm) / (2.0 * h);
        const double denom = std::max({std::fabs(fd), std::fabs(grad[i]), 1e-8});
        worst = std::max(worst, std::fabs(fd - grad[i]) / denom);
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("checkpoints round-trip bit-exactly") {
    PolicyConfig cfg;
    cfg.feature_dim = 87;
    const PolicyParams params = init_policy(cfg, 424242);
    const std::string path = "/tmp/mtdrive_test_policy.ckpt";
    save_policy(params, path);
    const PolicyParams loaded = load_policy(path);
    CHECK(loaded.config.feature_dim == params.config.feature_dim);
    CHECK(loaded.config.codec.lateral_bins == params.config.codec.lateral_bins);
    CHECK(loaded.init_seed == params.init_seed);
    REQUIRE(loaded.values.size() == params.values.size());
    for (std::size_t i = 0; i < params.values.size(); ++i) {
        CHECK(loaded.values[i] == params.values[i]);
    }

    // a second save writes identical bytes
    const std::string path2 = "/tmp/mtdrive_test_policy2.ckpt";
    save_policy(loaded, path2);
    std::ifstream a(path, std::ios::binary);
    std::ifstream b(path2, std::ios::binary);
    std::ostringstream sa;
    std::ostringstream sb;
    sa << a.rdbuf();
    sb << b.rdbuf();
    CHECK(sa.str() == sb.str());
    std::remove(path.c_str());
    std::remove(path2.c_str());

    CHECK_THROWS_AS(load_policy("/tmp/mtdrive_no_such_checkpoint.ckpt"), DataError);
}

TEST_CASE("parameter budget stays under 50k") {
    PolicyConfig cfg;
    cfg.feature_dim = 87;
    CHECK(cfg.param_count() <= 50000);
    CHECK(cfg.param_count() > 1000);
}

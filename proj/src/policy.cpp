#include "mtdrive/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "mtdrive/errors.hpp"

namespace mtdrive {

namespace {

int nearest_bin(double value, double lo, double hi, int bins) {
    if (bins <= 1) {
        return 0;
    }
    const double step = (hi - lo) / (bins - 1);
    const int bin = static_cast<int>(std::lround((value - lo) / step));
    return std::clamp(bin, 0, bins - 1);
}

struct StepFrame {
    Vec2 pos;
    double dir = 0.0;
};

void advance(StepFrame& frame, double lon, double lat) {
    const double c = std::cos(frame.dir);
    const double s = std::sin(frame.dir);
    const Vec2 delta{c * lon - s * lat, s * lon + c * lat};
    frame.pos = frame.pos + delta;
    if (delta.norm() > 1e-9) {
        frame.dir = std::atan2(delta.y, delta.x);
    }
}

}  // namespace

std::optional<Trajectory> decode_tokens(const std::vector<int>& tokens, const TokenCodec& codec) {
    std::vector<int> waypoints;
    bool terminated = false;
    for (int tok : tokens) {
        if (tok < 0 || tok >= codec.vocab_size()) {
            return std::nullopt;
        }
        if (terminated) {
            return std::nullopt;  // tokens after the terminator
        }
        if (tok == codec.terminator_id()) {
            terminated = true;
            continue;
        }
        waypoints.push_back(tok);
    }
    if (waypoints.size() != kTrajectoryPoints) {
        return std::nullopt;
    }

    std::array<Vec2, kTrajectoryPoints> pos;
    StepFrame frame;
    for (int k = 0; k < kTrajectoryPoints; ++k) {
        const int tok = waypoints[static_cast<std::size_t>(k)];
        const int lat_bin = tok / codec.longitudinal_bins;
        const int lon_bin = tok % codec.longitudinal_bins;
        advance(frame, codec.longitudinal_value(lon_bin), codec.lateral_value(lat_bin));
        pos[static_cast<std::size_t>(k)] = frame.pos;
    }

    // Headings from the outgoing delta; zero-length steps and the last point
    // inherit the previous heading.
    Trajectory traj;
    double prev_heading = 0.0;
    for (int k = 0; k < kTrajectoryPoints; ++k) {
        double heading = prev_heading;
        if (k + 1 < kTrajectoryPoints) {
            const Vec2 delta = pos[static_cast<std::size_t>(k + 1)] - pos[static_cast<std::size_t>(k)];
            if (delta.norm() > 1e-9) {
                heading = normalize_angle(std::atan2(delta.y, delta.x));
            }
        }
        traj.points[static_cast<std::size_t>(k)] =
            Pose2D{pos[static_cast<std::size_t>(k)].x, pos[static_cast<std::size_t>(k)].y, heading};
        prev_heading = heading;
    }
    return traj;
}

std::vector<int> encode_trajectory(const Trajectory& traj, const TokenCodec& codec) {
    std::vector<int> tokens;
    tokens.reserve(kTrajectoryPoints + 1);
    StepFrame frame;
    for (int k = 0; k < kTrajectoryPoints; ++k) {
        const Pose2D& target = traj.points[static_cast<std::size_t>(k)];
        const double c = std::cos(frame.dir);
        const double s = std::sin(frame.dir);
        const double dx = target.x - frame.pos.x;
        const double dy = target.y - frame.pos.y;
        const double lon = c * dx + s * dy;
        const double lat = -s * dx + c * dy;
        const int lon_bin = nearest_bin(lon, codec.longitudinal_min, codec.longitudinal_max,
                                        codec.longitudinal_bins);
        const int lat_bin = nearest_bin(lat, codec.lateral_min, codec.lateral_max, codec.lateral_bins);
        tokens.push_back(codec.token_id(lat_bin, lon_bin));
        advance(frame, codec.longitudinal_value(lon_bin), codec.lateral_value(lat_bin));
    }
    tokens.push_back(codec.terminator_id());
    return tokens;
}

PolicyParams init_policy(const PolicyConfig& config, std::uint64_t seed) {
    if (config.feature_dim <= 0 || config.hidden_dim <= 0 || config.embed_dim <= 0) {
        throw ConfigError("policy dimensions must be positive");
    }
    PolicyParams params;
    params.config = config;
    params.init_seed = seed;
    params.values.assign(config.param_count(), 0.0);
    SplitMix64 rng(hash_mix(seed, 0x706f6c696379ull));

    const double w1_scale = 1.0 / std::sqrt(static_cast<double>(config.input_dim()));
    const double w2_scale = 1.0 / std::sqrt(static_cast<double>(config.hidden_dim));
    const double emb_scale = 1.0 / std::sqrt(static_cast<double>(config.embed_dim));

    std::size_t off = 0;
    for (std::size_t i = 0; i < config.w1_size(); ++i) {
        params.values[off++] = rng.next_range(-w1_scale, w1_scale);
    }
    off += config.b1_size();  // biases start at zero
    for (std::size_t i = 0; i < config.w2_size(); ++i) {
        params.values[off++] = rng.next_range(-w2_scale, w2_scale);
    }
    off += config.b2_size();
    for (std::size_t i = 0; i < config.emb_size() + config.pos_size(); ++i) {
        params.values[off++] = rng.next_range(-emb_scale, emb_scale);
    }
    return params;
}

namespace {

struct ParamView {
    const double* w1;
    const double* b1;
    const double* w2;
    const double* b2;
    const double* emb;
    const double* pos;
};

ParamView view_of(const PolicyParams& p) {
    const PolicyConfig& c = p.config;
    const double* base = p.values.data();
    ParamView v;
    v.w1 = base;
    v.b1 = v.w1 + c.w1_size();
    v.w2 = v.b1 + c.b1_size();
    v.b2 = v.w2 + c.w2_size();
    v.emb = v.b2 + c.b2_size();
    v.pos = v.emb + c.emb_size();
    return v;
}

struct MutableParamView {
    double* w1;
    double* b1;
    double* w2;
    double* b2;
    double* emb;
    double* pos;
};

MutableParamView view_of(std::vector<double>& values, const PolicyConfig& c) {
    double* base = values.data();
    MutableParamView v;
    v.w1 = base;
    v.b1 = v.w1 + c.w1_size();
    v.w2 = v.b1 + c.b1_size();
    v.b2 = v.w2 + c.w2_size();
    v.emb = v.b2 + c.b2_size();
    v.pos = v.emb + c.emb_size();
    return v;
}

// Forward state for one token position, kept so the backward pass can reuse it.
struct ForwardState {
    std::vector<double> input;    // features ++ summed embeddings
    std::vector<double> hidden;   // tanh activations
    std::vector<double> logits;
    std::vector<double> probs;    // softmax of logits / T
    double max_z = 0.0;
    double log_sum = 0.0;
    double logp_target = 0.0;

    double logp_of(int token, double temperature) const {
        return logits[static_cast<std::size_t>(token)] / std::max(temperature, 1e-12) - max_z - log_sum;
    }
};

void forward_token(const PolicyParams& params, const std::vector<double>& features,
                   const std::vector<int>& emitted, double temperature, int target,
                   ForwardState& st) {
    const PolicyConfig& c = params.config;
    const ParamView v = view_of(params);
    const int in_dim = c.input_dim();
    const int vocab = c.codec.vocab_size();

    st.input.assign(static_cast<std::size_t>(in_dim), 0.0);
    std::copy(features.begin(), features.end(), st.input.begin());
    for (std::size_t p = 0; p < emitted.size(); ++p) {
        const double* tok_emb = v.emb + static_cast<std::size_t>(emitted[p]) * c.embed_dim;
        const double* pos_emb = v.pos + p * static_cast<std::size_t>(c.embed_dim);
        for (int e = 0; e < c.embed_dim; ++e) {
            st.input[static_cast<std::size_t>(c.feature_dim + e)] += tok_emb[e] + pos_emb[e];
        }
    }

    st.hidden.assign(static_cast<std::size_t>(c.hidden_dim), 0.0);
    for (int h = 0; h < c.hidden_dim; ++h) {
        const double* row = v.w1 + static_cast<std::size_t>(h) * in_dim;
        double acc = v.b1[h];
        for (int i = 0; i < in_dim; ++i) {
            acc += row[i] * st.input[static_cast<std::size_t>(i)];
        }
        st.hidden[static_cast<std::size_t>(h)] = std::tanh(acc);
    }

    st.logits.assign(static_cast<std::size_t>(vocab), 0.0);
    for (int o = 0; o < vocab; ++o) {
        const double* row = v.w2 + static_cast<std::size_t>(o) * c.hidden_dim;
        double acc = v.b2[o];
        for (int h = 0; h < c.hidden_dim; ++h) {
            acc += row[h] * st.hidden[static_cast<std::size_t>(h)];
        }
        st.logits[static_cast<std::size_t>(o)] = acc;
    }

    // stable tempered log-softmax
    const double t = std::max(temperature, 1e-12);
    double max_z = -std::numeric_limits<double>::infinity();
    for (double z : st.logits) {
        max_z = std::max(max_z, z / t);
    }
    double sum = 0.0;
    st.probs.assign(static_cast<std::size_t>(vocab), 0.0);
    for (int o = 0; o < vocab; ++o) {
        const double e = std::exp(st.logits[static_cast<std::size_t>(o)] / t - max_z);
        st.probs[static_cast<std::size_t>(o)] = e;
        sum += e;
    }
    st.max_z = max_z;
    st.log_sum = std::log(sum);
    for (int o = 0; o < vocab; ++o) {
        st.probs[static_cast<std::size_t>(o)] /= sum;
    }
    if (target >= 0) {
        st.logp_target = st.logp_of(target, temperature);
    }
}

// dL/dlogp = weight for the target token; backprop through the tempered
// softmax and both layers, scattering into the flat gradient buffer.
void backward_token(const PolicyParams& params, const std::vector<int>& emitted, int target,
                    double temperature, double weight, const ForwardState& st,
                    std::vector<double>& grad) {
    const PolicyConfig& c = params.config;
    const ParamView v = view_of(params);
    MutableParamView g = view_of(grad, c);
    const int in_dim = c.input_dim();
    const int vocab = c.codec.vocab_size();
    const double t = std::max(temperature, 1e-12);

    // d logp(target) / d logits[o] = (1[o==target] - p_o) / T
    std::vector<double> g_logits(static_cast<std::size_t>(vocab));
    for (int o = 0; o < vocab; ++o) {
        const double indicator = o == target ? 1.0 : 0.0;
        g_logits[static_cast<std::size_t>(o)] =
            weight * (indicator - st.probs[static_cast<std::size_t>(o)]) / t;
    }

    std::vector<double> g_hidden(static_cast<std::size_t>(c.hidden_dim), 0.0);
    for (int o = 0; o < vocab; ++o) {
        const double go = g_logits[static_cast<std::size_t>(o)];
        if (go == 0.0) {
            continue;
        }
        double* w2_row = g.w2 + static_cast<std::size_t>(o) * c.hidden_dim;
        const double* w2_src = v.w2 + static_cast<std::size_t>(o) * c.hidden_dim;
        for (int h = 0; h < c.hidden_dim; ++h) {
            w2_row[h] += go * st.hidden[static_cast<std::size_t>(h)];
            g_hidden[static_cast<std::size_t>(h)] += go * w2_src[h];
        }
        g.b2[o] += go;
    }

    std::vector<double> g_input(static_cast<std::size_t>(in_dim), 0.0);
    for (int h = 0; h < c.hidden_dim; ++h) {
        const double act = st.hidden[static_cast<std::size_t>(h)];
        const double gh = g_hidden[static_cast<std::size_t>(h)] * (1.0 - act * act);
        if (gh == 0.0) {
            continue;
        }
        double* w1_row = g.w1 + static_cast<std::size_t>(h) * in_dim;
        const double* w1_src = v.w1 + static_cast<std::size_t>(h) * in_dim;
        for (int i = 0; i < in_dim; ++i) {
            w1_row[i] += gh * st.input[static_cast<std::size_t>(i)];
            g_input[static_cast<std::size_t>(i)] += gh * w1_src[i];
        }
        g.b1[h] += gh;
    }

    for (std::size_t p = 0; p < emitted.size(); ++p) {
        double* tok_emb = g.emb + static_cast<std::size_t>(emitted[p]) * c.embed_dim;
        double* pos_emb = g.pos + p * static_cast<std::size_t>(c.embed_dim);
        for (int e = 0; e < c.embed_dim; ++e) {
            const double gi = g_input[static_cast<std::size_t>(c.feature_dim + e)];
            tok_emb[e] += gi;
            pos_emb[e] += gi;
        }
    }
}

void check_features(const PolicyParams& params, const std::vector<double>& features) {
    if (static_cast<int>(features.size()) != params.config.feature_dim) {
        throw ConfigError("context feature width does not match the policy");
    }
}

}  // namespace

std::vector<double> policy_logits(const PolicyParams& params, const std::vector<double>& features,
                                  const std::vector<int>& emitted_tokens) {
    check_features(params, features);
    ForwardState st;
    forward_token(params, features, emitted_tokens, 1.0, -1, st);
    return st.logits;
}

SampledTurn sample_turn(const PolicyParams& params, const std::vector<double>& features,
                        double temperature, SplitMix64& rng) {
    check_features(params, features);
    SampledTurn out;
    ForwardState st;
    for (int step = 0; step < params.config.max_response_tokens; ++step) {
        forward_token(params, features, out.tokens, temperature, -1, st);
        const double u = rng.next_double();
        double cum = 0.0;
        int chosen = static_cast<int>(st.probs.size()) - 1;
        for (std::size_t o = 0; o < st.probs.size(); ++o) {
            cum += st.probs[o];
            if (u < cum) {
                chosen = static_cast<int>(o);
                break;
            }
        }
        out.logps.push_back(st.logp_of(chosen, temperature));
        out.tokens.push_back(chosen);
        if (chosen == params.config.codec.terminator_id()) {
            break;
        }
    }
    return out;
}

double policy_weighted_logprob(const PolicyParams& params, const std::vector<TurnTokens>& turns,
                               const std::function<double(std::size_t, double)>& weight_of,
                               double temperature, std::vector<double>* grad,
                               std::vector<double>* logp_out) {
    if (grad != nullptr && grad->size() != params.values.size()) {
        grad->assign(params.values.size(), 0.0);
    }
    double total = 0.0;
    std::size_t flat = 0;
    ForwardState st;
    std::vector<int> emitted;
    for (const TurnTokens& turn : turns) {
        check_features(params, turn.features);
        emitted.clear();
        for (int tok : turn.tokens) {
            forward_token(params, turn.features, emitted, temperature, tok, st);
            const double logp = st.logp_target;
            if (logp_out != nullptr) {
                logp_out->push_back(logp);
            }
            const double w = weight_of(flat, logp);
            total += w * logp;
            if (grad != nullptr && w != 0.0) {
                backward_token(params, emitted, tok, temperature, w, st, *grad);
            }
            emitted.push_back(tok);
            ++flat;
        }
    }
    return total;
}

LogProbGrad logprob_and_grad(const PolicyParams& params, const std::vector<TurnTokens>& turns,
                             const std::vector<double>& weights, double temperature,
                             std::vector<double>* grad) {
    std::size_t token_count = 0;
    for (const TurnTokens& t : turns) {
        token_count += t.tokens.size();
    }
    if (weights.size() != token_count) {
        throw ConfigError("token weight count does not match the token sequence");
    }
    LogProbGrad out;
    out.weighted_logprob = policy_weighted_logprob(
        params, turns, [&](std::size_t i, double) { return weights[i]; }, temperature, grad,
        &out.per_token_logp);
    return out;
}

void save_policy(const PolicyParams& params, const std::string& path) {
    nlohmann::ordered_json header;
    header["format"] = "mtdrive-policy";
    header["version"] = 1;
    header["dtype"] = "float64";
    header["param_count"] = params.values.size();
    header["feature_dim"] = params.config.feature_dim;
    header["embed_dim"] = params.config.embed_dim;
    header["hidden_dim"] = params.config.hidden_dim;
    header["max_response_tokens"] = params.config.max_response_tokens;
    nlohmann::ordered_json codec;
    codec["lateral_bins"] = params.config.codec.lateral_bins;
    codec["lateral_min"] = params.config.codec.lateral_min;
    codec["lateral_max"] = params.config.codec.lateral_max;
    codec["longitudinal_bins"] = params.config.codec.longitudinal_bins;
    codec["longitudinal_min"] = params.config.codec.longitudinal_min;
    codec["longitudinal_max"] = params.config.codec.longitudinal_max;
    header["codec"] = codec;
    header["seed"] = params.init_seed;

    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot open for writing: " + path);
    }
    out << header.dump() << '\n';
    for (double value : params.values) {
        std::uint64_t bits;
        std::memcpy(&bits, &value, sizeof bits);
        unsigned char bytes[8];
        for (int i = 0; i < 8; ++i) {
            bytes[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xffu);
        }
        out.write(reinterpret_cast<const char*>(bytes), 8);
    }
    if (!out) {
        throw DataError("write failed: " + path);
    }
}

PolicyParams load_policy(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open checkpoint: " + path);
    }
    std::string header_line;
    if (!std::getline(in, header_line)) {
        throw DataError("checkpoint missing header: " + path);
    }
    nlohmann::ordered_json header;
    try {
        header = nlohmann::ordered_json::parse(header_line);
    } catch (const nlohmann::ordered_json::parse_error& e) {
        throw DataError("checkpoint header is not valid JSON: " + std::string(e.what()));
    }
    if (header.value("format", "") != "mtdrive-policy" || header.value("version", 0) != 1 ||
        header.value("dtype", "") != "float64") {
        throw DataError("unsupported checkpoint format: " + path);
    }

    PolicyParams params;
    params.config.feature_dim = header.at("feature_dim").get<int>();
    params.config.embed_dim = header.at("embed_dim").get<int>();
    params.config.hidden_dim = header.at("hidden_dim").get<int>();
    params.config.max_response_tokens = header.at("max_response_tokens").get<int>();
    const auto& codec = header.at("codec");
    params.config.codec.lateral_bins = codec.at("lateral_bins").get<int>();
    params.config.codec.lateral_min = codec.at("lateral_min").get<double>();
    params.config.codec.lateral_max = codec.at("lateral_max").get<double>();
    params.config.codec.longitudinal_bins = codec.at("longitudinal_bins").get<int>();
    params.config.codec.longitudinal_min = codec.at("longitudinal_min").get<double>();
    params.config.codec.longitudinal_max = codec.at("longitudinal_max").get<double>();
    params.init_seed = header.at("seed").get<std::uint64_t>();

    const std::size_t count = header.at("param_count").get<std::size_t>();
    if (count != params.config.param_count()) {
        throw DataError("checkpoint parameter count does not match its dimensions");
    }
    params.values.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        unsigned char bytes[8];
        if (!in.read(reinterpret_cast<char*>(bytes), 8)) {
            throw DataError("checkpoint truncated: " + path);
        }
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) {
            bits |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
        }
        double value;
        std::memcpy(&value, &bits, sizeof value);
        params.values[i] = value;
    }
    return params;
}

BcStats bc_update(PolicyParams& params, const std::vector<const BcBatchItem*>& batch,
                  double learning_rate) {
    BcStats stats;
    if (batch.empty()) {
        return stats;
    }
    std::size_t token_count = 0;
    for (const BcBatchItem* item : batch) {
        token_count += item->target_tokens.size();
    }
    if (token_count == 0) {
        return stats;
    }
    std::vector<double> grad(params.values.size(), 0.0);
    const double w = 1.0 / static_cast<double>(token_count);
    double total = 0.0;
    for (const BcBatchItem* item : batch) {
        std::vector<TurnTokens> turns(1);
        turns[0].features = item->features;
        turns[0].tokens = item->target_tokens;
        total += policy_weighted_logprob(
            params, turns, [&](std::size_t, double) { return w; }, 1.0, &grad, nullptr);
    }
    for (std::size_t i = 0; i < params.values.size(); ++i) {
        params.values[i] += learning_rate * grad[i];
    }
    stats.mean_logprob = total;
    stats.token_count = static_cast<int>(token_count);
    return stats;
}

}  // namespace mtdrive

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace mtdrive::pipeline {

struct RolloutPayload {
    std::uint64_t id = 0;
    std::vector<std::int32_t> tokens;
    std::vector<double> logps;
    std::vector<std::uint8_t> blob;  // stands in for image tensors
    std::int64_t completion_us = 0;
};

constexpr std::uint8_t kCodecVersion = 1;

// Body encoding behind the frame: id, tokens, logps, blob, timestamp, all
// little-endian with explicit counts.
std::vector<std::uint8_t> serialize_payload(const RolloutPayload& payload);
RolloutPayload deserialize_payload(const std::uint8_t* data, std::size_t size);

// Wire framing: 4-byte little-endian length (counting the version byte and
// body), then the version byte, then the body.
void append_frame(std::vector<std::uint8_t>& out, const RolloutPayload& payload);

// Incremental frame splitter for stream transports. Throws DataError on a
// version mismatch; truncation surfaces as frames never completing.
class FrameSplitter {
public:
    void feed(const std::uint8_t* data, std::size_t size, std::vector<RolloutPayload>& out);

private:
    std::vector<std::uint8_t> buffer_;
};

// Simulated per-stage costs; spans are slept, payload bytes are real.
struct DurationModel {
    double gen_ms_min = 12.0;
    double gen_ms_max = 34.0;
    double serialize_ms_per_mib = 4.0;
    double deserialize_ms_per_mib = 4.0;
    double stage_compute_ms = 30.0;
};

enum class Transport { QUEUE, PIPE };

struct StepConfig {
    int workers = 4;
    int rollouts = 16;
    double blob_mib = 4.0;
    bool ipss = false;  // stream serialization as rollouts finish
    bool iptc = false;  // share one deserialized batch across the stages
    int serializer_threads = 0;  // 0 = workers / 2, at least 1
    DurationModel durations;
    Transport transport = Transport::QUEUE;
    std::uint64_t seed = 1;
    int tokens_per_rollout = 54;
};

constexpr int kConsumingStages = 3;  // log-prob recompute, reference, actor

struct StepTiming {
    double gen_span_ms = 0.0;       // launch to last rollout completion
    double ser_critical_ms = 0.0;   // serialization not hidden behind generation
    double dispatch_ms = 0.0;       // transport drain after serialization
    double consume_ms = 0.0;        // the three consuming stages
    double step_ms = 0.0;
    int deser_count = 0;
    std::array<int, kConsumingStages> deser_per_stage{};
    std::uint64_t batch_hash = 0;   // content hash of the assembled batch
    std::vector<double> gen_done_ms;   // per rollout, for scheduling probes
    std::vector<double> ser_start_ms;  // per rollout
};

// One four-stage training step over synthetic rollouts with heterogeneous
// generation durations.
StepTiming run_step(const StepConfig& cfg);

struct BenchCell {
    StepConfig config;
    StepTiming median;
    double step_ms_min = 0.0;
    double step_ms_max = 0.0;
};

struct BenchConfig {
    std::vector<int> workers_grid = {4};
    std::vector<double> blob_grid = {4.0};
    int repeats = 3;
    StepConfig base;
};

// Full grid: workers x blob x {ipss} x {iptc}; medians over `repeats` runs.
// Throws ConfigError when repeats < 3.
std::vector<BenchCell> bench(const BenchConfig& cfg);

void write_bench_csv(const std::vector<BenchCell>& cells, const std::string& path);
std::string bench_report(const std::vector<BenchCell>& cells);

}  // namespace mtdrive::pipeline

#include "mtdrive/pipeline.hpp"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "mtdrive/errors.hpp"
#include "mtdrive/rng.hpp"

namespace mtdrive::pipeline {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

void sleep_ms(double ms) {
    if (ms > 0.0) {
        std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(ms));
    }
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xffu));
    }
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xffu));
    }
}

struct Reader {
    const std::uint8_t* data;
    std::size_t size;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > size) {
            throw DataError("payload truncated");
        }
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(data[pos + i]) << (8 * i);
        }
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<std::uint64_t>(data[pos + i]) << (8 * i);
        }
        pos += 8;
        return v;
    }
};

}  // namespace

std::vector<std::uint8_t> serialize_payload(const RolloutPayload& payload) {
    std::vector<std::uint8_t> out;
    out.reserve(32 + payload.tokens.size() * 4 + payload.logps.size() * 8 + payload.blob.size());
    put_u64(out, payload.id);
    put_u32(out, static_cast<std::uint32_t>(payload.tokens.size()));
    for (std::int32_t t : payload.tokens) {
        put_u32(out, static_cast<std::uint32_t>(t));
    }
    put_u32(out, static_cast<std::uint32_t>(payload.logps.size()));
    for (double lp : payload.logps) {
        std::uint64_t bits;
        std::memcpy(&bits, &lp, sizeof bits);
        put_u64(out, bits);
    }
    put_u32(out, static_cast<std::uint32_t>(payload.blob.size()));
    out.insert(out.end(), payload.blob.begin(), payload.blob.end());
    put_u64(out, static_cast<std::uint64_t>(payload.completion_us));
    return out;
}

RolloutPayload deserialize_payload(const std::uint8_t* data, std::size_t size) {
    Reader r{data, size};
    RolloutPayload p;
    p.id = r.u64();
    const std::uint32_t tokens = r.u32();
    p.tokens.reserve(tokens);
    for (std::uint32_t i = 0; i < tokens; ++i) {
        p.tokens.push_back(static_cast<std::int32_t>(r.u32()));
    }
    const std::uint32_t logps = r.u32();
    p.logps.reserve(logps);
    for (std::uint32_t i = 0; i < logps; ++i) {
        const std::uint64_t bits = r.u64();
        double lp;
        std::memcpy(&lp, &bits, sizeof lp);
        p.logps.push_back(lp);
    }
    const std::uint32_t blob = r.u32();
    r.need(blob);
    p.blob.assign(data + r.pos, data + r.pos + blob);
    r.pos += blob;
    p.completion_us = static_cast<std::int64_t>(r.u64());
    if (r.pos != size) {
        throw DataError("payload has trailing bytes");
    }
    return p;
}

void append_frame(std::vector<std::uint8_t>& out, const RolloutPayload& payload) {
    const std::vector<std::uint8_t> body = serialize_payload(payload);
    put_u32(out, static_cast<std::uint32_t>(body.size() + 1));
    out.push_back(kCodecVersion);
    out.insert(out.end(), body.begin(), body.end());
}

void FrameSplitter::feed(const std::uint8_t* data, std::size_t size,
                         std::vector<RolloutPayload>& out) {
    buffer_.insert(buffer_.end(), data, data + size);
    std::size_t pos = 0;
    while (buffer_.size() - pos >= 4) {
        std::uint32_t len = 0;
        for (int i = 0; i < 4; ++i) {
            len |= static_cast<std::uint32_t>(buffer_[pos + i]) << (8 * i);
        }
        if (len < 1) {
            throw DataError("frame length must cover the version byte");
        }
        if (buffer_.size() - pos - 4 < len) {
            break;
        }
        const std::uint8_t version = buffer_[pos + 4];
        if (version != kCodecVersion) {
            throw DataError("payload codec version mismatch: got " + std::to_string(version));
        }
        out.push_back(deserialize_payload(buffer_.data() + pos + 5, len - 1));
        pos += 4 + len;
    }
    buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(pos));
}

namespace {

RolloutPayload make_payload(std::uint64_t seed, std::uint64_t id, double blob_mib,
                            int tokens_per_rollout) {
    RolloutPayload p;
    p.id = id;
    SplitMix64 rng(hash_mix(seed, id));
    p.tokens.reserve(static_cast<std::size_t>(tokens_per_rollout));
    for (int i = 0; i < tokens_per_rollout; ++i) {
        p.tokens.push_back(static_cast<std::int32_t>(rng.next_below(82)));
        p.logps.push_back(-rng.next_double() * 4.0);
    }
    const std::size_t bytes = static_cast<std::size_t>(blob_mib * 1024.0 * 1024.0);
    p.blob.resize(bytes);
    std::size_t i = 0;
    while (i + 8 <= bytes) {
        const std::uint64_t word = rng.next_u64();
        std::memcpy(p.blob.data() + i, &word, 8);
        i += 8;
    }
    for (; i < bytes; ++i) {
        p.blob[i] = static_cast<std::uint8_t>(rng.next_below(256));
    }
    return p;
}

std::uint64_t payload_content_hash(const RolloutPayload& p, std::uint64_t h) {
    h = hash_bytes(&p.id, sizeof p.id, h);
    h = hash_bytes(p.tokens.data(), p.tokens.size() * sizeof(std::int32_t), h);
    h = hash_bytes(p.logps.data(), p.logps.size() * sizeof(double), h);
    h = hash_bytes(p.blob.data(), p.blob.size(), h);
    return h;  // completion_us is timing metadata, not content
}

// Bounded in-process byte queue; the object-store stand-in.
class ByteQueue {
public:
    explicit ByteQueue(std::size_t capacity) : capacity_(capacity) {}

    void push(std::vector<std::uint8_t> chunk) {
        std::unique_lock lock(mutex_);
        not_full_.wait(lock, [&] { return chunks_.size() < capacity_; });
        chunks_.push_back(std::move(chunk));
        not_empty_.notify_one();
    }

    bool pop(std::vector<std::uint8_t>& chunk) {
        std::unique_lock lock(mutex_);
        not_empty_.wait(lock, [&] { return !chunks_.empty() || closed_; });
        if (chunks_.empty()) {
            return false;
        }
        chunk = std::move(chunks_.front());
        chunks_.pop_front();
        not_full_.notify_one();
        return true;
    }

    void close() {
        std::lock_guard lock(mutex_);
        closed_ = true;
        not_empty_.notify_all();
    }

private:
    std::mutex mutex_;
    std::condition_variable not_full_;
    std::condition_variable not_empty_;
    std::deque<std::vector<std::uint8_t>> chunks_;
    std::size_t capacity_;
    bool closed_ = false;
};

// pipe(2)-backed transport exercising a real process boundary interface.
class PipeTransport {
public:
    PipeTransport() {
        int fds[2];
        if (::pipe(fds) != 0) {
            throw DataError("pipe creation failed");
        }
        read_fd_ = fds[0];
        write_fd_ = fds[1];
    }
    ~PipeTransport() {
        if (read_fd_ >= 0) {
            ::close(read_fd_);
        }
        close_writer();
    }

    void write(const std::vector<std::uint8_t>& bytes) {
        std::size_t off = 0;
        while (off < bytes.size()) {
            const ssize_t n = ::write(write_fd_, bytes.data() + off, bytes.size() - off);
            if (n < 0) {
                throw DataError("pipe write failed");
            }
            off += static_cast<std::size_t>(n);
        }
    }

    void close_writer() {
        if (write_fd_ >= 0) {
            ::close(write_fd_);
            write_fd_ = -1;
        }
    }

    // Reads until EOF, feeding the splitter.
    void drain(FrameSplitter& splitter, std::vector<RolloutPayload>& out) {
        std::vector<std::uint8_t> buf(1 << 16);
        for (;;) {
            const ssize_t n = ::read(read_fd_, buf.data(), buf.size());
            if (n < 0) {
                throw DataError("pipe read failed");
            }
            if (n == 0) {
                return;
            }
            splitter.feed(buf.data(), static_cast<std::size_t>(n), out);
        }
    }

private:
    int read_fd_ = -1;
    int write_fd_ = -1;
};

}  // namespace

StepTiming run_step(const StepConfig& cfg) {
    if (cfg.workers < 1 || cfg.rollouts < 1) {
        throw ConfigError("run_step needs at least one worker and one rollout");
    }
    const int serializer_threads =
        cfg.serializer_threads > 0 ? cfg.serializer_threads : std::max(1, cfg.workers / 2);
    const double ser_cost_ms = cfg.durations.serialize_ms_per_mib * cfg.blob_mib;
    const double deser_cost_ms =
        cfg.durations.deserialize_ms_per_mib * cfg.blob_mib * cfg.rollouts;

    StepTiming timing;
    timing.gen_done_ms.assign(static_cast<std::size_t>(cfg.rollouts), 0.0);
    timing.ser_start_ms.assign(static_cast<std::size_t>(cfg.rollouts), 0.0);

    const auto t0 = Clock::now();

    // --- stage 1: rollout generation (+ serialization under IPSS) ---------
    std::vector<RolloutPayload> payloads(static_cast<std::size_t>(cfg.rollouts));
    std::vector<std::vector<std::uint8_t>> frames(static_cast<std::size_t>(cfg.rollouts));

    std::mutex ready_mutex;
    std::condition_variable ready_cv;
    std::deque<int> ready;
    bool gen_done_flag = false;

    std::atomic<int> next_rollout{0};
    auto generator = [&] {
        for (;;) {
            const int i = next_rollout.fetch_add(1);
            if (i >= cfg.rollouts) {
                return;
            }
            SplitMix64 rng(hash_mix(cfg.seed, 0x67656eull + static_cast<std::uint64_t>(i)));
            const double gen_ms = rng.next_range(cfg.durations.gen_ms_min, cfg.durations.gen_ms_max);
            sleep_ms(gen_ms);
            payloads[static_cast<std::size_t>(i)] =
                make_payload(cfg.seed, static_cast<std::uint64_t>(i), cfg.blob_mib,
                             cfg.tokens_per_rollout);
            payloads[static_cast<std::size_t>(i)].completion_us =
                static_cast<std::int64_t>(ms_since(t0) * 1000.0);
            timing.gen_done_ms[static_cast<std::size_t>(i)] = ms_since(t0);
            if (cfg.ipss) {
                std::lock_guard lock(ready_mutex);
                ready.push_back(i);
                ready_cv.notify_one();
            }
        }
    };

    auto serialize_one = [&](int i) {
        timing.ser_start_ms[static_cast<std::size_t>(i)] = ms_since(t0);
        sleep_ms(ser_cost_ms);
        append_frame(frames[static_cast<std::size_t>(i)], payloads[static_cast<std::size_t>(i)]);
    };

    std::vector<std::thread> serializers;
    if (cfg.ipss) {
        for (int s = 0; s < serializer_threads; ++s) {
            serializers.emplace_back([&] {
                for (;;) {
                    int i = -1;
                    {
                        std::unique_lock lock(ready_mutex);
                        ready_cv.wait(lock, [&] { return !ready.empty() || gen_done_flag; });
                        if (ready.empty()) {
                            return;
                        }
                        i = ready.front();
                        ready.pop_front();
                    }
                    serialize_one(i);
                }
            });
        }
    }

    std::vector<std::thread> workers;
    for (int w = 0; w < cfg.workers; ++w) {
        workers.emplace_back(generator);
    }
    for (std::thread& t : workers) {
        t.join();
    }
    const double gen_finish = ms_since(t0);
    timing.gen_span_ms = gen_finish;

    if (cfg.ipss) {
        {
            std::lock_guard lock(ready_mutex);
            gen_done_flag = true;
            ready_cv.notify_all();
        }
        for (std::thread& t : serializers) {
            t.join();
        }
        // critical path: serialization still running after the last rollout
        timing.ser_critical_ms = std::max(0.0, ms_since(t0) - gen_finish);
    } else {
        // naive: the whole batch serializes after the last rollout finishes
        const double ser_begin = ms_since(t0);
        for (int i = 0; i < cfg.rollouts; ++i) {
            serialize_one(i);
        }
        timing.ser_critical_ms = ms_since(t0) - ser_begin;
    }

    // --- dispatch through the object store --------------------------------
    const double dispatch_begin = ms_since(t0);
    std::vector<RolloutPayload> received;
    received.reserve(static_cast<std::size_t>(cfg.rollouts));
    if (cfg.transport == Transport::QUEUE) {
        ByteQueue store(8);
        std::thread consumer([&] {
            FrameSplitter splitter;
            std::vector<std::uint8_t> chunk;
            while (static_cast<int>(received.size()) < cfg.rollouts && store.pop(chunk)) {
                splitter.feed(chunk.data(), chunk.size(), received);
            }
        });
        for (int i = 0; i < cfg.rollouts; ++i) {
            store.push(frames[static_cast<std::size_t>(i)]);
        }
        store.close();
        consumer.join();
    } else {
        PipeTransport pipe;
        std::thread producer([&] {
            for (int i = 0; i < cfg.rollouts; ++i) {
                pipe.write(frames[static_cast<std::size_t>(i)]);
            }
            pipe.close_writer();
        });
        FrameSplitter splitter;
        pipe.drain(splitter, received);
        producer.join();
    }
    if (static_cast<int>(received.size()) != cfg.rollouts) {
        throw DataError("object store lost payloads");
    }
    timing.dispatch_ms = ms_since(t0) - dispatch_begin;

    // raw bytes as the training process would hold them
    std::vector<std::uint8_t> raw;
    for (const RolloutPayload& p : received) {
        append_frame(raw, p);
    }

    // --- stages 2..4: log-prob recompute, reference, actor ----------------
    const double consume_begin = ms_since(t0);
    std::vector<RolloutPayload> cache;  // the intra-process tensor cache
    bool cache_valid = false;
    std::vector<RolloutPayload> batch;
    for (int stage = 0; stage < kConsumingStages; ++stage) {
        if (cfg.iptc && cache_valid) {
            timing.deser_per_stage[static_cast<std::size_t>(stage)] = 0;
        } else {
            sleep_ms(deser_cost_ms);
            FrameSplitter splitter;
            batch.clear();
            splitter.feed(raw.data(), raw.size(), batch);
            std::sort(batch.begin(), batch.end(),
                      [](const RolloutPayload& a, const RolloutPayload& b) { return a.id < b.id; });
            timing.deser_per_stage[static_cast<std::size_t>(stage)] = 1;
            ++timing.deser_count;
            if (cfg.iptc) {
                cache = batch;
                cache_valid = true;
            }
        }
        const std::vector<RolloutPayload>& inputs = (cfg.iptc && cache_valid) ? cache : batch;
        sleep_ms(cfg.durations.stage_compute_ms);
        if (stage == kConsumingStages - 1) {
            std::uint64_t h = 0xcbf29ce484222325ull;
            for (const RolloutPayload& p : inputs) {
                h = payload_content_hash(p, h);
            }
            timing.batch_hash = h;
        }
    }
    timing.consume_ms = ms_since(t0) - consume_begin;
    timing.step_ms = ms_since(t0);
    return timing;
}

std::vector<BenchCell> bench(const BenchConfig& cfg) {
    if (cfg.repeats < 3) {
        throw ConfigError("bench needs at least 3 repeats");
    }
    std::vector<BenchCell> cells;
    for (int workers : cfg.workers_grid) {
        for (double blob : cfg.blob_grid) {
            for (int ipss = 0; ipss <= 1; ++ipss) {
                for (int iptc = 0; iptc <= 1; ++iptc) {
                    StepConfig sc = cfg.base;
                    sc.workers = workers;
                    sc.blob_mib = blob;
                    sc.ipss = ipss != 0;
                    sc.iptc = iptc != 0;
                    std::vector<StepTiming> runs;
                    runs.reserve(static_cast<std::size_t>(cfg.repeats));
                    for (int r = 0; r < cfg.repeats; ++r) {
                        runs.push_back(run_step(sc));
                    }
                    std::vector<std::size_t> order(runs.size());
                    for (std::size_t i = 0; i < order.size(); ++i) {
                        order[i] = i;
                    }
                    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                        return runs[a].step_ms < runs[b].step_ms;
                    });
                    BenchCell cell;
                    cell.config = sc;
                    cell.median = runs[order[order.size() / 2]];
                    cell.step_ms_min = runs[order.front()].step_ms;
                    cell.step_ms_max = runs[order.back()].step_ms;
                    cells.push_back(std::move(cell));
                }
            }
        }
    }
    return cells;
}

void write_bench_csv(const std::vector<BenchCell>& cells, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot open for writing: " + path);
    }
    out << "workers,blob_mib,ipss,iptc,gen_ms_p50,ser_critical_ms,deser_count,step_ms\n";
    char line[256];
    for (const BenchCell& c : cells) {
        std::snprintf(line, sizeof line, "%d,%.2f,%d,%d,%.2f,%.2f,%d,%.2f\n", c.config.workers,
                      c.config.blob_mib, c.config.ipss ? 1 : 0, c.config.iptc ? 1 : 0,
                      c.median.gen_span_ms, c.median.ser_critical_ms, c.median.deser_count,
                      c.median.step_ms);
        out << line;
    }
    if (!out) {
        throw DataError("write failed: " + path);
    }
}

std::string bench_report(const std::vector<BenchCell>& cells) {
    std::ostringstream out;
    out << "pipeline benchmark (medians)\n";
    char line[512];
    for (const BenchCell& c : cells) {
        std::snprintf(line, sizeof line,
                      "workers=%d blob=%.1fMiB ipss=%d iptc=%d | gen %.0f ms, ser-critical %.0f ms, "
                      "deser x%d, step %.0f ms (min %.0f, max %.0f)\n",
                      c.config.workers, c.config.blob_mib, c.config.ipss ? 1 : 0,
                      c.config.iptc ? 1 : 0, c.median.gen_span_ms, c.median.ser_critical_ms,
                      c.median.deser_count, c.median.step_ms, c.step_ms_min, c.step_ms_max);
        out << line;
    }
    // speedups per (workers, blob) block relative to the both-off baseline
    for (std::size_t i = 0; i + 3 < cells.size(); i += 4) {
        const double base = cells[i].median.step_ms;
        std::snprintf(line, sizeof line,
                      "workers=%d blob=%.1fMiB speedups: ipss %.2fx, iptc %.2fx, both %.2fx\n",
                      cells[i].config.workers, cells[i].config.blob_mib,
                      base / cells[i + 2].median.step_ms, base / cells[i + 1].median.step_ms,
                      base / cells[i + 3].median.step_ms);
        out << line;
    }
    return out.str();
}

}  // namespace mtdrive::pipeline

#pragma once

// Deterministic in-process star transport. Messages move through framed
// envelopes with byte accounting per category; wall time never enters the
// model, so identical runs produce identical transcripts and timings.

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace pefl::net {

struct LinkParams {
    double bandwidth_bps = 1e9;  // 1 Gbps
    double delay_s = 0.01;       // one-way 10 ms

    void validate() const;
};

enum class Category : uint8_t {
    model_broadcast = 0,
    local_update = 1,
    partial_decryption = 2,
    bootstrap = 3,
    keygen = 4,
};
constexpr size_t kCategories = 5;
const char* category_name(Category c);

struct Envelope {
    Category tag = Category::model_broadcast;
    uint16_t version = 1;
    uint32_t round = 0;
    uint16_t sender = 0;
    uint16_t receiver = 0;
    std::vector<uint8_t> payload;

    // length prefix + tag + version + round + sender + receiver
    static constexpr size_t kHeaderBytes = 4 + 1 + 2 + 4 + 2 + 2;
    size_t wire_size() const { return kHeaderBytes + payload.size(); }
};

std::vector<uint8_t> encode_envelope(const Envelope& env);
Envelope decode_envelope(const std::vector<uint8_t>& bytes);

// taint metadata travels beside the envelope, not on the wire
struct SendMeta {
    bool plaintext_payload = true;   // false when the payload is a ciphertext
    bool secret_derived = false;     // touched by secret-layer data upstream
    bool sanctioned_decryption = false;  // produced by a protocol decrypt step
    double compute_s = 0.0;          // producer-side computation charged here
};

struct Record {
    Envelope env;  // payload may be elided for size-accounted bulk sends
    SendMeta meta;
    size_t wire_bytes = 0;  // accounted size, set by the router
};

struct PartyTraffic {
    std::array<uint64_t, kCategories> sent_bytes{};
    std::array<uint64_t, kCategories> recv_bytes{};
    uint64_t sent_msgs = 0;
    uint64_t recv_msgs = 0;
};

struct TrafficLog {
    std::map<uint16_t, PartyTraffic> party;
    uint64_t rounds = 0;

    uint64_t total_sent() const;
    uint64_t total_received() const;
    std::array<uint64_t, kCategories> category_totals() const;
};

std::string traffic_csv(const TrafficLog& log);
std::string traffic_json(const TrafficLog& log);

class Router {
public:
    explicit Router(uint16_t hub, LinkParams link = {});

    void register_endpoint(uint16_t id);
    // star topology: one side of every message must be the hub
    void send(const Envelope& env, const SendMeta& meta = {});
    // accounts header + payload_bytes without materializing the payload;
    // bulk ciphertext traffic goes through here
    void send_sized(const Envelope& env, size_t payload_bytes,
                    const SendMeta& meta = {});
    Envelope recv(uint16_t receiver);
    bool pending(uint16_t receiver) const;

    const TrafficLog& log() const { return log_; }
    const std::vector<Record>& transcript() const { return transcript_; }
    const LinkParams& link() const { return link_; }
    uint16_t hub() const { return hub_; }

private:
    uint16_t hub_;
    LinkParams link_;
    std::map<uint16_t, std::vector<Record>> queue_;  // per-receiver FIFO
    std::map<uint16_t, size_t> next_;
    TrafficLog log_;
    std::vector<Record> transcript_;
};

// Sum over rounds of the slowest party's (compute + delay + bytes*8/bw);
// synchronous rounds barrier on the last sender.
double simulated_time(const std::vector<Record>& transcript,
                      const LinkParams& link);

struct Violation {
    size_t index = 0;  // position in the transcript
    uint16_t sender = 0;
    uint16_t receiver = 0;
    uint32_t round = 0;
    Category tag = Category::model_broadcast;
};

// Plaintext payloads carrying secret-derived data are violations unless a
// sanctioned decryption step emitted them.
std::vector<Violation> taint_audit(const std::vector<Record>& transcript);

// ---------- microbenchmarks ----------

struct BenchResult {
    uint64_t bytes = 0;     // communicated per repetition
    uint64_t messages = 0;  // envelopes per repetition
};

struct BenchOp {
    std::string name;
    std::function<BenchResult()> body;
};

struct BenchRow {
    std::string name;
    double comp_s = 0;  // mean over repetitions
    double comm_s = 0;
    double total_s = 0;
    uint64_t bytes = 0;
};

std::vector<BenchRow> run_microbench(const std::vector<BenchOp>& ops,
                                     const LinkParams& link, int repetitions);
std::string bench_table(const std::vector<BenchRow>& rows);

}  // namespace pefl::net

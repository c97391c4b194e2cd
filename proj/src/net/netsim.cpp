#include "pefl/net/netsim.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <stdexcept>

#include <json.hpp>

namespace pefl::net {

namespace {

void put_le(std::vector<uint8_t>& out, uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out.push_back(uint8_t(v >> (8 * i)));
}

uint64_t get_le(const std::vector<uint8_t>& in, size_t off, int bytes) {
    uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= uint64_t(in[off + i]) << (8 * i);
    return v;
}

double message_seconds(const Record& r, const LinkParams& link) {
    const size_t bytes = r.wire_bytes ? r.wire_bytes : r.env.wire_size();
    return r.meta.compute_s + link.delay_s +
           double(bytes) * 8.0 / link.bandwidth_bps;
}

}  // namespace

void LinkParams::validate() const {
    if (bandwidth_bps <= 0 || delay_s <= 0)
        throw std::invalid_argument("link parameters must be positive");
}

const char* category_name(Category c) {
    switch (c) {
        case Category::model_broadcast: return "model-broadcast";
        case Category::local_update: return "local-update";
        case Category::partial_decryption: return "partial-decryption";
        case Category::bootstrap: return "bootstrap";
        case Category::keygen: return "keygen";
    }
    throw std::invalid_argument("unknown traffic category");
}

std::vector<uint8_t> encode_envelope(const Envelope& env) {
    std::vector<uint8_t> out;
    out.reserve(env.wire_size());
    put_le(out, env.payload.size(), 4);
    out.push_back(uint8_t(env.tag));
    put_le(out, env.version, 2);
    put_le(out, env.round, 4);
    put_le(out, env.sender, 2);
    put_le(out, env.receiver, 2);
    out.insert(out.end(), env.payload.begin(), env.payload.end());
    return out;
}

Envelope decode_envelope(const std::vector<uint8_t>& bytes) {
    if (bytes.size() < Envelope::kHeaderBytes)
        throw std::runtime_error("envelope: truncated header");
    Envelope env;
    const uint64_t len = get_le(bytes, 0, 4);
    const uint8_t tag = bytes[4];
    if (tag >= kCategories)
        throw std::runtime_error("envelope: unknown type tag");
    env.tag = Category(tag);
    env.version = uint16_t(get_le(bytes, 5, 2));
    env.round = uint32_t(get_le(bytes, 7, 4));
    env.sender = uint16_t(get_le(bytes, 11, 2));
    env.receiver = uint16_t(get_le(bytes, 13, 2));
    if (bytes.size() != Envelope::kHeaderBytes + len)
        throw std::runtime_error("envelope: length prefix mismatch");
    env.payload.assign(bytes.begin() + Envelope::kHeaderBytes, bytes.end());
    return env;
}

uint64_t TrafficLog::total_sent() const {
    uint64_t t = 0;
    for (const auto& [id, p] : party)
        for (uint64_t b : p.sent_bytes) t += b;
    return t;
}

uint64_t TrafficLog::total_received() const {
    uint64_t t = 0;
    for (const auto& [id, p] : party)
        for (uint64_t b : p.recv_bytes) t += b;
    return t;
}

std::array<uint64_t, kCategories> TrafficLog::category_totals() const {
    std::array<uint64_t, kCategories> t{};
    for (const auto& [id, p] : party)
        for (size_t c = 0; c < kCategories; ++c) t[c] += p.sent_bytes[c];
    return t;
}

std::string traffic_csv(const TrafficLog& log) {
    std::string out = "party";
    for (size_t c = 0; c < kCategories; ++c)
        out += std::string(",sent_") + category_name(Category(c));
    for (size_t c = 0; c < kCategories; ++c)
        out += std::string(",recv_") + category_name(Category(c));
    out += ",sent_msgs,recv_msgs\n";
    for (const auto& [id, p] : log.party) {
        out += std::to_string(id);
        for (uint64_t b : p.sent_bytes) out += "," + std::to_string(b);
        for (uint64_t b : p.recv_bytes) out += "," + std::to_string(b);
        out += "," + std::to_string(p.sent_msgs);
        out += "," + std::to_string(p.recv_msgs);
        out += "\n";
    }
    return out;
}

std::string traffic_json(const TrafficLog& log) {
    nlohmann::json j;
    j["rounds"] = log.rounds;
    j["total_sent"] = log.total_sent();
    j["total_received"] = log.total_received();
    for (const auto& [id, p] : log.party) {
        nlohmann::json jp;
        for (size_t c = 0; c < kCategories; ++c) {
            jp["sent"][category_name(Category(c))] = p.sent_bytes[c];
            jp["recv"][category_name(Category(c))] = p.recv_bytes[c];
        }
        jp["sent_msgs"] = p.sent_msgs;
        jp["recv_msgs"] = p.recv_msgs;
        j["parties"][std::to_string(id)] = jp;
    }
    return j.dump();
}

Router::Router(uint16_t hub, LinkParams link) : hub_(hub), link_(link) {
    link_.validate();
    register_endpoint(hub);
}

void Router::register_endpoint(uint16_t id) {
    queue_.try_emplace(id);
    next_.try_emplace(id, 0);
    log_.party.try_emplace(id);
}

void Router::send(const Envelope& env, const SendMeta& meta) {
    if (!queue_.count(env.sender))
        throw std::invalid_argument("send from unregistered endpoint");
    if (!queue_.count(env.receiver))
        throw std::invalid_argument("send to unregistered endpoint");
    if (env.sender != hub_ && env.receiver != hub_)
        throw std::invalid_argument("star topology: hub must be an endpoint "
                                    "of every message");
    if (uint8_t(env.tag) >= kCategories)
        throw std::invalid_argument("unknown traffic category");

    const size_t bytes = env.wire_size();
    queue_[env.receiver].push_back({env, meta, bytes});
    transcript_.push_back({env, meta, bytes});
    PartyTraffic& s = log_.party[env.sender];
    s.sent_bytes[size_t(env.tag)] += bytes;
    ++s.sent_msgs;
    log_.rounds = std::max<uint64_t>(log_.rounds, uint64_t(env.round) + 1);
}

void Router::send_sized(const Envelope& env, size_t payload_bytes,
                        const SendMeta& meta) {
    if (!env.payload.empty())
        throw std::invalid_argument("send_sized takes an empty payload");
    if (!queue_.count(env.sender))
        throw std::invalid_argument("send from unregistered endpoint");
    if (!queue_.count(env.receiver))
        throw std::invalid_argument("send to unregistered endpoint");
    if (env.sender != hub_ && env.receiver != hub_)
        throw std::invalid_argument("star topology: hub must be an endpoint "
                                    "of every message");
    if (uint8_t(env.tag) >= kCategories)
        throw std::invalid_argument("unknown traffic category");

    const size_t bytes = Envelope::kHeaderBytes + payload_bytes;
    queue_[env.receiver].push_back({env, meta, bytes});
    transcript_.push_back({env, meta, bytes});
    PartyTraffic& s = log_.party[env.sender];
    s.sent_bytes[size_t(env.tag)] += bytes;
    ++s.sent_msgs;
    log_.rounds = std::max<uint64_t>(log_.rounds, uint64_t(env.round) + 1);
}

Envelope Router::recv(uint16_t receiver) {
    auto it = queue_.find(receiver);
    if (it == queue_.end())
        throw std::invalid_argument("recv on unregistered endpoint");
    size_t& cursor = next_[receiver];
    if (cursor >= it->second.size())
        throw std::runtime_error("recv on empty queue");
    const Record& r = it->second[cursor++];
    PartyTraffic& p = log_.party[receiver];
    p.recv_bytes[size_t(r.env.tag)] += r.wire_bytes;
    ++p.recv_msgs;
    return r.env;
}

bool Router::pending(uint16_t receiver) const {
    auto it = queue_.find(receiver);
    if (it == queue_.end()) return false;
    return next_.at(receiver) < it->second.size();
}

double simulated_time(const std::vector<Record>& transcript,
                      const LinkParams& link) {
    link.validate();
    // round barrier: everyone waits for the slowest sender in the round
    std::map<uint32_t, std::map<uint16_t, double>> per_round;
    for (const Record& r : transcript)
        per_round[r.env.round][r.env.sender] += message_seconds(r, link);
    double total = 0;
    for (const auto& [round, senders] : per_round) {
        double worst = 0;
        for (const auto& [id, secs] : senders) worst = std::max(worst, secs);
        total += worst;
    }
    return total;
}

std::vector<Violation> taint_audit(const std::vector<Record>& transcript) {
    std::vector<Violation> out;
    for (size_t i = 0; i < transcript.size(); ++i) {
        const Record& r = transcript[i];
        if (r.meta.plaintext_payload && r.meta.secret_derived &&
            !r.meta.sanctioned_decryption)
            out.push_back({i, r.env.sender, r.env.receiver, r.env.round,
                           r.env.tag});
    }
    return out;
}

std::vector<BenchRow> run_microbench(const std::vector<BenchOp>& ops,
                                     const LinkParams& link,
                                     int repetitions) {
    link.validate();
    if (repetitions < 1)
        throw std::invalid_argument("repetitions must be positive");
    std::vector<BenchRow> rows;
    rows.reserve(ops.size());
    for (const BenchOp& op : ops) {
        BenchRow row;
        row.name = op.name;
        BenchResult res;
        double secs = 0;
        for (int r = 0; r < repetitions; ++r) {
            const auto t0 = std::chrono::steady_clock::now();
            res = op.body();
            const auto t1 = std::chrono::steady_clock::now();
            secs += std::chrono::duration<double>(t1 - t0).count();
        }
        row.comp_s = secs / repetitions;
        row.bytes = res.bytes;
        row.comm_s = double(res.messages) * link.delay_s +
                     double(res.bytes) * 8.0 / link.bandwidth_bps;
        row.total_s = row.comp_s + row.comm_s;
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string bench_table(const std::vector<BenchRow>& rows) {
    char buf[160];
    std::string out;
    std::snprintf(buf, sizeof buf, "%-28s %12s %12s %12s %14s\n",
                  "operation", "comp (ms)", "comm (ms)", "total (ms)",
                  "bytes");
    out += buf;
    for (const BenchRow& r : rows) {
        std::snprintf(buf, sizeof buf, "%-28s %12.3f %12.3f %12.3f %14llu\n",
                      r.name.c_str(), r.comp_s * 1e3, r.comm_s * 1e3,
                      r.total_s * 1e3,
                      static_cast<unsigned long long>(r.bytes));
        out += buf;
    }
    return out;
}

}  // namespace pefl::net

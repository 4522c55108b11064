#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "dstreamon/fields.hpp"

namespace dstreamon::pipeline {

// Parsed per-packet field record. Fields of a layer are meaningful only
// when that layer's bit is set in valid_layers.
struct PacketView {
    uint64_t capture_ts = 0;  // microseconds since epoch
    uint32_t wire_len = 0;

    std::array<uint8_t, 6> eth_src{};
    std::array<uint8_t, 6> eth_dst{};
    uint16_t eth_type = 0;

    uint32_t ip_src = 0;  // host order numeric value; keys re-encode big-endian
    uint32_t ip_dst = 0;
    uint8_t ip_proto = 0;
    uint16_t ip_len = 0;  // total-length header field
    uint8_t ip_ttl = 0;

    uint16_t l4_sport = 0;
    uint16_t l4_dport = 0;
    uint8_t tcp_flags = 0;
    uint8_t icmp_type = 0;
    uint8_t icmp_code = 0;
    uint16_t payload_len = 0;

    uint8_t valid_layers = 0;  // bit per Layer
    bool l3_malformed = false;

    bool has_layer(Layer l) const { return valid_layers & (1u << static_cast<int>(l)); }
    void set_layer(Layer l) { valid_layers |= (1u << static_cast<int>(l)); }
};

// Ethernet II / IPv4 / {TCP, UDP, ICMP}. Returns nullopt only for frames
// shorter than the 14-byte Ethernet header (TruncatedFrame); anything else
// degrades to whichever layers parsed cleanly.
std::optional<PacketView> parse_packet(std::string_view frame, uint64_t ts_us);

// Numeric field read; nullopt when the field's layer is not valid.
std::optional<uint64_t> read_field(const PacketView& pkt, FieldId id);

// Appends the field's canonical big-endian encoding at its fixed width.
// Returns false when the layer is missing (nothing appended).
bool append_field_bytes(const PacketView& pkt, FieldId id, std::string& out);

}  // namespace dstreamon::pipeline

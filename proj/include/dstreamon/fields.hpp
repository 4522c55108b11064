#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

namespace dstreamon {

enum class Layer : uint8_t { L2 = 0, L3 = 1, L4 = 2 };

// Packet fields exposed to the rule language. The set is fixed: unknown
// selector names are validation errors, never runtime errors.
enum class FieldId : uint8_t {
    EthSrc,
    EthDst,
    EthType,
    IpSrc,
    IpDst,
    IpProto,
    IpLen,
    IpTtl,
    L4Sport,
    L4Dport,
    TcpFlags,
    IcmpType,
    IcmpCode,
    PayloadLen,
    WireLen,
};

constexpr int kFieldCount = 15;

struct FieldInfo {
    FieldId id;
    const char* name;      // dotted selector as written in the DSL
    Layer layer;           // layer that must be valid for the field to be readable
    uint8_t key_width;     // bytes contributed to an entity key, network order
    FieldId counterpart;   // swapped partner under bidirectional normalization
};

inline const FieldInfo* field_table() {
    static const FieldInfo table[kFieldCount] = {
        {FieldId::EthSrc, "eth.src", Layer::L2, 6, FieldId::EthDst},
        {FieldId::EthDst, "eth.dst", Layer::L2, 6, FieldId::EthSrc},
        {FieldId::EthType, "eth.type", Layer::L2, 2, FieldId::EthType},
        {FieldId::IpSrc, "ip.src", Layer::L3, 4, FieldId::IpDst},
        {FieldId::IpDst, "ip.dst", Layer::L3, 4, FieldId::IpSrc},
        {FieldId::IpProto, "ip.proto", Layer::L3, 1, FieldId::IpProto},
        {FieldId::IpLen, "ip.len", Layer::L3, 2, FieldId::IpLen},
        {FieldId::IpTtl, "ip.ttl", Layer::L3, 1, FieldId::IpTtl},
        {FieldId::L4Sport, "l4.sport", Layer::L4, 2, FieldId::L4Dport},
        {FieldId::L4Dport, "l4.dport", Layer::L4, 2, FieldId::L4Sport},
        {FieldId::TcpFlags, "tcp.flags", Layer::L4, 1, FieldId::TcpFlags},
        {FieldId::IcmpType, "icmp.type", Layer::L4, 1, FieldId::IcmpType},
        {FieldId::IcmpCode, "icmp.code", Layer::L4, 1, FieldId::IcmpCode},
        {FieldId::PayloadLen, "payload.len", Layer::L4, 2, FieldId::PayloadLen},
        {FieldId::WireLen, "pkt.len", Layer::L2, 2, FieldId::WireLen},
    };
    return table;
}

inline const FieldInfo& field_info(FieldId id) { return field_table()[static_cast<int>(id)]; }

inline std::optional<FieldId> field_by_name(std::string_view name) {
    for (int i = 0; i < kFieldCount; ++i)
        if (name == field_table()[i].name) return field_table()[i].id;
    return std::nullopt;
}

}  // namespace dstreamon

#include "dstreamon/packet.hpp"

#include "dstreamon/bytes.hpp"

namespace dstreamon::pipeline {

namespace {

constexpr uint16_t kEthIpv4 = 0x0800;
constexpr size_t kEthHeader = 14;

const uint8_t* u8(std::string_view s) { return reinterpret_cast<const uint8_t*>(s.data()); }

}  // namespace

std::optional<PacketView> parse_packet(std::string_view frame, uint64_t ts_us) {
    if (frame.size() < kEthHeader) return std::nullopt;

    PacketView pkt;
    pkt.capture_ts = ts_us;
    pkt.wire_len = static_cast<uint32_t>(frame.size());

    const uint8_t* p = u8(frame);
    std::copy(p, p + 6, pkt.eth_dst.begin());
    std::copy(p + 6, p + 12, pkt.eth_src.begin());
    pkt.eth_type = get_be16(p + 12);
    pkt.set_layer(Layer::L2);

    if (pkt.eth_type != kEthIpv4) return pkt;

    const size_t l3_avail = frame.size() - kEthHeader;
    if (l3_avail < 20) {
        pkt.l3_malformed = true;
        return pkt;
    }
    const uint8_t* ip = p + kEthHeader;
    const uint8_t version = ip[0] >> 4;
    const size_t ihl = static_cast<size_t>(ip[0] & 0x0f) * 4;
    const uint16_t total_len = get_be16(ip + 2);
    if (version != 4 || ihl < 20 || ihl > l3_avail || total_len < ihl || total_len > l3_avail) {
        pkt.l3_malformed = true;
        return pkt;
    }

    pkt.ip_len = total_len;
    pkt.ip_ttl = ip[8];
    pkt.ip_proto = ip[9];
    pkt.ip_src = get_be32(ip + 12);
    pkt.ip_dst = get_be32(ip + 16);
    pkt.set_layer(Layer::L3);

    const uint16_t frag = get_be16(ip + 6);
    if ((frag & 0x1fff) != 0) return pkt;  // non-first fragment: no L4 header

    const uint8_t* l4 = ip + ihl;
    const size_t l4_avail = frame.size() - kEthHeader - ihl;

    switch (pkt.ip_proto) {
        case 6: {  // TCP
            if (l4_avail < 20) return pkt;
            const size_t doff = static_cast<size_t>(l4[12] >> 4) * 4;
            if (doff < 20 || doff > l4_avail) return pkt;
            pkt.l4_sport = get_be16(l4);
            pkt.l4_dport = get_be16(l4 + 2);
            pkt.tcp_flags = l4[13];
            pkt.payload_len = static_cast<uint16_t>(l4_avail - doff);
            pkt.set_layer(Layer::L4);
            break;
        }
        case 17: {  // UDP
            if (l4_avail < 8) return pkt;
            pkt.l4_sport = get_be16(l4);
            pkt.l4_dport = get_be16(l4 + 2);
            pkt.payload_len = static_cast<uint16_t>(l4_avail - 8);
            pkt.set_layer(Layer::L4);
            break;
        }
        case 1: {  // ICMP
            if (l4_avail < 8) return pkt;
            pkt.icmp_type = l4[0];
            pkt.icmp_code = l4[1];
            pkt.payload_len = static_cast<uint16_t>(l4_avail - 8);
            pkt.set_layer(Layer::L4);
            break;
        }
        default:
            break;
    }
    return pkt;
}

std::optional<uint64_t> read_field(const PacketView& pkt, FieldId id) {
    const FieldInfo& fi = field_info(id);
    if (!pkt.has_layer(fi.layer)) return std::nullopt;
    switch (id) {
        case FieldId::EthSrc: {
            uint64_t v = 0;
            for (uint8_t b : pkt.eth_src) v = (v << 8) | b;
            return v;
        }
        case FieldId::EthDst: {
            uint64_t v = 0;
            for (uint8_t b : pkt.eth_dst) v = (v << 8) | b;
            return v;
        }
        case FieldId::EthType:
            return pkt.eth_type;
        case FieldId::IpSrc:
            return pkt.ip_src;
        case FieldId::IpDst:
            return pkt.ip_dst;
        case FieldId::IpProto:
            return pkt.ip_proto;
        case FieldId::IpLen:
            return pkt.ip_len;
        case FieldId::IpTtl:
            return pkt.ip_ttl;
        case FieldId::L4Sport:
            return pkt.l4_sport;
        case FieldId::L4Dport:
            return pkt.l4_dport;
        case FieldId::TcpFlags:
            // flags only exist for TCP; other protocols read as 0
            return pkt.ip_proto == 6 ? pkt.tcp_flags : 0;
        case FieldId::IcmpType:
            return pkt.ip_proto == 1 ? pkt.icmp_type : 0;
        case FieldId::IcmpCode:
            return pkt.ip_proto == 1 ? pkt.icmp_code : 0;
        case FieldId::PayloadLen:
            return pkt.payload_len;
        case FieldId::WireLen:
            return pkt.wire_len;
    }
    return std::nullopt;
}

bool append_field_bytes(const PacketView& pkt, FieldId id, std::string& out) {
    const FieldInfo& fi = field_info(id);
    auto v = read_field(pkt, id);
    if (!v) return false;
    uint64_t x = *v;
    for (int i = fi.key_width - 1; i >= 0; --i)
        out.push_back(static_cast<char>((x >> (8 * i)) & 0xff));
    return true;
}

}  // namespace dstreamon::pipeline

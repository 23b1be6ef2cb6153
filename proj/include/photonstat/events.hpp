#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "photonstat/common.hpp"

namespace photonstat {

/// One detector click. Streams are sorted by time, ties broken by channel.
struct EventRecord {
    std::uint8_t channel = 0;
    std::int64_t time_ps = 0;

    friend bool operator==(const EventRecord&, const EventRecord&) = default;
    friend bool operator<(const EventRecord& a, const EventRecord& b) {
        return a.time_ps != b.time_ps ? a.time_ps < b.time_ps : a.channel < b.channel;
    }
};

/// Ordered click record plus the acquisition length the clicks were taken in.
struct EventStream {
    std::vector<EventRecord> events;
    std::int64_t duration_ps = 0;

    bool is_sorted() const { return std::is_sorted(events.begin(), events.end()); }
    void sort() { std::sort(events.begin(), events.end()); }

    std::vector<std::int64_t> channel_times(std::uint8_t channel) const {
        std::vector<std::int64_t> out;
        for (const auto& e : events)
            if (e.channel == channel) out.push_back(e.time_ps);
        return out;
    }

    std::size_t channel_count(std::uint8_t channel) const {
        std::size_t n = 0;
        for (const auto& e : events) n += (e.channel == channel);
        return n;
    }

    /// Acquisition length; falls back to the observed time extent when the
    /// stream carries no explicit duration (e.g. after reading a tag file).
    std::int64_t effective_duration_ps() const {
        if (duration_ps > 0) return duration_ps;
        if (events.size() < 2) return 0;
        return events.back().time_ps - events.front().time_ps;
    }
};

inline constexpr std::array<char, 8> kTtagMagic = {'T', 'T', 'A', 'G', '1', '\0', '\0', '\0'};
inline constexpr std::size_t kTtagRecordBytes = 9;  // 1 byte channel + 8 bytes time

/// Writes the binary time-tag format: 8-byte magic, then little-endian
/// {channel: u8, time_ps: i64} records. Returns the record count.
inline std::size_t write_stream(const EventStream& stream, std::ostream& os) {
    if (!stream.is_sorted()) throw InputError("write_stream: stream must be sorted by (time, channel)");
    os.write(kTtagMagic.data(), kTtagMagic.size());
    for (const auto& e : stream.events) {
        char rec[kTtagRecordBytes];
        rec[0] = static_cast<char>(e.channel);
        std::uint64_t t = static_cast<std::uint64_t>(e.time_ps);
        for (int i = 0; i < 8; ++i) rec[1 + i] = static_cast<char>((t >> (8 * i)) & 0xff);
        os.write(rec, sizeof rec);
    }
    if (!os) throw IoError("write_stream: stream failure");
    return stream.events.size();
}

inline std::size_t write_stream(const EventStream& stream, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    return write_stream(stream, os);
}

inline EventStream read_stream(std::istream& is, const std::string& name = "<stream>") {
    std::array<char, 8> magic{};
    is.read(magic.data(), magic.size());
    if (is.gcount() != static_cast<std::streamsize>(magic.size()) || magic != kTtagMagic)
        throw FormatError(name + ": bad TTAG1 magic");
    EventStream out;
    char rec[kTtagRecordBytes];
    while (is.read(rec, sizeof rec)) {
        EventRecord e;
        e.channel = static_cast<std::uint8_t>(rec[0]);
        std::uint64_t t = 0;
        for (int i = 0; i < 8; ++i) t |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(rec[1 + i])) << (8 * i);
        e.time_ps = static_cast<std::int64_t>(t);
        out.events.push_back(e);
    }
    if (is.gcount() != 0) throw FormatError(name + ": truncated record at end of file");
    return out;
}

inline EventStream read_stream(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path + "'");
    return read_stream(is, path);
}

/// CSV alternative with header "channel,time_ps".
inline void write_stream_csv(const EventStream& stream, std::ostream& os) {
    if (!stream.is_sorted()) throw InputError("write_stream_csv: stream must be sorted");
    os << "channel,time_ps\n";
    for (const auto& e : stream.events) os << static_cast<int>(e.channel) << ',' << e.time_ps << '\n';
    if (!os) throw IoError("write_stream_csv: stream failure");
}

inline EventStream read_stream_csv(std::istream& is, const std::string& name = "<stream>") {
    std::string line;
    bool header_seen = false;
    EventStream out;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            if (line.rfind("channel,time_ps", 0) != 0) throw FormatError(name + ": expected header 'channel,time_ps'");
            header_seen = true;
            continue;
        }
        std::istringstream ls(line);
        std::string a, b;
        if (!std::getline(ls, a, ',') || !std::getline(ls, b, ','))
            throw FormatError(name + ": malformed row '" + line + "'");
        EventRecord e;
        e.channel = static_cast<std::uint8_t>(std::stoi(a));
        e.time_ps = std::stoll(b);
        out.events.push_back(e);
    }
    if (!header_seen) throw FormatError(name + ": missing header row");
    return out;
}

/// Reads either format, deciding by the magic bytes.
inline EventStream read_stream_any(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path + "'");
    std::array<char, 8> head{};
    is.read(head.data(), head.size());
    is.clear();
    is.seekg(0);
    if (is.gcount() == static_cast<std::streamsize>(head.size()) && head == kTtagMagic) return read_stream(is, path);
    return read_stream_csv(is, path);
}

}  // namespace photonstat

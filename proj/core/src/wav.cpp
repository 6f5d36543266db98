#include "toggl/wav.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "toggl/error.hpp"

namespace toggl {

namespace {

uint32_t read_u32(const unsigned char *p) {
    return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 |
           uint32_t(p[3]) << 24;
}

uint16_t read_u16(const unsigned char *p) {
    return uint16_t(p[0]) | uint16_t(p[1]) << 8;
}

void put_u32(std::string &out, uint32_t v) {
    out.push_back(char(v & 0xFF));
    out.push_back(char((v >> 8) & 0xFF));
    out.push_back(char((v >> 16) & 0xFF));
    out.push_back(char((v >> 24) & 0xFF));
}

void put_u16(std::string &out, uint16_t v) {
    out.push_back(char(v & 0xFF));
    out.push_back(char((v >> 8) & 0xFF));
}

} // namespace

Waveform read_wav(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw DataError("cannot open WAV file: " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
        std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
        throw DataError("not a RIFF/WAVE file: " + path);

    int sample_rate = 0;
    uint16_t channels = 0, bits = 0, format = 0;
    bool have_fmt = false;
    Waveform wav;

    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const char *tag = reinterpret_cast<const char *>(bytes.data() + pos);
        const uint32_t size = read_u32(bytes.data() + pos + 4);
        const std::size_t body = pos + 8;
        if (body + size > bytes.size())
            throw DataError("truncated WAV chunk in " + path);
        if (std::memcmp(tag, "fmt ", 4) == 0) {
            if (size < 16)
                throw DataError("malformed fmt chunk in " + path);
            format = read_u16(bytes.data() + body);
            channels = read_u16(bytes.data() + body + 2);
            sample_rate = static_cast<int>(read_u32(bytes.data() + body + 4));
            bits = read_u16(bytes.data() + body + 14);
            have_fmt = true;
        } else if (std::memcmp(tag, "data", 4) == 0) {
            if (!have_fmt)
                throw DataError("data chunk before fmt chunk in " + path);
            if (format != 1 || bits != 16)
                throw DataError(path + ": only 16-bit PCM is supported");
            if (channels != 1)
                throw DataError(path + ": only mono is supported");
            const std::size_t count = size / 2;
            wav.samples.resize(count);
            for (std::size_t i = 0; i < count; ++i) {
                const int16_t s = static_cast<int16_t>(
                    read_u16(bytes.data() + body + 2 * i));
                wav.samples[i] = static_cast<float>(s) / 32767.0f;
            }
            wav.sample_rate = sample_rate;
            return wav;
        }
        pos = body + size + (size & 1); // chunks are word-aligned
    }
    throw DataError("no data chunk in WAV file: " + path);
}

std::size_t write_wav(const std::string &path, const Waveform &wav) {
    if (wav.samples.empty())
        throw DataError("refusing to write empty waveform: " + path);
    if (wav.sample_rate <= 0)
        throw DataError("invalid sample rate for " + path);

    std::size_t clipped = 0;
    std::string pcm;
    pcm.reserve(wav.samples.size() * 2);
    for (float s : wav.samples) {
        long v = std::lround(static_cast<double>(s) * 32767.0);
        if (v > 32767) {
            v = 32767;
            ++clipped;
        } else if (v < -32768) {
            v = -32768;
            ++clipped;
        }
        put_u16(pcm, static_cast<uint16_t>(static_cast<int16_t>(v)));
    }

    const uint32_t data_size = static_cast<uint32_t>(pcm.size());
    std::string out;
    out.reserve(44 + pcm.size());
    out += "RIFF";
    put_u32(out, 36 + data_size);
    out += "WAVE";
    out += "fmt ";
    put_u32(out, 16);
    put_u16(out, 1); // PCM
    put_u16(out, 1); // mono
    put_u32(out, static_cast<uint32_t>(wav.sample_rate));
    put_u32(out, static_cast<uint32_t>(wav.sample_rate) * 2); // byte rate
    put_u16(out, 2);                                          // block align
    put_u16(out, 16);                                         // bits
    out += "data";
    put_u32(out, data_size);
    out += pcm;

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f)
        throw DataError("cannot write WAV file: " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f)
        throw DataError("short write to WAV file: " + path);
    return clipped;
}

} // namespace toggl

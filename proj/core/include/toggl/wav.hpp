#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace toggl {

struct Waveform {
    std::vector<float> samples;
    int sample_rate = 16000;

    double duration_s() const {
        return static_cast<double>(samples.size()) / sample_rate;
    }
};

// Mono 16-bit PCM only. Anything else is a DataError.
Waveform read_wav(const std::string &path);

// Quantizes to 16-bit with clamping; returns the number of clipped samples.
// The float pipeline itself is never clipped.
std::size_t write_wav(const std::string &path, const Waveform &wav);

} // namespace toggl

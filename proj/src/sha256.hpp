#ifndef DAC_SHA256_HPP
#define DAC_SHA256_HPP

#include <cstdint>
#include <cstddef>
#include <string>

namespace dac {

// Minimal SHA-256 (FIPS 180-4), enough for file and parameter fingerprints.
class Sha256 {
public:
    Sha256();
    void update(const void* data, std::size_t len);
    // Hex digest; the object must not be updated afterwards.
    std::string hex_digest();

    static std::string of_bytes(const void* data, std::size_t len);
    static std::string of_file(const std::string& path);

private:
    void process_block(const std::uint8_t* block);

    std::uint32_t h_[8];
    std::uint8_t buf_[64];
    std::size_t buf_len_ = 0;
    std::uint64_t total_ = 0;
};

}  // namespace dac

#endif  // DAC_SHA256_HPP

#include "brainof/npy.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "brainof/errors.hpp"

namespace brainof::npy {

namespace {
constexpr char kMagic[] = "\x93NUMPY";

std::string shape_tuple(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < shape.size(); ++i) os << shape[i] << ", ";
    if (shape.size() > 1) {
        // trailing ", " only wanted for 0- and 1-tuples
        std::string s = os.str();
        s.erase(s.size() - 2);
        return s + ")";
    }
    return os.str() + ")";
}
}  // namespace

void save(const std::filesystem::path& path, const Tensor& t) {
    std::string header = "{'descr': '<f8', 'fortran_order': False, 'shape': " +
                         shape_tuple(t.shape) + ", }";
    // pad so that magic+version+len+header is a multiple of 64, newline-terminated
    std::size_t unpadded = 6 + 2 + 2 + header.size() + 1;
    std::size_t pad = (64 - unpadded % 64) % 64;
    header.append(pad, ' ');
    header.push_back('\n');

    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("npy: cannot open for write: " + path.string());
    f.write(kMagic, 6);
    f.put(1).put(0);
    std::uint16_t hlen = static_cast<std::uint16_t>(header.size());
    f.put(static_cast<char>(hlen & 0xff)).put(static_cast<char>(hlen >> 8));
    f.write(header.data(), static_cast<std::streamsize>(header.size()));
    f.write(reinterpret_cast<const char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    if (!f) throw IoError("npy: write failed: " + path.string());
}

Tensor load(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("npy: cannot open for read: " + path.string());
    char magic[6];
    f.read(magic, 6);
    if (!f || std::memcmp(magic, kMagic, 6) != 0)
        throw IoError("npy: bad magic in " + path.string());
    char ver[2];
    f.read(ver, 2);
    std::uint8_t lo = static_cast<std::uint8_t>(f.get());
    std::uint8_t hi = static_cast<std::uint8_t>(f.get());
    std::size_t hlen = lo | (static_cast<std::size_t>(hi) << 8);
    std::string header(hlen, '\0');
    f.read(header.data(), static_cast<std::streamsize>(hlen));
    if (!f) throw IoError("npy: truncated header in " + path.string());

    if (header.find("'<f8'") == std::string::npos)
        throw IoError("npy: unsupported dtype (want '<f8') in " + path.string());
    if (header.find("'fortran_order': False") == std::string::npos)
        throw IoError("npy: fortran order unsupported in " + path.string());

    auto lp = header.find('(');
    auto rp = header.find(')', lp);
    if (lp == std::string::npos || rp == std::string::npos)
        throw IoError("npy: malformed shape in " + path.string());
    std::vector<std::size_t> shape;
    std::string inner = header.substr(lp + 1, rp - lp - 1);
    std::istringstream is(inner);
    std::string tok;
    while (std::getline(is, tok, ',')) {
        std::size_t b = tok.find_first_not_of(" \t");
        if (b == std::string::npos) continue;
        shape.push_back(std::stoul(tok.substr(b)));
    }
    Tensor t(shape);
    f.read(reinterpret_cast<char*>(t.data.data()),
           static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    if (!f) throw IoError("npy: truncated data in " + path.string());
    return t;
}

}  // namespace brainof::npy

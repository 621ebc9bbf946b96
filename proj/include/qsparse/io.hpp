#pragma once

// File formats.
//
// Binary matrix (.qsb), all fields little-endian:
//   offset 0   char[4]  magic "QSB1"
//   offset 4   uint32   dtype tag, 1 = complex128
//   offset 8   uint64   rows
//   offset 16  uint64   cols
//   offset 24  float64  payload, row-major, interleaved (re, im) per entry
// A vector is stored as a rows x 1 matrix.
//
// CSV: matrices as `row,col,re,im`; sparse estimates as `index,re,im`.
// Images: ASCII PGM (P2), values scaled so the maximum maps to 255.
// Every writer goes through write_atomically: a sibling temporary file is
// written and then renamed over the target.

#include "qsparse/common.hpp"
#include "qsparse/sparse_solvers.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>

namespace qsparse::io {

inline constexpr std::array<char, 4> kBinaryMagic{'Q', 'S', 'B', '1'};
inline constexpr std::uint32_t kDtypeComplex128 = 1;

namespace detail {

template <class T>
void put_le(std::ostream& os, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    std::array<unsigned char, sizeof(T)> bytes;
    std::memcpy(bytes.data(), &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    os.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <class T>
T get_le(std::istream& is) {
    std::array<unsigned char, sizeof(T)> bytes;
    if (!is.read(reinterpret_cast<char*>(bytes.data()), sizeof(T))) throw InvalidInput("truncated binary file");
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    T value;
    std::memcpy(&value, bytes.data(), sizeof(T));
    return value;
}

// 17 significant digits round-trip every double.
inline std::string format_double(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

}  // namespace detail

/// Writes `fill`'s output to a temporary next to `path`, then renames it into place.
inline void write_atomically(const std::filesystem::path& path, const std::function<void(std::ostream&)>& fill,
                             bool binary = false) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
        if (!os) throw Error("cannot open " + tmp.string() + " for writing");
        fill(os);
        os.flush();
        if (!os) throw Error("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline void write_binary(std::ostream& os, const CMatrix& m) {
    os.write(kBinaryMagic.data(), kBinaryMagic.size());
    detail::put_le<std::uint32_t>(os, kDtypeComplex128);
    detail::put_le<std::uint64_t>(os, static_cast<std::uint64_t>(m.rows()));
    detail::put_le<std::uint64_t>(os, static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            detail::put_le<double>(os, m(r, c).real());
            detail::put_le<double>(os, m(r, c).imag());
        }
}

inline void write_binary(const std::filesystem::path& path, const CMatrix& m) {
    write_atomically(path, [&](std::ostream& os) { write_binary(os, m); }, true);
}

inline CMatrix read_binary(std::istream& is) {
    std::array<char, 4> magic{};
    if (!is.read(magic.data(), magic.size()) || magic != kBinaryMagic) throw InvalidInput("not a QSB1 file");
    const auto dtype = detail::get_le<std::uint32_t>(is);
    if (dtype != kDtypeComplex128) throw InvalidInput("unsupported dtype tag " + std::to_string(dtype));
    const auto rows = detail::get_le<std::uint64_t>(is);
    const auto cols = detail::get_le<std::uint64_t>(is);
    if (rows > (std::uint64_t{1} << 31) || cols > (std::uint64_t{1} << 31)) throw InvalidInput("implausible matrix shape");
    CMatrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            const double re = detail::get_le<double>(is);
            const double im = detail::get_le<double>(is);
            m(r, c) = {re, im};
        }
    return m;
}

inline CMatrix read_binary(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw InvalidInput("cannot open " + path.string());
    return read_binary(is);
}

inline void write_matrix_csv(std::ostream& os, const CMatrix& m) {
    os << "row,col,re,im\n";
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            os << r << ',' << c << ',' << detail::format_double(m(r, c).real()) << ','
               << detail::format_double(m(r, c).imag()) << '\n';
}

inline void write_matrix_csv(const std::filesystem::path& path, const CMatrix& m) {
    write_atomically(path, [&](std::ostream& os) { write_matrix_csv(os, m); });
}

/// Reads the `row,col,re,im` layout back; missing entries are zero.
inline CMatrix read_matrix_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line != "row,col,re,im") throw InvalidInput("missing row,col,re,im header");
    std::vector<std::tuple<Eigen::Index, Eigen::Index, cplx>> entries;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        Eigen::Index r = 0;
        Eigen::Index c = 0;
        double re = 0.0;
        double im = 0.0;
        char comma = 0;
        if (!(ls >> r >> comma >> c >> comma >> re >> comma >> im)) throw InvalidInput("malformed CSV line: " + line);
        entries.emplace_back(r, c, cplx{re, im});
        rows = std::max(rows, r + 1);
        cols = std::max(cols, c + 1);
    }
    CMatrix m = CMatrix::Zero(rows, cols);
    for (const auto& [r, c, v] : entries) m(r, c) = v;
    return m;
}

/// One `index,re,im` line per entry of the vector, zeros included.
inline void write_vector_csv(std::ostream& os, const CVector& v) {
    os << "index,re,im\n";
    for (Eigen::Index i = 0; i < v.size(); ++i)
        os << i << ',' << detail::format_double(v(i).real()) << ',' << detail::format_double(v(i).imag()) << '\n';
}

inline void write_vector_csv(const std::filesystem::path& path, const CVector& v) {
    write_atomically(path, [&](std::ostream& os) { write_vector_csv(os, v); });
}

inline CVector read_vector_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line != "index,re,im") throw InvalidInput("missing index,re,im header");
    std::vector<cplx> values;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::size_t i = 0;
        double re = 0.0;
        double im = 0.0;
        char comma = 0;
        if (!(ls >> i >> comma >> re >> comma >> im)) throw InvalidInput("malformed CSV line: " + line);
        if (i != values.size()) throw InvalidInput("CSV indices must be consecutive from 0");
        values.emplace_back(re, im);
    }
    return Eigen::Map<CVector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

inline CVector read_vector_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw InvalidInput("cannot open " + path.string());
    return read_vector_csv(is);
}

/// The K-sparse estimate of a recovery, support entries only.
inline void write_recovery_csv(std::ostream& os, const RecoveryResult& r) {
    os << "index,re,im\n";
    for (auto i : r.support) {
        const cplx v = r.estimate(static_cast<Eigen::Index>(i));
        os << i << ',' << detail::format_double(v.real()) << ',' << detail::format_double(v.imag()) << '\n';
    }
}

/// ASCII graymap; the largest value maps to 255, an all-zero image stays black.
inline void write_pgm(std::ostream& os, const RMatrix& image) {
    if (image.size() == 0) throw InvalidInput("empty image");
    if (!image.allFinite() || image.minCoeff() < 0.0) throw InvalidInput("image values must be finite and non-negative");
    const double peak = image.maxCoeff();
    os << "P2\n" << image.cols() << ' ' << image.rows() << "\n255\n";
    for (Eigen::Index r = 0; r < image.rows(); ++r) {
        for (Eigen::Index c = 0; c < image.cols(); ++c) {
            const long v = peak > 0.0 ? std::lround(255.0 * image(r, c) / peak) : 0;
            os << (c ? " " : "") << v;
        }
        os << '\n';
    }
}

inline void write_pgm(const std::filesystem::path& path, const RMatrix& image) {
    write_atomically(path, [&](std::ostream& os) { write_pgm(os, image); });
}

/// Parses a P2 file into raw gray levels.
inline RMatrix read_pgm(std::istream& is) {
    std::string magic;
    is >> magic;
    if (magic != "P2") throw InvalidInput("not an ASCII PGM");
    long width = 0;
    long height = 0;
    long maxval = 0;
    if (!(is >> width >> height >> maxval) || width <= 0 || height <= 0 || maxval <= 0) throw InvalidInput("bad PGM header");
    RMatrix m(height, width);
    for (long r = 0; r < height; ++r)
        for (long c = 0; c < width; ++c) {
            long v = 0;
            if (!(is >> v)) throw InvalidInput("truncated PGM");
            m(r, c) = static_cast<double>(v);
        }
    return m;
}

/// Plain real matrix as CSV with no header, one image row per line.
inline void write_image_csv(const std::filesystem::path& path, const RMatrix& image) {
    write_atomically(path, [&](std::ostream& os) {
        for (Eigen::Index r = 0; r < image.rows(); ++r) {
            for (Eigen::Index c = 0; c < image.cols(); ++c) os << (c ? "," : "") << detail::format_double(image(r, c));
            os << '\n';
        }
    });
}

}  // namespace qsparse::io

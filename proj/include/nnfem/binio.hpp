#pragma once

// Little-endian binary read/write helpers shared by the file formats.

#include "nnfem/types.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace nnfem {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

class BinWriter {
public:
    explicit BinWriter(const std::string& path) : path_(path), out_(path, std::ios::binary | std::ios::trunc)
    {
        if (!out_) throw IoError("cannot open '" + path + "' for writing");
    }

    void magic(const char (&m)[5]) { raw(m, 4); }
    void u32(std::uint32_t v) { raw(&v, sizeof v); }
    void i32(std::int32_t v) { raw(&v, sizeof v); }
    void u64(std::uint64_t v) { raw(&v, sizeof v); }
    void f64(double v) { raw(&v, sizeof v); }
    void f64s(const double* p, std::size_t n) { raw(p, n * sizeof(double)); }
    void str(const std::string& s)
    {
        u32(static_cast<std::uint32_t>(s.size()));
        raw(s.data(), s.size());
    }

    void close()
    {
        out_.close();
        if (!out_) throw IoError("write to '" + path_ + "' failed");
    }

private:
    void raw(const void* p, std::size_t n)
    {
        out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
        if (!out_) throw IoError("write to '" + path_ + "' failed");
    }

    std::string path_;
    std::ofstream out_;
};

class BinReader {
public:
    explicit BinReader(const std::string& path) : path_(path), in_(path, std::ios::binary)
    {
        if (!in_) throw IoError("cannot open '" + path + "' for reading");
    }

    void expect_magic(const char (&m)[5])
    {
        char buf[4];
        raw(buf, 4);
        if (std::memcmp(buf, m, 4) != 0) throw IoError("'" + path_ + "' is not a " + std::string(m) + " file");
    }
    std::uint32_t u32() { return get<std::uint32_t>(); }
    std::int32_t i32() { return get<std::int32_t>(); }
    std::uint64_t u64() { return get<std::uint64_t>(); }
    double f64() { return get<double>(); }
    void f64s(double* p, std::size_t n) { raw(p, n * sizeof(double)); }
    std::string str()
    {
        const std::uint32_t n = u32();
        if (n > (1u << 20)) throw IoError("'" + path_ + "': implausible string length");
        std::string s(n, '\0');
        raw(s.data(), n);
        return s;
    }

    /// Throws unless the whole file has been consumed.
    void expect_end()
    {
        if (in_.peek() != std::char_traits<char>::eof()) throw IoError("'" + path_ + "': trailing bytes");
    }

    const std::string& path() const { return path_; }

private:
    template <class T>
    T get()
    {
        T v;
        raw(&v, sizeof v);
        return v;
    }

    void raw(void* p, std::size_t n)
    {
        in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (in_.gcount() != static_cast<std::streamsize>(n)) throw IoError("'" + path_ + "' is truncated");
    }

    std::string path_;
    std::ifstream in_;
};

}  // namespace nnfem

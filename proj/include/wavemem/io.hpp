#pragma once

// Stable file formats. The tensor container is a tiny binary format: the magic
// "TWM1", a little-endian u32 header length, a JSON header listing named
// entries (shape, dtype "f64-le", byte offset into the payload), then the raw
// little-endian doubles. Save/load round-trips are bit-identical. CSV output
// uses '.' decimals and 17 significant digits so values survive a round trip.

#include "wavemem/rnn.hpp"
#include "wavemem/twm.hpp"

#include <nlohmann/json.hpp>

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace wavemem {

static_assert(std::endian::native == std::endian::little,
              "container payloads are little-endian; big-endian hosts are unsupported");

struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

class TensorContainer {
public:
    struct Entry {
        std::string name;
        std::vector<std::int64_t> shape;
        std::vector<double> data; // row-major
    };

    static constexpr char magic[4] = {'T', 'W', 'M', '1'};
    static constexpr int format_version = 1;

    void add(const std::string& name, const Mat& value) {
        require_finite(value, "TensorContainer.add");
        Entry e;
        e.name = name;
        e.shape = {value.rows(), value.cols()};
        e.data.resize(static_cast<std::size_t>(value.size()));
        std::size_t k = 0;
        for (Index r = 0; r < value.rows(); ++r)
            for (Index c = 0; c < value.cols(); ++c) e.data[k++] = value(r, c);
        push(std::move(e));
    }

    void add(const std::string& name, const Vec& value) {
        if (!value.allFinite()) throw std::invalid_argument("TensorContainer.add: non-finite entries");
        Entry e;
        e.name = name;
        e.shape = {value.size()};
        e.data.assign(value.data(), value.data() + value.size());
        push(std::move(e));
    }

    void add_scalar(const std::string& name, double value) {
        if (!std::isfinite(value)) throw std::invalid_argument("TensorContainer.add_scalar: non-finite");
        Entry e;
        e.name = name;
        e.shape = {1};
        e.data = {value};
        push(std::move(e));
    }

    bool contains(const std::string& name) const {
        for (const Entry& e : entries_)
            if (e.name == name) return true;
        return false;
    }

    const Entry& entry(const std::string& name) const {
        for (const Entry& e : entries_)
            if (e.name == name) return e;
        throw io_error("container: no entry named '" + name + "'");
    }

    Mat matrix(const std::string& name) const {
        const Entry& e = entry(name);
        if (e.shape.size() != 2) throw io_error("container: '" + name + "' is not a matrix");
        Mat m(e.shape[0], e.shape[1]);
        std::size_t k = 0;
        for (Index r = 0; r < m.rows(); ++r)
            for (Index c = 0; c < m.cols(); ++c) m(r, c) = e.data[k++];
        return m;
    }

    Vec vector(const std::string& name) const {
        const Entry& e = entry(name);
        if (e.shape.size() != 1) throw io_error("container: '" + name + "' is not a vector");
        Vec v(e.shape[0]);
        for (Index i = 0; i < v.size(); ++i) v(i) = e.data[static_cast<std::size_t>(i)];
        return v;
    }

    double scalar(const std::string& name) const {
        const Entry& e = entry(name);
        if (e.data.size() != 1) throw io_error("container: '" + name + "' is not a scalar");
        return e.data[0];
    }

    const std::vector<Entry>& entries() const { return entries_; }

    void save(const std::filesystem::path& path) const {
        nlohmann::json header;
        header["format_version"] = format_version;
        nlohmann::json list = nlohmann::json::array();
        std::uint64_t offset = 0;
        for (const Entry& e : entries_) {
            nlohmann::json j;
            j["name"] = e.name;
            j["shape"] = e.shape;
            j["dtype"] = "f64-le";
            j["byte_offset"] = offset;
            list.push_back(std::move(j));
            offset += e.data.size() * sizeof(double);
        }
        header["entries"] = std::move(list);
        const std::string header_text = header.dump();
        if (header_text.size() > 0xffffffffull) throw io_error("container: header too large");

        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw io_error("container: cannot open '" + path.string() + "' for writing");
        out.write(magic, 4);
        const std::uint32_t header_len = static_cast<std::uint32_t>(header_text.size());
        out.write(reinterpret_cast<const char*>(&header_len), 4);
        out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
        for (const Entry& e : entries_) {
            out.write(reinterpret_cast<const char*>(e.data.data()),
                      static_cast<std::streamsize>(e.data.size() * sizeof(double)));
        }
        if (!out) throw io_error("container: write failed for '" + path.string() + "'");
    }

    static TensorContainer load(const std::filesystem::path& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw io_error("container: cannot open '" + path.string() + "'");
        char got_magic[4];
        in.read(got_magic, 4);
        if (!in || std::memcmp(got_magic, magic, 4) != 0) {
            throw io_error("container: bad magic in '" + path.string() + "'");
        }
        std::uint32_t header_len = 0;
        in.read(reinterpret_cast<char*>(&header_len), 4);
        std::string header_text(header_len, '\0');
        in.read(header_text.data(), header_len);
        if (!in) throw io_error("container: truncated header in '" + path.string() + "'");

        nlohmann::json header;
        try {
            header = nlohmann::json::parse(header_text);
        } catch (const nlohmann::json::exception& e) {
            throw io_error("container: malformed header JSON: " + std::string(e.what()));
        }
        if (header.value("format_version", -1) != format_version) {
            throw io_error("container: unsupported format version");
        }

        std::string payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        TensorContainer c;
        std::uint64_t expected_offset = 0;
        for (const auto& j : header.at("entries")) {
            Entry e;
            e.name = j.at("name").get<std::string>();
            e.shape = j.at("shape").get<std::vector<std::int64_t>>();
            if (j.at("dtype").get<std::string>() != "f64-le") {
                throw io_error("container: unsupported dtype for '" + e.name + "'");
            }
            std::uint64_t count = 1;
            for (std::int64_t dim : e.shape) {
                if (dim < 0) throw io_error("container: negative dimension in '" + e.name + "'");
                count *= static_cast<std::uint64_t>(dim);
            }
            const std::uint64_t offset = j.at("byte_offset").get<std::uint64_t>();
            const std::uint64_t bytes = count * sizeof(double);
            if (offset != expected_offset) {
                throw io_error("container: overlapping or out-of-order payload for '" + e.name + "'");
            }
            if (offset + bytes > payload.size()) {
                throw io_error("container: entry '" + e.name + "' runs past the payload");
            }
            expected_offset = offset + bytes;
            e.data.resize(count);
            std::memcpy(e.data.data(), payload.data() + offset, bytes);
            for (double v : e.data) {
                if (!std::isfinite(v)) throw io_error("container: non-finite value in '" + e.name + "'");
            }
            c.entries_.push_back(std::move(e));
        }
        if (expected_offset != payload.size()) {
            throw io_error("container: trailing bytes after the last entry");
        }
        return c;
    }

private:
    void push(Entry e) {
        if (e.name.empty()) throw std::invalid_argument("TensorContainer: empty entry name");
        if (contains(e.name)) throw std::invalid_argument("TensorContainer: duplicate entry '" + e.name + "'");
        entries_.push_back(std::move(e));
    }

    std::vector<Entry> entries_;
};

/// Lossless float formatting for CSV output.
inline std::string format_f64(double v) {
    char buffer[64];
    std::snprintf(buffer, sizeof(buffer), "%.17g", v);
    return buffer;
}

inline void write_csv(const std::filesystem::path& path, const Mat& values,
                      const std::vector<std::string>& header = {}) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw io_error("csv: cannot open '" + path.string() + "' for writing");
    if (!header.empty()) {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (i) out << ',';
            out << header[i];
        }
        out << '\n';
    }
    for (Index r = 0; r < values.rows(); ++r) {
        for (Index c = 0; c < values.cols(); ++c) {
            if (c) out << ',';
            out << format_f64(values(r, c));
        }
        out << '\n';
    }
    if (!out) throw io_error("csv: write failed for '" + path.string() + "'");
}

/// Substrate snapshot as an s x d CSV grid for wavefield plots.
inline void write_substrate_csv(const std::filesystem::path& path, const WaveSubstrate& sub) {
    write_csv(path, sub.h);
}

inline void write_train_record_csv(const std::filesystem::path& path, const TrainRecord& record) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw io_error("csv: cannot open '" + path.string() + "' for writing");
    out << "iteration,loss,rolling_loss,horizon,max_abs_eigenvalue\n";
    std::size_t spectrum_idx = 0;
    for (std::size_t i = 0; i < record.loss.size(); ++i) {
        out << i << ',' << format_f64(record.loss[i]) << ',' << format_f64(record.rolling_loss[i])
            << ',' << format_f64(record.horizon[i]) << ',';
        if (spectrum_idx < record.spectrum_iterations.size()
            && record.spectrum_iterations[spectrum_idx] == static_cast<int>(i)) {
            out << format_f64(record.max_abs_eigenvalue[spectrum_idx]);
            ++spectrum_idx;
        }
        out << '\n';
    }
    // Final spectrum sample lands one row past the last training iteration.
    if (spectrum_idx < record.spectrum_iterations.size()) {
        out << record.spectrum_iterations[spectrum_idx] << ",,,,"
            << format_f64(record.max_abs_eigenvalue[spectrum_idx]) << '\n';
    }
    if (!out) throw io_error("csv: write failed for '" + path.string() + "'");
}

inline void save_model(const std::filesystem::path& path, const ElmanRnn& model) {
    model.validate();
    TensorContainer c;
    c.add("w_hh", model.w_hh);
    c.add("w_uh", model.w_uh);
    c.add("w_r", model.w_r);
    c.add("b", model.b);
    c.add_scalar("has_bias", model.has_bias ? 1.0 : 0.0);
    c.save(path);
}

inline ElmanRnn load_model(const std::filesystem::path& path) {
    const TensorContainer c = TensorContainer::load(path);
    ElmanRnn model;
    model.w_hh = c.matrix("w_hh");
    model.w_uh = c.matrix("w_uh");
    model.w_r = c.matrix("w_r");
    model.b = c.vector("b");
    model.has_bias = c.scalar("has_bias") != 0.0;
    model.validate();
    return model;
}

} // namespace wavemem

#include "wavemem/io.hpp"
#include "wavemem/tasks.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <fstream>

using namespace wavemem;

namespace {

std::filesystem::path temp_file(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "wavemem-io-tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

std::string read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

} // namespace

TEST_CASE("container: save/load round trip is bit-identical", "[io]") {
    Rng rng(5);
    TensorContainer c;
    c.add("weights", Mat(rng.gaussian_mat(7, 3)));
    c.add("offsets", Vec(rng.uniform_vec(11, -4.0, 4.0)));
    c.add_scalar("seed", 42.0);

    const auto path_a = temp_file("roundtrip-a.twm1");
    const auto path_b = temp_file("roundtrip-b.twm1");
    c.save(path_a);

    const TensorContainer loaded = TensorContainer::load(path_a);
    CHECK(loaded.matrix("weights") == c.matrix("weights"));
    CHECK(loaded.vector("offsets") == c.vector("offsets"));
    CHECK(loaded.scalar("seed") == 42.0);

    loaded.save(path_b);
    CHECK(read_bytes(path_a) == read_bytes(path_b));
}

TEST_CASE("container: header carries the advertised layout", "[io]") {
    TensorContainer c;
    c.add("a", Mat(Mat::Identity(2, 2)));
    c.add("b", Vec(Vec::Ones(3)));
    const auto path = temp_file("layout.twm1");
    c.save(path);

    const std::string bytes = read_bytes(path);
    REQUIRE(bytes.size() > 8);
    CHECK(bytes.substr(0, 4) == "TWM1");
    std::uint32_t header_len = 0;
    std::memcpy(&header_len, bytes.data() + 4, 4);
    const auto header = nlohmann::json::parse(bytes.substr(8, header_len));
    CHECK(header.at("format_version") == 1);
    REQUIRE(header.at("entries").size() == 2);
    CHECK(header["entries"][0]["name"] == "a");
    CHECK(header["entries"][0]["dtype"] == "f64-le");
    CHECK(header["entries"][0]["byte_offset"] == 0);
    CHECK(header["entries"][1]["byte_offset"] == 4 * 8);
    CHECK(bytes.size() == 8 + header_len + 7 * 8);
}

TEST_CASE("container: malformed files are rejected", "[io]") {
    const auto path = temp_file("bad.twm1");
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out << "NOPE";
    }
    CHECK_THROWS_AS(TensorContainer::load(path), io_error);
    CHECK_THROWS_AS(TensorContainer::load(temp_file("does-not-exist.twm1")), io_error);

    // Truncated payload: claim more data than the file holds.
    {
        nlohmann::json header;
        header["format_version"] = 1;
        header["entries"] = nlohmann::json::array(
            {{{"name", "x"}, {"shape", {4}}, {"dtype", "f64-le"}, {"byte_offset", 0}}});
        const std::string text = header.dump();
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(TensorContainer::magic, 4);
        const std::uint32_t len = static_cast<std::uint32_t>(text.size());
        out.write(reinterpret_cast<const char*>(&len), 4);
        out << text;
        const double one = 1.0;
        out.write(reinterpret_cast<const char*>(&one), 8); // only 1 of 4 values
    }
    CHECK_THROWS_AS(TensorContainer::load(path), io_error);
}

TEST_CASE("container: duplicate names and non-finite values are rejected", "[io]") {
    TensorContainer c;
    c.add_scalar("x", 1.0);
    CHECK_THROWS_AS(c.add_scalar("x", 2.0), std::invalid_argument);
    Mat bad(1, 1);
    bad << std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(c.add("bad", bad), std::invalid_argument);
}

TEST_CASE("model checkpoints survive the container round trip", "[io]") {
    Rng rng(13);
    ElmanRnn model = init_model(16, 4, InitScheme::Gaussian, true, rng);
    model.b = rng.uniform_vec(16, -0.1, 0.1);

    const auto path = temp_file("model.twm1");
    save_model(path, model);
    const ElmanRnn back = load_model(path);
    CHECK(back.w_hh == model.w_hh);
    CHECK(back.w_uh == model.w_uh);
    CHECK(back.w_r == model.w_r);
    CHECK(back.b == model.b);
    CHECK(back.has_bias == model.has_bias);
}

TEST_CASE("csv: 17 significant digits round-trip doubles", "[io]") {
    const double values[] = {1.0 / 3.0, -2.718281828459045e-7, 123456789.123456789, 0.0};
    for (double v : values) {
        const std::string text = format_f64(v);
        CHECK(text.find(',') == std::string::npos);
        CHECK(std::stod(text) == v);
    }

    Mat m(2, 2);
    m << M_PI, -1e-300, 7.0, 0.1;
    const auto path = temp_file("values.csv");
    write_csv(path, m, {"a", "b"});

    std::ifstream in(path);
    std::string header, row;
    std::getline(in, header);
    CHECK(header == "a,b");
    std::getline(in, row);
    const auto comma = row.find(',');
    CHECK(std::stod(row.substr(0, comma)) == M_PI);
    CHECK(std::stod(row.substr(comma + 1)) == -1e-300);
}

TEST_CASE("csv: substrate snapshots export as s x d grids", "[io]") {
    Rng rng(3);
    const WaveSubstrate sub = WaveSubstrate::from_activities(rng.gaussian_mat(3, 2));
    const auto path = temp_file("substrate.csv");
    write_substrate_csv(path, sub);
    std::ifstream in(path);
    std::string line;
    int rows = 0;
    while (std::getline(in, line)) {
        CHECK(std::count(line.begin(), line.end(), ',') == 1);
        ++rows;
    }
    CHECK(rows == 3);
}

TEST_CASE("train record CSV has one row per iteration plus the final spectrum", "[io]") {
    const TaskDef task = repeat_copy_task(2, 2);
    TrainConfig cfg;
    cfg.hidden = 8;
    cfg.batch_size = 4;
    cfg.iterations = 10;
    cfg.spectrum_every = 5;
    cfg.seed = 1;
    const auto [model, record] = bptt_train(task.spec, cfg);

    const auto path = temp_file("record.csv");
    write_train_record_csv(path, record);
    std::ifstream in(path);
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(in, line)) lines.push_back(line);
    REQUIRE(lines.size() == 12); // header + 10 iterations + final spectrum row
    CHECK(lines[0] == "iteration,loss,rolling_loss,horizon,max_abs_eigenvalue");
    CHECK(lines[1].find("0,") == 0);
    // Iterations without a spectrum sample leave the last column empty.
    CHECK(lines[2].back() == ',');
}

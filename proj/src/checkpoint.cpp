#include "keyetm/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "keyetm/errors.hpp"

namespace keyetm {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'K', 'E', 'T', 'M'};
constexpr uint16_t kVersion = 1;
constexpr uint8_t kPrecisionF64 = 1;

void put_bytes(std::ostream& os, uint64_t x, int n) {
    char buf[8];
    for (int i = 0; i < n; ++i) buf[i] = static_cast<char>((x >> (8 * i)) & 0xff);
    os.write(buf, n);
}

uint64_t get_bytes(std::istream& is, int n) {
    char buf[8];
    is.read(buf, n);
    if (is.gcount() != n) throw MalformedHeader("checkpoint is truncated");
    uint64_t x = 0;
    for (int i = 0; i < n; ++i)
        x |= static_cast<uint64_t>(static_cast<unsigned char>(buf[i])) << (8 * i);
    return x;
}

void put_mat(std::ostream& os, const Mat& m) {
    for (const double x : m.v) put_bytes(os, std::bit_cast<uint64_t>(x), 8);
}

Mat get_mat(std::istream& is, int rows, int cols) {
    Mat m(rows, cols);
    for (auto& x : m.v) x = std::bit_cast<double>(get_bytes(is, 8));
    return m;
}

json config_to_json(const TrainConfig& c) {
    return json{{"k", c.k},
                {"epochs", c.epochs},
                {"batch_size", c.batch_size},
                {"learning_rate", c.learning_rate},
                {"hidden_size", c.hidden_size},
                {"lambda1", c.lambda1},
                {"lambda2", c.lambda2},
                {"dropout_rate", c.dropout_rate},
                {"thr", c.thr},
                {"rng_seed", c.rng_seed},
                {"precision", c.precision},
                {"gamma_alpha_topic_axis", c.gamma_alpha_topic_axis},
                {"alpha_warm_start", c.alpha_warm_start},
                {"early_stop_rel", c.early_stop_rel},
                {"early_stop_window", c.early_stop_window},
                {"adam_weight_decay", c.adam_weight_decay}};
}

TrainConfig config_from_json(const json& j) {
    TrainConfig c;
    c.k = j.at("k").get<int>();
    c.epochs = j.at("epochs").get<int>();
    c.batch_size = j.at("batch_size").get<int>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.hidden_size = j.at("hidden_size").get<int>();
    c.lambda1 = j.at("lambda1").get<double>();
    c.lambda2 = j.at("lambda2").get<double>();
    c.dropout_rate = j.at("dropout_rate").get<double>();
    c.thr = j.at("thr").get<double>();
    c.rng_seed = j.at("rng_seed").get<uint64_t>();
    c.precision = j.at("precision").get<std::string>();
    c.gamma_alpha_topic_axis = j.at("gamma_alpha_topic_axis").get<bool>();
    c.alpha_warm_start = j.at("alpha_warm_start").get<bool>();
    c.early_stop_rel = j.at("early_stop_rel").get<double>();
    c.early_stop_window = j.at("early_stop_window").get<int>();
    c.adam_weight_decay = j.at("adam_weight_decay").get<double>();
    return c;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& params, const SeedSpec& seeds,
                     const TrainConfig& config, const std::vector<EpochStats>& history) {
    const int v = params.vocab_size(), k = params.num_topics(), l = params.embed_dim();
    const int h1 = params.W1->value.rows, h2 = params.W2->value.rows;
    if (params.rho.rows != v || params.rho.cols != l)
        throw DimensionMismatch("frozen embeddings do not match the parameter shapes");

    std::ofstream os(path, std::ios::binary);
    if (!os) throw InputError("cannot write checkpoint: " + path);
    os.write(kMagic, 4);
    put_bytes(os, kVersion, 2);
    put_bytes(os, kPrecisionF64, 1);
    for (const int d : {v, k, l, h1, h2}) put_bytes(os, static_cast<uint32_t>(d), 4);
    for (const auto& node : params.trainable()) put_mat(os, node->value);
    put_mat(os, params.rho);

    json trailer;
    trailer["vocab_hash"] = params.vocab_hash;
    json topics = json::array();
    for (const auto& t : seeds.topics) topics.push_back({{"name", t.name}, {"seeds", t.seeds}});
    trailer["seed_spec"] = {{"topics", topics}};
    trailer["config"] = config_to_json(config);
    json hist = json::array();
    for (const auto& e : history)
        hist.push_back({{"epoch", e.epoch},
                        {"neg_elbo", e.neg_elbo},
                        {"l_mu", e.l_mu},
                        {"l_alpha", e.l_alpha},
                        {"total", e.total}});
    trailer["history"] = hist;
    const std::string text = trailer.dump();
    put_bytes(os, text.size(), 8);
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!os) throw InputError("failed while writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw InputError("cannot read checkpoint: " + path);

    char magic[4];
    is.read(magic, 4);
    if (is.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
        throw MalformedHeader("not a model checkpoint: " + path);
    if (get_bytes(is, 2) != kVersion) throw MalformedHeader("unsupported checkpoint version");
    if (get_bytes(is, 1) != kPrecisionF64)
        throw MalformedHeader("unsupported checkpoint precision tag");

    const int v = static_cast<int>(get_bytes(is, 4));
    const int k = static_cast<int>(get_bytes(is, 4));
    const int l = static_cast<int>(get_bytes(is, 4));
    const int h1 = static_cast<int>(get_bytes(is, 4));
    const int h2 = static_cast<int>(get_bytes(is, 4));
    if (v < 1 || k < 1 || l < 1 || h1 < 1 || h2 < 1)
        throw MalformedHeader("checkpoint dimensions are not positive");

    Checkpoint cp;
    cp.params.alpha = ag::param(get_mat(is, k, l));
    cp.params.W1 = ag::param(get_mat(is, h1, v));
    cp.params.b1 = ag::param(get_mat(is, 1, h1));
    cp.params.W2 = ag::param(get_mat(is, h2, h1));
    cp.params.b2 = ag::param(get_mat(is, 1, h2));
    cp.params.Wmu = ag::param(get_mat(is, k, h2));
    cp.params.bmu = ag::param(get_mat(is, 1, k));
    cp.params.Wlogvar = ag::param(get_mat(is, k, h2));
    cp.params.blogvar = ag::param(get_mat(is, 1, k));
    cp.params.rho = get_mat(is, v, l);

    const uint64_t len = get_bytes(is, 8);
    std::string text(len, '\0');
    is.read(text.data(), static_cast<std::streamsize>(len));
    if (static_cast<uint64_t>(is.gcount()) != len)
        throw MalformedHeader("checkpoint trailer is truncated");
    if (is.peek() != std::char_traits<char>::eof())
        throw MalformedHeader("checkpoint has trailing bytes");

    json trailer;
    try {
        trailer = json::parse(text);
    } catch (const json::exception& e) {
        throw MalformedHeader(std::string("checkpoint trailer is not valid JSON: ") + e.what());
    }
    try {
        cp.params.vocab_hash = trailer.at("vocab_hash").get<uint64_t>();
        for (const auto& t : trailer.at("seed_spec").at("topics")) {
            SeedTopic topic;
            topic.name = t.at("name").get<std::string>();
            topic.seeds = t.at("seeds").get<std::vector<std::string>>();
            cp.seeds.topics.push_back(std::move(topic));
        }
        cp.config = config_from_json(trailer.at("config"));
        for (const auto& e : trailer.at("history")) {
            EpochStats stats;
            stats.epoch = e.at("epoch").get<int>();
            stats.neg_elbo = e.at("neg_elbo").get<double>();
            stats.l_mu = e.at("l_mu").get<double>();
            stats.l_alpha = e.at("l_alpha").get<double>();
            stats.total = e.at("total").get<double>();
            cp.history.push_back(stats);
        }
    } catch (const json::exception& e) {
        throw MalformedHeader(std::string("checkpoint trailer is missing fields: ") + e.what());
    }
    if (cp.config.k != k || cp.config.hidden_size != h1 || h1 != h2)
        throw MalformedHeader("checkpoint dimensions disagree with the stored config");
    return cp;
}

}  // namespace keyetm

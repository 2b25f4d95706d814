#include "klora/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "klora/errors.hpp"

namespace klora {

namespace {

void write_doubles_le(std::ofstream& out, const std::vector<double>& values) {
    for (double v : values) {
        uint64_t bits;
        std::memcpy(&bits, &v, sizeof(bits));
        unsigned char buf[8];
        for (int b = 0; b < 8; ++b) buf[b] = static_cast<unsigned char>((bits >> (8 * b)) & 0xff);
        out.write(reinterpret_cast<const char*>(buf), 8);
    }
}

std::vector<double> read_doubles_le(std::ifstream& in, size_t count) {
    std::vector<double> values(count);
    for (size_t i = 0; i < count; ++i) {
        unsigned char buf[8];
        in.read(reinterpret_cast<char*>(buf), 8);
        if (!in) throw invalid_input_error("checkpoint: truncated parameter data");
        uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) bits |= static_cast<uint64_t>(buf[b]) << (8 * b);
        double v;
        std::memcpy(&v, &bits, sizeof(v));
        values[i] = v;
    }
    return values;
}

std::string hidden_to_string(const std::vector<int>& hidden) {
    if (hidden.empty()) return "none";
    std::string s;
    for (size_t i = 0; i < hidden.size(); ++i) {
        if (i) s += ',';
        s += std::to_string(hidden[i]);
    }
    return s;
}

std::vector<int> hidden_from_string(const std::string& s) {
    std::vector<int> out;
    if (s == "none") return out;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(std::stoi(cell));
    return out;
}

void write_encoder_line(std::ofstream& out, const char* tag, const EncoderSpec& spec) {
    out << "encoder " << tag << ' ' << spec.input_dim << ' ' << spec.modes << ' '
        << activation_name(spec.activation) << ' ' << (spec.prepend_constant ? 1 : 0) << ' '
        << hidden_to_string(spec.hidden) << '\n';
}

EncoderSpec parse_encoder_line(std::istringstream& ss) {
    EncoderSpec spec;
    std::string act, hidden;
    int prepend = 0;
    ss >> spec.input_dim >> spec.modes >> act >> prepend >> hidden;
    spec.activation = activation_from_name(act);
    spec.prepend_constant = prepend != 0;
    spec.hidden = hidden_from_string(hidden);
    return spec;
}

} // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw invalid_input_error("save_checkpoint: cannot open " + path);
    out << "KLORA-CKPT 1\n";
    out << "seed " << ckpt.seed << "\n";
    out << "step " << ckpt.step << "\n";
    write_encoder_line(out, "f", ckpt.spec_f);
    if (ckpt.spec_g) write_encoder_line(out, "g", *ckpt.spec_g);
    for (const ParamBlock& b : ckpt.params.layout) {
        out << "block " << b.name << ' ' << b.rows << ' ' << b.cols << '\n';
    }
    out << "params " << ckpt.params.values.size() << '\n';
    out << "ema " << (ckpt.ema.empty() ? 0 : 1) << '\n';
    out << "end\n";
    write_doubles_le(out, ckpt.params.values);
    if (!ckpt.ema.empty()) {
        if (ckpt.ema.size() != ckpt.params.values.size()) {
            throw invalid_input_error("save_checkpoint: ema length mismatch");
        }
        write_doubles_le(out, ckpt.ema);
    }
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw invalid_input_error("load_checkpoint: cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line != "KLORA-CKPT 1") {
        throw invalid_input_error("load_checkpoint: bad magic in " + path);
    }
    Checkpoint ckpt;
    size_t n_params = 0;
    bool has_ema = false;
    while (std::getline(in, line)) {
        if (line == "end") break;
        std::istringstream ss(line);
        std::string key;
        ss >> key;
        if (key == "seed") {
            ss >> ckpt.seed;
        } else if (key == "step") {
            ss >> ckpt.step;
        } else if (key == "encoder") {
            std::string tag;
            ss >> tag;
            if (tag == "f") {
                ckpt.spec_f = parse_encoder_line(ss);
            } else if (tag == "g") {
                ckpt.spec_g = parse_encoder_line(ss);
            } else {
                throw invalid_input_error("load_checkpoint: unknown encoder tag " + tag);
            }
        } else if (key == "block") {
            std::string name;
            int rows = 0, cols = 0;
            ss >> name >> rows >> cols;
            ckpt.params.add_block(name, rows, cols);
        } else if (key == "params") {
            ss >> n_params;
        } else if (key == "ema") {
            int flag = 0;
            ss >> flag;
            has_ema = flag != 0;
        } else {
            throw invalid_input_error("load_checkpoint: unknown header line: " + line);
        }
    }
    if (ckpt.params.values.size() != n_params) {
        throw invalid_input_error("load_checkpoint: layout does not match parameter count");
    }
    ckpt.params.values = read_doubles_le(in, n_params);
    if (has_ema) ckpt.ema = read_doubles_le(in, n_params);
    return ckpt;
}

} // namespace klora

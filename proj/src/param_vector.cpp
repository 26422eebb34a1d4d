#include "vidgp/param_vector.hpp"

#include "vidgp/textio.hpp"

namespace vidgp {

std::string ParamVector::serialize() const {
    std::string out = "PARAMS v1 " + std::to_string(blocks_.size()) + " " +
                      std::to_string(data_.size()) + "\n";
    for (const auto& b : blocks_)
        out += b.name + " " + std::to_string(b.offset) + " " + std::to_string(b.size) + "\n";
    for (Eigen::Index i = 0; i < data_.size(); ++i) {
        out += fmt_full(data_[i]);
        out += (i % 8 == 7) ? '\n' : ' ';
    }
    if (data_.size() % 8 != 0) out += '\n';
    return out;
}

ParamVector ParamVector::deserialize_from(Tokenizer& tok) {
    if (tok.expect("PARAMS magic") != "PARAMS") throw ParseError("expected 'PARAMS' header");
    const std::string version = tok.expect("format version");
    if (version != "v1") throw ParseError("unsupported params format version '" + version + "'");
    const long nblocks = tok.expect_long("block count");
    const long total = tok.expect_long("total size");
    ParamVector pv;
    for (long b = 0; b < nblocks; ++b) {
        const std::string name = tok.expect("block name");
        const long offset = tok.expect_long("block offset");
        const long size = tok.expect_long("block size");
        const int idx = pv.add_block(name, size);
        if (pv.block_info(static_cast<std::size_t>(idx)).offset != offset)
            throw ParseError("block '" + name + "' offset " + std::to_string(offset) +
                             " does not match cumulative layout");
    }
    if (pv.size() != total)
        throw ParseError("declared total " + std::to_string(total) + " != sum of block sizes " +
                         std::to_string(pv.size()));
    for (Eigen::Index i = 0; i < pv.size(); ++i) {
        const double v = tok.expect_double("parameter value");
        if (!std::isfinite(v))
            throw ParseError("non-finite parameter value at index " + std::to_string(i));
        pv.data_[i] = v;
    }
    return pv;
}

ParamVector ParamVector::deserialize(const std::string& text) {
    Tokenizer tok(text);
    ParamVector pv = deserialize_from(tok);
    std::string extra;
    if (tok.next(extra)) throw ParseError("trailing token '" + extra + "' after parameter values");
    return pv;
}

void ParamVector::save(const std::string& path) const { write_text_file(path, serialize()); }

ParamVector ParamVector::load(const std::string& path) {
    try {
        return deserialize(read_text_file(path));
    } catch (const ParseError& e) {
        throw ParseError(path + ": " + e.what());
    }
}

} // namespace vidgp

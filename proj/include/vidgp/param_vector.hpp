#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "vidgp/errors.hpp"

namespace vidgp {

/// Named, non-overlapping slice of a flat parameter vector.
struct ParamBlock {
    std::string name;
    Eigen::Index offset = 0;
    Eigen::Index size = 0;
};

/// Flat parameter storage with a block shape table: one vector holds every
/// layer weight, bias, or variational parameter, addressable by name. The
/// differentiation engine and the optimizers traverse it as a whole; network
/// code maps blocks back to matrices.
class ParamVector {
public:
    ParamVector() = default;

    /// Appends a block of `size` zeros; returns its index.
    int add_block(const std::string& name, Eigen::Index size) {
        for (const auto& b : blocks_)
            if (b.name == name) throw ShapeError("duplicate parameter block '" + name + "'");
        if (size <= 0) throw ShapeError("parameter block '" + name + "' must have positive size");
        ParamBlock b{name, data_.size(), size};
        blocks_.push_back(b);
        data_.conservativeResize(b.offset + size);
        data_.segment(b.offset, size).setZero();
        return static_cast<int>(blocks_.size()) - 1;
    }

    Eigen::Index size() const { return data_.size(); }
    std::size_t block_count() const { return blocks_.size(); }
    const ParamBlock& block_info(std::size_t i) const { return blocks_.at(i); }
    const std::vector<ParamBlock>& blocks() const { return blocks_; }

    Eigen::VectorBlock<Eigen::VectorXd> block(std::size_t i) {
        const ParamBlock& b = blocks_.at(i);
        return data_.segment(b.offset, b.size);
    }
    Eigen::VectorBlock<const Eigen::VectorXd> block(std::size_t i) const {
        const ParamBlock& b = blocks_.at(i);
        return data_.segment(b.offset, b.size);
    }

    int block_index(const std::string& name) const {
        for (std::size_t i = 0; i < blocks_.size(); ++i)
            if (blocks_[i].name == name) return static_cast<int>(i);
        throw ShapeError("no parameter block named '" + name + "'");
    }
    Eigen::VectorBlock<const Eigen::VectorXd> block(const std::string& name) const {
        return block(static_cast<std::size_t>(block_index(name)));
    }
    Eigen::VectorBlock<Eigen::VectorXd> block(const std::string& name) {
        return block(static_cast<std::size_t>(block_index(name)));
    }

    Eigen::VectorXd& data() { return data_; }
    const Eigen::VectorXd& data() const { return data_; }

    bool same_shape(const ParamVector& other) const {
        if (blocks_.size() != other.blocks_.size()) return false;
        for (std::size_t i = 0; i < blocks_.size(); ++i)
            if (blocks_[i].name != other.blocks_[i].name || blocks_[i].size != other.blocks_[i].size)
                return false;
        return true;
    }

    /// Zero-valued copy with the same shape table.
    ParamVector zeros_like() const {
        ParamVector out = *this;
        out.data_.setZero();
        return out;
    }

    /// PARAMS v1 text format: header, block table, then the values.
    std::string serialize() const;
    static ParamVector deserialize_from(class Tokenizer& tok);
    static ParamVector deserialize(const std::string& text);
    void save(const std::string& path) const;
    static ParamVector load(const std::string& path);

private:
    std::vector<ParamBlock> blocks_;
    Eigen::VectorXd data_;
};

} // namespace vidgp

#include "morse/random.hpp"

namespace morse {

std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, SeedPurpose purpose, std::uint64_t index) {
    return mix64(mix64(seed ^ (static_cast<std::uint64_t>(purpose) << 56)) + index);
}

Vector NoiseStream::normal(Index dim) {
    Vector v(dim);
    for (Index i = 0; i < dim; ++i) v[i] = normal_(engine_);
    return v;
}

Matrix NoiseStream::normal(Index rows, Index cols) {
    Matrix m(rows, cols);
    // Column-major fill: column j is the j-th draw of a rows-dim vector.
    for (Index j = 0; j < cols; ++j)
        for (Index i = 0; i < rows; ++i) m(i, j) = normal_(engine_);
    return m;
}

}  // namespace morse

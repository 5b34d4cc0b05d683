#pragma once

#include <compare>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace cyclic {

/// Opaque identifier for one tracked memory location (a block base address,
/// a user-chosen region id, ...). Two accesses can only conflict when their
/// keys compare equal; there is no partial-overlap matching.
struct AccessKey {
    std::uint64_t id = 0;

    friend constexpr auto operator<=>(AccessKey, AccessKey) = default;
};

enum class AccessMode : std::uint8_t {
    In,
    Out,
    InOut,
};

constexpr bool is_write(AccessMode m) { return m != AccessMode::In; }

const char* to_string(AccessMode m);

/// One declared access: this task reads and/or writes the location `key`.
struct DataAccess {
    AccessKey key;
    AccessMode mode = AccessMode::In;

    friend constexpr bool operator==(const DataAccess&, const DataAccess&) = default;
};

inline DataAccess in(std::uint64_t key) { return {AccessKey{key}, AccessMode::In}; }
inline DataAccess out(std::uint64_t key) { return {AccessKey{key}, AccessMode::Out}; }
inline DataAccess inout(std::uint64_t key) { return {AccessKey{key}, AccessMode::InOut}; }

/// True iff the two accesses impose an execution order: same key and at
/// least one side writes. In/In pairs never order.
constexpr bool conflicts(const DataAccess& a, const DataAccess& b) {
    return a.key == b.key && (is_write(a.mode) || is_write(b.mode));
}

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DuplicateKeyError : public Error {
public:
    explicit DuplicateKeyError(AccessKey key);

    AccessKey key() const { return key_; }

private:
    AccessKey key_;
};

/// Returns the list sorted by key. Throws DuplicateKeyError if the same key
/// appears twice; a task declares each location at most once.
std::vector<DataAccess> normalize_access_list(std::vector<DataAccess> accesses);

} // namespace cyclic

#include "cyclic/access.hpp"

#include <algorithm>

namespace cyclic {

const char* to_string(AccessMode m) {
    switch (m) {
    case AccessMode::In: return "in";
    case AccessMode::Out: return "out";
    case AccessMode::InOut: return "inout";
    }
    return "?";
}

DuplicateKeyError::DuplicateKeyError(AccessKey key)
    : Error("duplicate access key " + std::to_string(key.id)), key_(key) {}

std::vector<DataAccess> normalize_access_list(std::vector<DataAccess> accesses) {
    std::sort(accesses.begin(), accesses.end(),
              [](const DataAccess& a, const DataAccess& b) { return a.key < b.key; });
    for (std::size_t i = 1; i < accesses.size(); ++i) {
        if (accesses[i].key == accesses[i - 1].key)
            throw DuplicateKeyError(accesses[i].key);
    }
    return accesses;
}

} // namespace cyclic

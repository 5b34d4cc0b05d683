#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cyclic/access.hpp"

using namespace cyclic;

TEST_CASE("conflicts orders exactly the pairs with a writer on the same key") {
    CHECK(conflicts(out(1), in(1)));
    CHECK_FALSE(conflicts(in(1), in(1)));
    CHECK_FALSE(conflicts(out(1), out(2)));
    CHECK(conflicts(inout(3), inout(3)));
    CHECK(conflicts(in(4), out(4)));
}

TEST_CASE("conflicts is symmetric over all mode pairs and key relations") {
    const AccessMode modes[] = {AccessMode::In, AccessMode::Out, AccessMode::InOut};
    for (AccessMode ma : modes) {
        for (AccessMode mb : modes) {
            DataAccess same_a{AccessKey{7}, ma}, same_b{AccessKey{7}, mb};
            CHECK(conflicts(same_a, same_b) == conflicts(same_b, same_a));
            DataAccess other_b{AccessKey{8}, mb};
            CHECK_FALSE(conflicts(same_a, other_b));
            CHECK_FALSE(conflicts(other_b, same_a));
        }
    }
}

TEST_CASE("an access conflicts with itself iff it writes") {
    for (AccessMode m : {AccessMode::In, AccessMode::Out, AccessMode::InOut}) {
        DataAccess a{AccessKey{5}, m};
        CHECK(conflicts(a, a) == (m != AccessMode::In));
    }
}

TEST_CASE("normalize_access_list sorts by key") {
    auto list = normalize_access_list({in(2), out(1)});
    REQUIRE(list.size() == 2);
    CHECK(list[0].key.id == 1);
    CHECK(list[0].mode == AccessMode::Out);
    CHECK(list[1].key.id == 2);
    CHECK(list[1].mode == AccessMode::In);
}

TEST_CASE("normalize_access_list keeps an empty list empty") {
    CHECK(normalize_access_list({}).empty());
}

TEST_CASE("normalize_access_list rejects duplicate keys") {
    try {
        normalize_access_list({in(1), out(1)});
        FAIL("expected DuplicateKeyError");
    } catch (const DuplicateKeyError& e) {
        CHECK(e.key().id == 1);
    }
}

#pragma once

#include <cstddef>
#include <vector>

#include "relrec/data.hpp"

namespace relrec {

struct SplitSpec {
    std::size_t k_test = 1;
    std::size_t k_valid = 1;
    std::size_t min_train = 1;

    void validate() const;
};

struct UserSplit {
    UserId user = 0;
    std::vector<ItemId> train;
    std::vector<ItemId> valid;
    std::vector<ItemId> test;  // test[0] is the nearest future item
    bool skipped = false;      // too short: whole sequence kept in `train`
};

struct SplitDataset {
    SplitSpec spec;
    std::size_t num_items = 0;
    std::vector<UserSplit> users;  // users[u - 1]

    std::size_t num_skipped() const noexcept;
    std::size_t num_evaluable() const noexcept { return users.size() - num_skipped(); }
};

// Leave-K-out partition of every user sequence into
// train ++ valid ++ test, with |test| = k_test and |valid| = k_valid.
SplitDataset split(const Dataset& dataset, const SplitSpec& spec);

}  // namespace relrec

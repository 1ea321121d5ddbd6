#include "relrec/split.hpp"

#include <algorithm>

#include "relrec/error.hpp"

namespace relrec {

void SplitSpec::validate() const {
    if (k_test < 1) {
        throw Error(ErrorCode::invalid_argument, "invalid split spec: k_test must be >= 1");
    }
    if (min_train < 1) {
        throw Error(ErrorCode::invalid_argument, "invalid split spec: min_train must be >= 1");
    }
}

std::size_t SplitDataset::num_skipped() const noexcept {
    return static_cast<std::size_t>(
        std::count_if(users.begin(), users.end(), [](const UserSplit& u) { return u.skipped; }));
}

SplitDataset split(const Dataset& dataset, const SplitSpec& spec) {
    spec.validate();
    SplitDataset out;
    out.spec = spec;
    out.num_items = dataset.num_items;
    out.users.reserve(dataset.num_users());
    const std::size_t needed = spec.min_train + spec.k_valid + spec.k_test;
    for (std::size_t u = 0; u < dataset.num_users(); ++u) {
        const auto& seq = dataset.sequences[u];
        UserSplit us;
        us.user = static_cast<UserId>(u + 1);
        if (seq.size() < needed) {
            us.skipped = true;
            us.train = seq;
        } else {
            const auto test_begin = seq.end() - static_cast<std::ptrdiff_t>(spec.k_test);
            const auto valid_begin = test_begin - static_cast<std::ptrdiff_t>(spec.k_valid);
            us.train.assign(seq.begin(), valid_begin);
            us.valid.assign(valid_begin, test_begin);
            us.test.assign(test_begin, seq.end());
        }
        out.users.push_back(std::move(us));
    }
    return out;
}

}  // namespace relrec

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

namespace uaf {

// Aligned source-domain sequences and target-domain interactions for the
// users shared by both domains. Item id 0 is reserved for padding in both
// vocabularies.
struct CrossDomainDataset {
    std::vector<int> user_ids;                  // stable order
    std::vector<std::vector<int>> source_seqs;  // parallel to user_ids
    std::unordered_map<int, int> user_index;    // user id -> row
    std::vector<std::pair<int, int>> target;    // (user id, item id)
    int source_vocab = 0;                       // |X|, including pad slot 0
    int target_vocab = 0;                       // |Y|, including pad slot 0
    int seq_len = 0;

    const std::vector<int>& source_of(int user) const;
};

struct Split {
    std::vector<int> train, val, test;  // indices into dataset.target
    uint64_t seed = 0;
};

struct SyntheticConfig {
    int users = 5000;
    int source_vocab = 1000;  // |X| including pad slot
    int target_vocab = 200;   // |Y| including pad slot
    int seq_len = 20;
    int factors = 16;
    double rho = 0.9;            // cross-domain correlation in [0,1]
    int min_interactions = 1;    // target interactions per user
    int max_interactions = 5;
    int min_source_len = 10;
    int max_source_len = 20;
    double sharpness = 3.0;      // softmax concentration over item factors
    uint64_t seed = 1;
};

CrossDomainDataset load_dataset(const std::string& source_path,
                                const std::string& target_path);

// Source TSV only: user_id<TAB>space-separated item ids. Returns sequences in
// file order; max_item reports the largest id seen.
std::vector<std::vector<int>> load_source_sequences(const std::string& path,
                                                    int* max_item = nullptr);
void save_dataset(const CrossDomainDataset& ds, const std::string& source_path,
                  const std::string& target_path);

// Left-pad with 0 to length n; inputs longer than n keep the most recent n.
std::vector<int> pad_sequence(const std::vector<int>& items, int n);

// 80/5/15 split of target interactions, deterministic per seed.
Split split_dataset(const CrossDomainDataset& ds, uint64_t seed);

// Uniform over {1..item_count} \ {positive}; item_count is the number of
// real (non-padding) items in the target catalog.
int sample_negative(int positive, int item_count, std::mt19937_64& rng);

// Shrinks the training partition to ceil(fraction * count); val/test untouched.
Split subsample_training(const Split& split, double fraction, uint64_t seed);

CrossDomainDataset generate_synthetic(const SyntheticConfig& cfg);

// One instance per target interaction: the user's padded source sequence
// paired with that interaction. neg is filled by the trainer per epoch.
struct TrainExample {
    int user = 0;
    std::vector<int> padded_source;
    int pos = 0;
    int neg = 0;
};

// seq_len <= 0 pads to ds.seq_len.
std::vector<TrainExample> make_examples(const CrossDomainDataset& ds,
                                        const std::vector<int>& indices,
                                        int seq_len = 0);

}  // namespace uaf

// Writes a synthetic 10-class digit dataset in IDX format (train + test pair).
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "pathprof/idx.hpp"
#include "pathprof/synth.hpp"

int main(int argc, char** argv) {
    CLI::App app{"pathprof-datagen: synthetic digit IDX writer"};
    int train_count = 8000;
    int test_count = 2000;
    std::uint64_t seed = 1234;
    std::string out_dir = "data";
    app.add_option("--train", train_count, "training images");
    app.add_option("--test", test_count, "test images");
    app.add_option("--seed", seed, "generator seed");
    app.add_option("--out-dir", out_dir, "output directory");
    CLI11_PARSE(app, argc, argv);

    try {
        std::filesystem::create_directories(out_dir);
        const auto train = pathprof::make_synthetic_digits(train_count, seed, "train");
        pathprof::save_idx(train, out_dir + "/train-images-idx3-ubyte",
                           out_dir + "/train-labels-idx1-ubyte");
        const auto test = pathprof::make_synthetic_digits(test_count, seed + 1, "test");
        pathprof::save_idx(test, out_dir + "/t10k-images-idx3-ubyte",
                           out_dir + "/t10k-labels-idx1-ubyte");
        std::cout << "wrote " << train_count << " train + " << test_count << " test images to "
                  << out_dir << "\n";
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

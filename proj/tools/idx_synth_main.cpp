// sbn-idx-synth: writes a procedural digit dataset in MNIST IDX layout so the
// pipeline can run end to end on machines without the real corpus.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <string>

#include "sbnlab/data.hpp"
#include "sbnlab/digits.hpp"

int main(int argc, char** argv) {
  CLI::App app{"generate a synthetic digit dataset in MNIST IDX layout"};
  std::string out_dir;
  size_t train_count = 12000;
  size_t test_count = 2000;
  uint64_t seed = 1;
  app.add_option("--out", out_dir, "output directory")->required();
  app.add_option("--train", train_count, "training image count");
  app.add_option("--test", test_count, "test image count");
  app.add_option("--seed", seed, "generator seed");
  CLI11_PARSE(app, argc, argv);

  try {
    std::filesystem::create_directories(out_dir);
    const sbnlab::Dataset train = sbnlab::make_synth_digits(train_count, seed, "train");
    const sbnlab::Dataset test = sbnlab::make_synth_digits(test_count, seed + 1, "test");
    sbnlab::save_idx_images(train.images, out_dir + "/train-images-idx3-ubyte");
    sbnlab::save_idx_labels(train.labels, out_dir + "/train-labels-idx1-ubyte");
    sbnlab::save_idx_images(test.images, out_dir + "/t10k-images-idx3-ubyte");
    sbnlab::save_idx_labels(test.labels, out_dir + "/t10k-labels-idx1-ubyte");
    std::printf("wrote %zu train / %zu test images to %s\n", train_count, test_count,
                out_dir.c_str());
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

// Writes a random scene-graph corpus in the GQA layout.

#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "copsref/scene_graph.hpp"
#include "copsref/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Synthetic scene-graph corpus"};
  copsref::SyntheticCorpusOptions opt;
  std::string output;
  app.add_option("--images", opt.images, "number of images")->capture_default_str();
  app.add_option("--objects", opt.objects_per_image, "objects per image")->capture_default_str();
  app.add_option("--categories", opt.categories_per_image, "distinct categories per image")->capture_default_str();
  app.add_option("--seed", opt.seed, "random seed")->capture_default_str();
  app.add_option("-o,--output", output, "output file (default stdout)");
  CLI11_PARSE(app, argc, argv);

  const auto doc = copsref::to_json(copsref::synthetic_corpus(opt)).dump(1);
  if (output.empty()) {
    std::cout << doc << '\n';
    return 0;
  }
  std::ofstream out(output, std::ios::binary);
  if (!out) {
    std::cerr << "cannot write " << output << '\n';
    return 2;
  }
  out << doc << '\n';
  return 0;
}

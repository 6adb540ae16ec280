// Stand-in for an external verifier, driven by its first argument:
//   unsat | unknown          print that status
//   lie <vnnlib>             claim sat with the centre of the input box
//   sample <onnx> <vnnlib>   honest random search over the emitted pair
//   garbage                  unparseable output, exit 1
//   missing                  exit 127 as a shell does for a missing command
//   sleep                    never finish
//   args                     print the arguments it received
#include <chrono>
#include <iostream>
#include <thread>

#include "support/formats.hpp"
#include "verif/onnx.hpp"

using namespace verif;

int main(int argc, char** argv) {
  if (argc < 2) return 2;
  const std::string mode = argv[1];
  if (mode == "unsat") {
    std::cout << "UNSAT\n";
  } else if (mode == "unknown") {
    std::cout << "UNKNOWN\n";
  } else if (mode == "lie" && argc >= 3) {
    const auto file = testing::read_vnnlib(testing::read_file(argv[2]));
    const Box box = bounding_box(file.input);
    std::cout << "SAT\ncounterexample:";
    for (size_t i = 0; i < box.lower.size(); ++i) std::cout << ' ' << (box.lower[i] + box.upper[i]) / 2;
    std::cout << '\n';
  } else if (mode == "sample" && argc >= 4) {
    ReducedProblem rp;
    const auto model = parse_onnx(argv[2]);
    rp.network = std::make_shared<const OperationGraph>(model.graph);
    rp.input = testing::read_vnnlib(testing::read_file(argv[3])).input;
    rp.input_shape = model.graph.op(model.graph.inputs()[0]).shape;
    const auto o = sample_falsify(rp, 20000, 1);
    if (o.status == Status::Sat) {
      std::cout.precision(17);
      std::cout << "SAT\ncounterexample:";
      for (double v : o.counterexample->data()) std::cout << ' ' << v;
      std::cout << '\n';
    } else {
      std::cout << "UNKNOWN\n";
    }
  } else if (mode == "garbage") {
    std::cout << "solver crashed: out of cheese\n";
    return 1;
  } else if (mode == "missing") {
    return 127;
  } else if (mode == "sleep") {
    std::this_thread::sleep_for(std::chrono::seconds(60));
  } else if (mode == "args") {
    for (int i = 2; i < argc; ++i) std::cout << argv[i] << '\n';
    std::cout << "UNKNOWN\n";
  } else {
    return 2;
  }
  return 0;
}

// Tiny external metric used to exercise the perceptual plug-in interface:
// prints the MSE between two image files.

#include <cstdio>

#include "burstlab/image_io.hpp"
#include "burstlab/tensor.hpp"

int main(int argc, char** argv) {
    if (argc != 3) {
        std::fprintf(stderr, "usage: mse_tool <a> <b>\n");
        return 2;
    }
    try {
        burstlab::Tensor a = burstlab::read_image(argv[1]);
        burstlab::Tensor b = burstlab::read_image(argv[2]);
        std::printf("%.12e\n", burstlab::mse(a, b));
    } catch (const std::exception& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 1;
    }
    return 0;
}

#include "pathprof/cli.hpp"

int main(int argc, char** argv) {
    return pathprof::cli_dispatch({argv + 1, argv + argc});
}

#include "mmcof/cli.hpp"

int main(int argc, char** argv) { return mmcof::dispatch(argc, argv); }

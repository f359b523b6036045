#include "s3t/dataio.hpp"

int main(int argc, char** argv) { return s3t::io::run_cli(argc, argv); }

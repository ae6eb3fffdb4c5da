#include "emg2text/cli.hpp"

int main(int argc, char** argv) { return emg2text::run_cli(argc, argv); }

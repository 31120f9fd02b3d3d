#include "cli.hpp"

int main(int argc, char** argv) { return gcate::parse_and_dispatch(argc, argv); }

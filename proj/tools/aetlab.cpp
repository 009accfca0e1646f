// aetlab command line front end (subcommands wired up in stages).
#include <cstdio>

int main() {
    std::puts("aetlab: subcommands not wired yet");
    return 0;
}

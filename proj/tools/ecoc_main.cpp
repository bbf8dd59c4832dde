#include <cstdio>

int main() {
    std::puts("ecoc: subcommands pending");
    return 1;
}

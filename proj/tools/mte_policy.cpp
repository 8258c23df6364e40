#include <cstdio>

int main() {
    std::puts("mte_policy: command-line interface under construction");
    return 0;
}

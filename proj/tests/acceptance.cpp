#include <cstdio>
int main() { std::puts("acceptance: no criteria wired yet"); return 1; }

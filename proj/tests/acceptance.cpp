#include <cstdio>
int main(int, char**) { std::puts("[FAIL] acceptance suite not implemented"); return 1; }

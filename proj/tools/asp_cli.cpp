#include <cstdio>

int main() {
  std::puts("asp: cli under construction");
  return 1;
}

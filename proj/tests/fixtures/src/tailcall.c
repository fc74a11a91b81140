#include <stdio.h>

volatile int knob = 5;

__attribute__((noinline)) int g(int x) {
    int r = x * 7;
    if (r > 50) r -= knob;
    return r ^ 3;
}

/* Ends in a jump to g with an empty frame. */
__attribute__((noinline)) int f(int x) { return g(x + knob); }

__attribute__((noinline)) int h(int x) {
    if (x & 1) return g(x);
    return x / 2;
}

int main(void) {
    printf("%d %d %d\n", g(knob), f(knob), h(knob));
    return 0;
}

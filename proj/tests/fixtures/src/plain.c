#include <stdio.h>
#include <string.h>

volatile int seed = 7;

static __attribute__((noinline)) unsigned mix(unsigned x) {
    x ^= x >> 13;
    x *= 0x5bd1e995u;
    return x ^ (x >> 15);
}

static __attribute__((noinline)) int fib(int n) { return n < 2 ? n : fib(n - 1) + fib(n - 2); }

__attribute__((noinline)) long sum_array(const int* a, int n) {
    long s = 0;
    for (int i = 0; i < n; ++i) s += a[i] * (i & 3 ? 1 : -1);
    return s;
}

__attribute__((noinline)) void reverse(char* s) {
    size_t n = strlen(s);
    for (size_t i = 0; i < n / 2; ++i) {
        char t = s[i];
        s[i] = s[n - 1 - i];
        s[n - 1 - i] = t;
    }
}

struct point { int x, y; };

__attribute__((noinline)) struct point add_points(struct point a, struct point b) {
    struct point r = {a.x + b.x, a.y + b.y};
    return r;
}

int main(void) {
    int data[16];
    for (int i = 0; i < 16; ++i) data[i] = (int)mix((unsigned)(seed + i));
    char word[] = "fixture";
    reverse(word);
    struct point p = add_points((struct point){seed, 2}, (struct point){3, seed});
    printf("%ld %d %s %d\n", sum_array(data, 16), fib(seed + 10), word, p.x + p.y);
    return 0;
}

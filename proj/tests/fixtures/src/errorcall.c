#include <error.h>
#include <stdio.h>

volatile int state = 0;

__attribute__((noinline)) int warn_only(int v) {
    if (v < 0) error(0, 0, "negative value %d", v);
    return v + 1;
}

__attribute__((noinline)) int must_be_positive(int v) {
    if (v <= 0) error(1, 0, "value %d is not positive", v);
    return v * 3;
}

int main(void) {
    printf("%d %d\n", warn_only(state - 1), must_be_positive(state + 2));
    return 0;
}

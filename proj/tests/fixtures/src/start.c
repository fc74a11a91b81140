/* Entry point for fixtures linked without the C runtime start files, so the
 * binaries contain only code with compiler-emitted unwind records. */
#include <stdlib.h>

int main(void);

__attribute__((force_align_arg_pointer, noreturn, used)) void _start(void) { exit(main()); }

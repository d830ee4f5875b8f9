#include <math.h>
#include <stdio.h>
#include <stdlib.h>

#include "resexp.h"

int main(void) {
    ResexpMatrix *a = resexp_matrix_conv_diff(10, 50.0);
    if (!a) {
        fprintf(stderr, "create: %s\n", resexp_last_error());
        return 1;
    }
    size_t n = resexp_matrix_dim(a);
    double *v = malloc(n * sizeof *v);
    double *y = malloc(n * sizeof *y);
    for (size_t i = 0; i < n; i++) v[i] = 1.0 / sqrt((double)n);

    ResexpOptions opts = resexp_default_options();
    opts.method = RESEXP_METHOD_KRYLOV_RICHARDSON;
    opts.restart = 10;
    opts.tol = 1e-7;
    ResexpStats stats;
    ResexpCode rc = resexp_expv(a, v, n, 0.1, &opts, y, &stats);
    if (rc != RESEXP_CODE_OK) {
        fprintf(stderr, "expv: %d %s\n", (int)rc, resexp_last_error());
        return 2;
    }
    printf("n=%zu matvecs=%zu residual=%.3e\n", n, stats.matvecs, stats.residual);

    rc = resexp_expv(a, v, n - 1, 0.1, NULL, y, NULL);
    if (rc != RESEXP_CODE_DIMENSION_MISMATCH) return 3;

    free(v);
    free(y);
    resexp_matrix_free(a);
    return 0;
}

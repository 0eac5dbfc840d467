#include <math.h>
#include <stdio.h>
#include <stdlib.h>

#include "mrs.h"

#define CHECK(call)                                                        \
    do {                                                                   \
        MrsStatus s_ = (call);                                             \
        if (s_ != MRS_STATUS_OK) {                                         \
            fprintf(stderr, "%s -> %d: %s\n", #call, (int)s_, mrs_last_error()); \
            return 1;                                                      \
        }                                                                  \
    } while (0)

int main(void) {
    const char *cfg =
        "scenario = \"circle_relax\"\n"
        "markers = 16\n"
        "t_end = 0.1\n"
        "dt = 0.01\n"
        "snapshots = [0.0]\n"
        "seeds = 2\n";
    MrsScenario *sc = NULL;
    CHECK(mrs_scenario_from_toml(cfg, &sc));

    size_t dim = 0, markers = 0;
    CHECK(mrs_scenario_shape(sc, &dim, &markers));
    if (dim != 2 || markers != 16) return 2;

    double *x = malloc(dim * markers * sizeof(double));
    CHECK(mrs_simulate(sc, x, dim * markers));

    MrsEstimate *est = NULL;
    CHECK(mrs_estimate(sc, &est));
    size_t seeds = 0, intervals = 0;
    CHECK(mrs_estimate_shape(est, &seeds, &intervals));
    if (seeds != 2 || intervals != 10) return 3;

    MrsSeedSummary sum;
    CHECK(mrs_estimate_seed(est, 1, &sum));
    if (!isfinite(sum.estimate) || sum.seed != 1) return 4;

    MrsComponents rows[10];
    CHECK(mrs_estimate_intervals(est, 1, rows, 10));
    double total = 0.0;
    for (int k = 0; k < 10; k++) total += rows[k].residual + rows[k].explicit_ + rows[k].quadrature;
    if (fabs(-total - sum.estimate) > 1e-12 * fabs(sum.estimate)) return 5;

    if (mrs_estimate_seed(est, 5, &sum) != MRS_STATUS_OUT_OF_RANGE) return 6;
    if (mrs_last_error() == NULL) return 7;

    mrs_estimate_free(est);
    mrs_scenario_free(sc);
    free(x);
    printf("ok %s\n", mrs_version());
    return 0;
}

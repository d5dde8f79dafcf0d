#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "passive_admittance.h"

#define CHECK(cond)                                                        \
    do {                                                                   \
        if (!(cond)) {                                                     \
            fprintf(stderr, "%s:%d: %s (%s)\n", __FILE__, __LINE__, #cond, \
                    padm_last_error());                                    \
            return 1;                                                      \
        }                                                                  \
    } while (0)

static const char *SCENARIO =
    "name = \"c-smoke\"\n"
    "[plant]\nkind = \"point-mass\"\nmass_kg = 6.0\n"
    "[controller]\nkind = \"passive\"\nnominal_inertia = 1.5\n"
    "nominal_damping = 2.0\neps = 0.1\nkp_per_s = 10.0\n"
    "[[human.segments]]\nkind = \"sinusoid\"\nstart_s = 0.0\nend_s = 2.0\n"
    "amplitude = 5.0\nfrequency_hz = 0.5\n"
    "[sim]\nduration_s = 2.0\n";

int main(void) {
    PadmScenario *s = NULL;
    PadmTrace *t = NULL;

    CHECK(strlen(padm_version()) > 0);
    CHECK(padm_scenario_from_str("name = ", &s) == PADM_STATUS_VALIDATION);
    CHECK(s == NULL && strlen(padm_last_error()) > 0);

    CHECK(padm_scenario_from_str(SCENARIO, &s) == PADM_STATUS_OK);
    CHECK(padm_scenario_set_param(s, "bogus", 1.0) == PADM_STATUS_VALIDATION);
    CHECK(padm_scenario_set_param(s, "eps", 0.05) == PADM_STATUS_OK);
    CHECK(padm_run(s, &t) == PADM_STATUS_OK);
    CHECK(padm_trace_len(t) == 1001 && padm_trace_dim(t) == 1);

    size_t n = 0;
    CHECK(padm_trace_column(t, "q[0]", NULL, 0, &n) == PADM_STATUS_OK && n == 1001);
    double *q = malloc(n * sizeof *q);
    double *qn = malloc(n * sizeof *qn);
    CHECK(padm_trace_column(t, "q[0]", q, n - 1, &n) == PADM_STATUS_INVALID_ARGUMENT);
    CHECK(padm_trace_column(t, "q[0]", q, n, &n) == PADM_STATUS_OK);
    CHECK(padm_trace_column(t, "qn[0]", qn, n, &n) == PADM_STATUS_OK);
    double worst = 0.0;
    for (size_t i = 0; i < n; i++) worst = fmax(worst, fabs(qn[i] - q[i]));
    double e = 0.0;
    CHECK(padm_trace_inf_norm_error(t, 0, &e) == PADM_STATUS_OK && e == worst);
    CHECK(padm_trace_inf_norm_error(t, 1, &e) == PADM_STATUS_INVALID_ARGUMENT);
    free(q);
    free(qn);

    double eps[3] = {0.4, 0.2, 0.1}, err[3] = {4.0, 2.0, 1.0}, ratios[2], slope;
    CHECK(padm_scaling_fit(eps, err, 3, ratios, &slope) == PADM_STATUS_OK);
    CHECK(fabs(ratios[0] - 2.0) < 1e-12 && fabs(slope - 1.0) < 1e-12);

    double re, im;
    CHECK(padm_admittance_tf_passive(5.0, 1.0, 1.0, 1e6, 10.0, 0.0, 1.0, &re, &im) == PADM_STATUS_OK);
    CHECK(fabs(re - 0.5) < 1e-3 && fabs(im + 0.5) < 1e-3);
    CHECK(padm_admittance_tf_passive(5.0, 1.0, 0.0, 10.0, 10.0, 0.0, 0.0, &re, &im) == PADM_STATUS_ANALYSIS);

    padm_trace_free(t);
    padm_scenario_free(s);
    puts("ok");
    return 0;
}

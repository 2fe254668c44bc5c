#include <math.h>
#include <stdio.h>
#include "biconvex.h"

static const char *SMALL =
    "var x(2) nonneg\nvar y(2) nonneg\n"
    "minimize sum(x) + sum(y) + transpose(x) @ y\n"
    "subject to\n  sum(x) >= 1\n  sum(y) >= 1\n"
    "partition [x] [y]\n";

static const char *CYCLE =
    "var x(1)\nvar y(1)\nvar z(1)\n"
    "minimize x * y + y * z + z * x\n"
    "partition [x] [y]\n";

int main(void) {
    BcxProblem *p = NULL;
    BcxReport *r = NULL;
    if (bcx_problem_from_text(SMALL, NULL, &p) != BCX_CODE_OK) {
        fprintf(stderr, "%s\n", bcx_last_error());
        return 1;
    }
    BcxOptions opts = bcx_options_default();
    opts.seed = 1;
    if (bcx_solve(p, &opts, &r) != BCX_CODE_OK) {
        fprintf(stderr, "%s\n", bcx_last_error());
        return 1;
    }
    printf("status %d\n", (int)bcx_report_status(r));
    if (fabs(bcx_report_objective(r) - 2.0) > 1e-5) {
        fprintf(stderr, "objective %g\n", bcx_report_objective(r));
        return 1;
    }
    char *json = NULL;
    if (bcx_report_json(r, &json) != BCX_CODE_OK || json[0] != '{') {
        return 1;
    }
    bcx_string_free(json);
    bcx_report_free(r);
    bcx_problem_free(p);

    bcx_problem_from_text(CYCLE, NULL, &p);
    printf("not dbcp %d\n", (int)bcx_solve(p, NULL, &r));
    bcx_problem_free(p);
    return 0;
}

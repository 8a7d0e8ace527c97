#include <math.h>
#include <stdio.h>
#include "paragroup.h"

int main(void) {
    PgSolver *sv = NULL;
    PgState *st = NULL;
    if (pg_solver_new(4, 1e-3, &sv) != PG_STATUS_OK) return 10;
    if (pg_state_new(4, &st) != PG_STATUS_OK) return 11;
    if (pg_state_add_real_mode(st, PG_FIELD_ZETA, 2, 0, 0.01) != PG_STATUS_OK) return 12;
    PgConserved c0, c1;
    if (pg_solver_conserved(sv, st, &c0) != PG_STATUS_OK) return 13;
    for (int k = 0; k < 5; k++)
        if (pg_solver_step(sv, st, 1e-3) != PG_STATUS_OK) return 14;
    if (pg_solver_conserved(sv, st, &c1) != PG_STATUS_OK) return 15;
    if (fabs(c1.volume - c0.volume) > 1e-10) return 16;
    if (pg_state_add_real_mode(st, PG_FIELD_ZETA, 9, 0, 1.0) != PG_STATUS_INVALID_ARGUMENT) return 17;
    if (pg_last_error() == NULL) return 18;
    printf("t=%g volume=%.12f\n", pg_state_time(st), c1.volume);
    pg_state_free(st);
    pg_solver_free(sv);
    return 0;
}

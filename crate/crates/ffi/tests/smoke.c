#include <stdio.h>
#include "etgp.h"

int main(void) {
    EtgpEngine *engine = NULL;
    if (etgp_engine_new("[problem]\nm = 6\nd = 2\n[graph]\nk = 2\n", &engine) != ETGP_STATUS_OK) {
        char msg[256];
        etgp_last_error(msg, sizeof msg);
        fprintf(stderr, "%s\n", msg);
        return 1;
    }
    if (etgp_engine_step(engine, 20) != ETGP_STATUS_OK) return 2;
    double y[6];
    if (etgp_engine_copy_y(engine, y, 6) != ETGP_STATUS_OK) return 3;
    uint64_t nx = 0, ny = 0;
    etgp_engine_trigger_totals(engine, &nx, &ny);
    printf("round %zu y0 %.6f nx %llu\n", etgp_engine_round(engine), y[0], (unsigned long long)nx);
    etgp_engine_free(engine);
    return etgp_engine_new("[problem]\nm = 0\n", &engine) == ETGP_STATUS_INVALID_CONFIG ? 0 : 4;
}

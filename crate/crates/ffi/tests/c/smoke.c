#include <stdio.h>
#include "infattack.h"

int main(int argc, char **argv) {
    IaGraph *g = NULL;
    if (argc < 2 || ia_graph_load(argv[1], &g) != IA_STATUS_OK) {
        fprintf(stderr, "load failed: %s\n", ia_last_error_message());
        return 1;
    }
    double c = 0.0;
    if (ia_approx_constant(g, 0, 1, 0, 2, IA_DIRECTION_ADD, &c) != IA_STATUS_OK) {
        return 2;
    }
    IaGraph *none = NULL;
    if (ia_graph_load("/nonexistent", &none) != IA_STATUS_DATA_ERROR || none != NULL) {
        return 3;
    }
    printf("%.4f\n", c);
    ia_graph_free(g);
    return 0;
}

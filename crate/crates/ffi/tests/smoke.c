#include <stdio.h>
#include <string.h>

#include "latent_shap.h"

static int32_t unanimity(void *user_data, uint64_t coalition, double *out) {
    (void)user_data;
    *out = (coalition & 3u) == 3u ? 1.0 : 0.0;
    return 0;
}

int main(void) {
    LsAttribution *a = NULL;
    if (ls_exact_shapley(3, unanimity, NULL, &a) != LS_STATUS_OK) {
        fprintf(stderr, "exact failed: %s\n", ls_last_error());
        return 1;
    }
    double values[3], errors[3];
    if (ls_attribution_len(a) != 3 || ls_attribution_values(a, values, errors, 3) != LS_STATUS_OK) {
        return 2;
    }
    printf("%.12f %.12f %.12f\n", values[0], values[1], values[2]);
    ls_attribution_free(a);

    LsModel *m = NULL;
    if (ls_model_new("builtin:unknown", 8, 8, 1, &m) != LS_STATUS_CONFIG || strlen(ls_last_error()) == 0) {
        return 3;
    }
    return 0;
}

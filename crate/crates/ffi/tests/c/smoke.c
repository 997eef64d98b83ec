#include <math.h>
#include <stdio.h>
#include "nc_forge.h"

#define CHECK(cond)                                                   \
    do {                                                              \
        if (!(cond)) {                                                \
            char msg[256];                                            \
            ncf_last_error_message(msg, sizeof msg);                  \
            fprintf(stderr, "line %d: %s (%s)\n", __LINE__, #cond, msg); \
            return 1;                                                 \
        }                                                             \
    } while (0)

int main(void) {
    NcfDataset *full = NULL, *lt = NULL;
    CHECK(ncf_dataset_gaussian(3, 4, 80, 4.0, 1.0, 1, &full) == NCF_STATUS_OK);
    CHECK(ncf_dataset_long_tail(full, 8.0, 1, &lt) == NCF_STATUS_OK);
    size_t counts[3];
    CHECK(ncf_dataset_class_counts(lt, counts, 3) == NCF_STATUS_OK);
    CHECK(counts[0] == 80 && counts[2] == 10);

    NcfTrainOptions opts = ncf_train_options_default();
    opts.epochs = 5;
    opts.hidden_layers = 1;
    opts.hidden_width = 12;
    opts.feature_dim = 6;
    opts.lambda2 = 0.3;
    NcfModel *model = NULL;
    CHECK(ncf_train(lt, &opts, &model) == NCF_STATUS_OK);
    double acc = 0.0;
    CHECK(ncf_evaluate(model, lt, &acc) == NCF_STATUS_OK);
    CHECK(acc > 0.5);
    NcfNcReport rep;
    CHECK(ncf_nc_report(model, lt, &rep) == NCF_STATUS_OK);
    CHECK(rep.nc4_agree > 0.0);

    double etf[6] = {1.0, -0.5, -0.5, 0.0, sqrt(3.0) / 2, -sqrt(3.0) / 2};
    NcfEtfCheck check;
    CHECK(ncf_is_simplex_etf(etf, 2, 3, 1e-8, &check) == NCF_STATUS_OK);
    CHECK(check.verdict);
    double lb = 0.0;
    CHECK(ncf_between_class_reg(etf, 2, 3, &lb) == NCF_STATUS_OK);

    CHECK(ncf_train(NULL, &opts, &model) == NCF_STATUS_NULL_POINTER);
    char msg[64];
    CHECK(ncf_last_error_message(msg, sizeof msg) > 0);

    ncf_model_free(model);
    ncf_dataset_free(lt);
    ncf_dataset_free(full);
    printf("ok %s acc=%.3f\n", ncf_version(), acc);
    return 0;
}

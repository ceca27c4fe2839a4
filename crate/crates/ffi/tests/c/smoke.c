#include <stdio.h>
#include <string.h>

#include "trackfuse.h"

#define CHECK(cond)                                              \
    do {                                                         \
        if (!(cond)) {                                           \
            fprintf(stderr, "%s:%d: %s\n", __FILE__, __LINE__, #cond); \
            return 1;                                            \
        }                                                        \
    } while (0)

int main(void) {
    uint8_t a_px[12] = {0, 1, 1, 0, 0, 1, 1, 0, 0, 0, 0, 0};
    uint8_t b_px[12] = {0, 0, 1, 1, 0, 0, 1, 1, 0, 0, 0, 0};
    TfMask *a = NULL, *b = NULL;
    CHECK(tf_mask_from_bitmap(4, 3, a_px, &a) == TF_STATUS_OK);
    CHECK(tf_mask_from_bitmap(4, 3, b_px, &b) == TF_STATUS_OK);
    CHECK(tf_mask_area(a) == 4);
    double iou = 0.0;
    CHECK(tf_mask_iou(a, b, &iou) == TF_STATUS_OK);
    CHECK(iou > 0.3333 && iou < 0.3334);
    CHECK(tf_mask_iou(a, NULL, &iou) == TF_STATUS_NULL_POINTER);
    CHECK(strstr(tf_last_error_message(), "null") != NULL);
    tf_mask_free(a);
    tf_mask_free(b);

    double cost[4] = {1.0, 0.0, 0.0, 1.0};
    size_t perm[2];
    CHECK(tf_hungarian(cost, 2, perm) == TF_STATUS_OK);
    CHECK(perm[0] == 1 && perm[1] == 0);

    TfTracker *t = NULL;
    CHECK(tf_tracker_new("{\"T\":1}", &t) == TF_STATUS_OK);
    char *out = NULL;
    CHECK(tf_tracker_push_frame_json(t, "{\"frame\":0,\"segments\":[{\"mask\":{\"w\":4,\"h\":2,\"runs\":[1,2,5]}}]}", &out) == TF_STATUS_OK);
    CHECK(strstr(out, "\"id\":0") != NULL);
    tf_string_free(out);
    CHECK(tf_tracker_push_frame_json(t, "{\"frame\":1", &out) == TF_STATUS_FORMAT);
    tf_tracker_free(t);

    printf("ok %s\n", tf_version());
    return 0;
}

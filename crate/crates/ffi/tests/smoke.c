#include <stdio.h>
#include <string.h>
#include "ramsey_trees.h"

int main(void) {
    uint32_t b[1] = {2};
    char *count = NULL;
    if (rt_count_strong(b, 1, 3, 2, &count) != RT_STATUS_OK || strcmp(count, "7") != 0) {
        fprintf(stderr, "count: %s\n", rt_last_error());
        return 1;
    }
    rt_string_free(count);

    RtLevelSelection *sel = NULL;
    if (rt_level_selection_generate(b, 1, 3, 2, NULL, 1, 4, &sel) != RT_STATUS_OK) {
        fprintf(stderr, "generate: %s\n", rt_last_error());
        return 1;
    }
    char *density = NULL;
    if (rt_level_selection_density(sel, &density) != RT_STATUS_OK || strcmp(density, "1/2") != 0) {
        fprintf(stderr, "density: %s\n", density ? density : rt_last_error());
        return 1;
    }
    rt_string_free(density);
    rt_level_selection_free(sel);

    if (rt_level_selection_from_json("not json", &sel) != RT_STATUS_INVALID_INPUT || rt_last_error() == NULL) {
        return 1;
    }
    puts("ok");
    return 0;
}

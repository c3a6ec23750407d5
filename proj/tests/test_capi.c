/* Exercises the shared library through its C header only. */
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "hdas/hdas.h"

static int failures = 0;

#define EXPECT(cond)                                                   \
  do {                                                                 \
    if (!(cond)) {                                                     \
      fprintf(stderr, "%s:%d: expected %s (%s)\n", __FILE__, __LINE__, \
              #cond, hdas_last_error());                               \
      ++failures;                                                      \
    }                                                                  \
  } while (0)

static const char* kSmall =
    "data.image_size = 8\n"
    "data.train_size = 64\n"
    "data.test_size = 32\n"
    "data.search_subset = 64\n"
    "search.epochs = 1\n"
    "search.batch_size = 16\n"
    "search.init_channels = 2\n"
    "search.n_intermediate = 2\n"
    "search.multiplier = 2\n"
    "search.cells_per_stage = 1, 1, 1\n"
    "stage.window_m = 2\n"
    "stage.n_min = 2\n"
    "stage.extra_cells = 1\n"
    "eval.epochs = 1\n"
    "eval.batch_size = 16\n";

static void test_config(void) {
  hdas_config* c = NULL;
  char* value = NULL;
  EXPECT(hdas_config_default(&c) == HDAS_OK);
  EXPECT(hdas_config_set(c, "search.epochs", "12") == HDAS_OK);
  EXPECT(hdas_config_get(c, "search.epochs", &value) == HDAS_OK);
  EXPECT(value && strcmp(value, "12") == 0);
  hdas_string_free(value);
  EXPECT(hdas_config_set(c, "search.nope", "1") == HDAS_ERR_VALIDATION);
  EXPECT(strstr(hdas_last_error(), "search.nope") != NULL);
  EXPECT(hdas_config_get(c, "search.nope", &value) == HDAS_ERR_INVALID_ARGUMENT);
  EXPECT(hdas_config_set(NULL, "search.epochs", "1") == HDAS_ERR_INVALID_ARGUMENT);
  hdas_config_free(c);
  EXPECT(hdas_config_parse("search.epochs = 3\nbogus = 1\n", &c) == HDAS_ERR_VALIDATION);
  EXPECT(strstr(hdas_last_error(), "line 2") != NULL);
  EXPECT(strcmp(hdas_status_name(HDAS_ERR_IO), "io") == 0 || strlen(hdas_status_name(HDAS_ERR_IO)) > 0);
}

static void test_genotype_and_pipeline(void) {
  hdas_config* c = NULL;
  hdas_dataset* data = NULL;
  hdas_search* search = NULL;
  hdas_genotype* cells = NULL;
  hdas_genotype* stages = NULL;
  hdas_genotype* parsed = NULL;
  char *line = NULL, *text = NULL, *errors = NULL, *dot = NULL;
  int train = 0, test = 0, epoch = 0, epochs = 0, counts[3], depths[3];
  hdas_train_result result;

  EXPECT(hdas_config_parse(kSmall, &c) == HDAS_OK);
  EXPECT(hdas_dataset_load(c, &data) == HDAS_OK);
  EXPECT(hdas_dataset_sizes(data, &train, &test) == HDAS_OK);
  EXPECT(train == 64 && test == 32);

  EXPECT(hdas_search_create(c, data, HDAS_PHASE_CELLS, NULL, &search) == HDAS_OK);
  EXPECT(hdas_search_run_epoch(search, &line) == HDAS_OK);
  EXPECT(line && strncmp(line, "0,cells,", 8) == 0);
  hdas_string_free(line);
  EXPECT(hdas_search_progress(search, &epoch, &epochs) == HDAS_OK);
  EXPECT(epoch == 1 && epochs == 1);
  EXPECT(hdas_search_run_epoch(search, &line) == HDAS_ERR_INVALID_ARGUMENT);
  EXPECT(hdas_search_genotype(search, &cells) == HDAS_OK);
  hdas_search_free(search);

  EXPECT(hdas_search_create(c, data, HDAS_PHASE_STAGES, NULL, &search) == HDAS_ERR_INVALID_ARGUMENT);
  EXPECT(hdas_search_create(c, data, HDAS_PHASE_DISTRIBUTION, cells, &search) == HDAS_OK);
  EXPECT(hdas_search_run_epoch(search, NULL) == HDAS_OK);
  EXPECT(hdas_search_genotype(search, &stages) == HDAS_OK);
  hdas_search_free(search);

  EXPECT(hdas_genotype_cells_per_stage(stages, counts) == HDAS_OK);
  EXPECT(counts[0] >= 1 && counts[0] <= 2);
  EXPECT(hdas_genotype_stage_depths(stages, depths) == HDAS_OK);
  EXPECT(depths[0] >= 1 && depths[0] <= counts[0]);

  EXPECT(hdas_genotype_serialize(stages, &text) == HDAS_OK);
  EXPECT(hdas_genotype_parse(text, &parsed, &errors) == HDAS_OK);
  EXPECT(errors == NULL);
  hdas_genotype_free(parsed);
  EXPECT(hdas_genotype_dot(stages, &dot) == HDAS_OK);
  EXPECT(dot && strstr(dot, "digraph") != NULL);
  hdas_string_free(dot);
  hdas_string_free(text);

  EXPECT(hdas_genotype_parse("hdas-genotype 1\nbogus line\n", &parsed, &errors) == HDAS_ERR_VALIDATION);
  EXPECT(errors && strstr(errors, "2:") != NULL);
  hdas_string_free(errors);

  EXPECT(hdas_train(c, data, stages, 1, &result) == HDAS_OK);
  EXPECT(result.test_accuracy >= 0.0 && result.test_accuracy <= 1.0);
  EXPECT(result.epochs == 1 && result.params > 0);
  EXPECT(hdas_result_line(1, stages, &result, &line) == HDAS_OK);
  EXPECT(line && strncmp(line, "1,", 2) == 0);
  hdas_string_free(line);

  hdas_genotype_free(cells);
  hdas_genotype_free(stages);
  hdas_dataset_free(data);
  hdas_config_free(c);
}

static void test_analysis(void) {
  char* decimal = NULL;
  double ri = 0.0;
  EXPECT(hdas_count_space(0, 4, 7, 0, 4, 1, &decimal) == HDAS_OK);
  EXPECT(decimal && strcmp(decimal, "1037664180") == 0);
  hdas_string_free(decimal);
  EXPECT(hdas_count_space(7, 4, 7, 0, 4, 1, &decimal) == HDAS_ERR_INVALID_ARGUMENT);
  EXPECT(hdas_relative_improvement(0.9, 0.8, &ri) == HDAS_OK);
  EXPECT(ri > 12.49 && ri < 12.51);
  EXPECT(hdas_relative_improvement(0.9, 0.0, &ri) == HDAS_ERR_INVALID_ARGUMENT);
}

int main(void) {
  test_config();
  test_genotype_and_pipeline();
  test_analysis();
  if (failures) {
    fprintf(stderr, "%d failure(s)\n", failures);
    return 1;
  }
  printf("c api: all checks passed\n");
  return 0;
}

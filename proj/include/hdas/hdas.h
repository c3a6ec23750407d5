#ifndef HDAS_H
#define HDAS_H

/* C interface of the hdas engine. Every function returns an hdas_status;
 * on failure hdas_last_error() holds a message for the calling thread.
 * Strings handed out by the library are released with hdas_string_free. */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define HDAS_API __declspec(dllexport)
#else
#define HDAS_API __attribute__((visibility("default")))
#endif

typedef enum hdas_status {
  HDAS_OK = 0,
  HDAS_ERR_SHAPE = 1,
  HDAS_ERR_INVALID_ARGUMENT = 2,
  HDAS_ERR_VALIDATION = 3,
  HDAS_ERR_NUMERIC = 4,
  HDAS_ERR_IO = 5,
  HDAS_ERR_INTERNAL = 6
} hdas_status;

typedef enum hdas_phase {
  HDAS_PHASE_CELLS = 0,
  HDAS_PHASE_DISTRIBUTION = 1,
  HDAS_PHASE_STAGES = 2
} hdas_phase;

typedef struct hdas_config hdas_config;
typedef struct hdas_dataset hdas_dataset;
typedef struct hdas_genotype hdas_genotype;
typedef struct hdas_search hdas_search;

HDAS_API const char* hdas_last_error(void);
HDAS_API const char* hdas_status_name(hdas_status status);
HDAS_API void hdas_string_free(char* s);

/* Configuration. Keys are `section.key` as in config files. */
HDAS_API hdas_status hdas_config_default(hdas_config** out);
HDAS_API hdas_status hdas_config_parse(const char* text, hdas_config** out);
HDAS_API hdas_status hdas_config_load(const char* path, hdas_config** out);
HDAS_API hdas_status hdas_config_set(hdas_config* config, const char* key, const char* value);
HDAS_API hdas_status hdas_config_get(const hdas_config* config, const char* key, char** value);
/* Sets the run seed of the search and eval sections. */
HDAS_API hdas_status hdas_config_set_seed(hdas_config* config, uint64_t seed);
HDAS_API hdas_status hdas_config_format(const hdas_config* config, char** text);
HDAS_API void hdas_config_free(hdas_config* config);

/* Train and test splits described by the data section. */
HDAS_API hdas_status hdas_dataset_load(const hdas_config* config, hdas_dataset** out);
HDAS_API hdas_status hdas_dataset_sizes(const hdas_dataset* data, int* train, int* test);
HDAS_API void hdas_dataset_free(hdas_dataset* data);

/* Genotypes. On HDAS_ERR_VALIDATION `errors` (if not NULL) receives one
 * line per problem, prefixed with its line number. */
HDAS_API hdas_status hdas_genotype_parse(const char* text, hdas_genotype** out, char** errors);
HDAS_API hdas_status hdas_genotype_load(const char* path, hdas_genotype** out, char** errors);
HDAS_API hdas_status hdas_genotype_serialize(const hdas_genotype* g, char** text);
HDAS_API hdas_status hdas_genotype_dot(const hdas_genotype* g, char** text);
HDAS_API hdas_status hdas_genotype_hash(const hdas_genotype* g, char** hash);
/* Retained cells per stage (3 entries). */
HDAS_API hdas_status hdas_genotype_cells_per_stage(const hdas_genotype* g, int counts[3]);
/* Longest input-to-output path of each stage DAG (3 entries). */
HDAS_API hdas_status hdas_genotype_stage_depths(const hdas_genotype* g, int depths[3]);
/* Same cells, uniformly sampled stage DAGs. */
HDAS_API hdas_status hdas_genotype_random_stages(const hdas_genotype* base, int window, uint64_t seed,
                                                 hdas_genotype** out);
HDAS_API void hdas_genotype_free(hdas_genotype* g);

/* Search. The distribution and stages phases take their cells from
 * `cells`; the stages phase also takes its per-stage cell counts from it.
 * The dataset must outlive the search. */
HDAS_API hdas_status hdas_search_create(const hdas_config* config, const hdas_dataset* data, hdas_phase phase,
                                        const hdas_genotype* cells, hdas_search** out);
HDAS_API hdas_status hdas_search_run_epoch(hdas_search* search, char** log_line);
HDAS_API hdas_status hdas_search_progress(const hdas_search* search, int* epoch, int* epochs);
HDAS_API hdas_status hdas_search_log(const hdas_search* search, char** text);
HDAS_API hdas_status hdas_search_genotype(const hdas_search* search, hdas_genotype** out);
HDAS_API hdas_status hdas_search_save(const hdas_search* search, const char* path);
HDAS_API hdas_status hdas_search_load(hdas_search* search, const char* path);
HDAS_API void hdas_search_free(hdas_search* search);

typedef struct hdas_train_result {
  double test_accuracy;
  double final_train_loss;
  size_t params;
  int epochs;
} hdas_train_result;

/* Trains the genotype from scratch with the eval section and evaluates it
 * on the test split. */
HDAS_API hdas_status hdas_train(const hdas_config* config, const hdas_dataset* data, const hdas_genotype* g,
                                uint64_t seed, hdas_train_result* result);
/* `seed,genotype_hash,test_acc,params,epochs` */
HDAS_API hdas_status hdas_result_line(uint64_t seed, const hdas_genotype* g, const hdas_train_result* result,
                                      char** line);
HDAS_API hdas_status hdas_relative_improvement(double acc_method, double acc_random, double* ri);

/* Analysis. */
HDAS_API hdas_status hdas_count_space(int kind, int n_nodes, int n_ops, int window, int n_min, int n_instances,
                                      char** decimal);
HDAS_API hdas_status hdas_analyze_space(char** report, int* all_pass);
HDAS_API hdas_status hdas_grad_check(const uint64_t* seeds, size_t n_seeds, char** report, int* all_pass);

#ifdef __cplusplus
}
#endif

#endif

#ifndef EBMUT_EBMUT_H
#define EBMUT_EBMUT_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(EBMUT_BUILDING)
#    define EBM_API __declspec(dllexport)
#  else
#    define EBM_API __declspec(dllimport)
#  endif
#else
#  define EBM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ebm_status {
    EBM_OK = 0,
    EBM_ERR_VALIDATION = 1, /* malformed input, bad parameters */
    EBM_ERR_NUMERIC = 2,    /* a fit or search failed */
    EBM_ERR_IO = 3,         /* file could not be read or written */
    EBM_ERR_ARGUMENT = 4,   /* null handle, index out of range */
    EBM_ERR_INTERNAL = 5
} ebm_status;

typedef struct ebm_pileup ebm_pileup;
typedef struct ebm_regions ebm_regions;
typedef struct ebm_config ebm_config;
typedef struct ebm_model ebm_model;
typedef struct ebm_result ebm_result;
typedef struct ebm_scenario ebm_scenario;
typedef struct ebm_sim ebm_sim;

/* Library version, e.g. "0.1.0". */
EBM_API const char* ebm_version(void);

/* Message for the last failing call on this thread; "" if none. */
EBM_API const char* ebm_last_error(void);

/* Caps internal parallelism; 0 restores the default (hardware concurrency). */
EBM_API void ebm_set_threads(unsigned n);

/* Frees strings returned through char** out-parameters. */
EBM_API void ebm_string_free(char* s);

/* ---- pileups ---------------------------------------------------------- */

/* matched = 0 reads the x_/n_ layout, matched = 1 the xn_/nn_/xt_/nt_ layout. */
EBM_API ebm_status ebm_pileup_load(const char* path, int matched, ebm_pileup** out);
EBM_API ebm_status ebm_pileup_save(const ebm_pileup* p, const char* path);
EBM_API void ebm_pileup_free(ebm_pileup* p);
EBM_API ebm_status ebm_pileup_shape(const ebm_pileup* p, size_t* positions, size_t* samples, int* matched);
/* x/n for (i, j); tumor selects the tumor matrix of a matched pileup.
   *defined is 0 at zero depth and *rate is left untouched. */
EBM_API ebm_status ebm_pileup_error_rate(const ebm_pileup* p, size_t i, size_t j, int tumor, double* rate,
                                         int* defined);

/* `contig pos region_id` TSV covering every position of p. */
EBM_API ebm_status ebm_regions_load(const char* path, const ebm_pileup* p, ebm_regions** out);
EBM_API void ebm_regions_free(ebm_regions* r);

/* ---- configuration ---------------------------------------------------- */

EBM_API ebm_status ebm_config_new(ebm_config** out);
EBM_API void ebm_config_free(ebm_config* c);
/* key as in the JSON config (fdr_threshold, delta_threshold, mode, seed, df,
   empirical_null, method, pseudocount, region_quantile, ...), value as text. */
EBM_API ebm_status ebm_config_set(ebm_config* c, const char* key, const char* value);
/* Applies a flat JSON object from a file; unknown keys are rejected. */
EBM_API ebm_status ebm_config_load_json(ebm_config* c, const char* path);
EBM_API ebm_status ebm_config_to_json(const ebm_config* c, char** out);
/* 16 hex digits plus terminator. */
EBM_API ebm_status ebm_config_fingerprint(const ebm_config* c, char out[17]);
EBM_API ebm_status ebm_config_validate(const ebm_config* c);

/* ---- error model ------------------------------------------------------ */

typedef struct ebm_sample_params {
    const char* name; /* owned by the model */
    double delta;
    double sigma;
    double eta; /* matched only, else 0 */
    double tau;
} ebm_sample_params;

/* regions may be NULL. */
EBM_API ebm_status ebm_fit_reference(const ebm_pileup* reference, const ebm_config* c, const ebm_regions* regions,
                                     ebm_model** out);
EBM_API ebm_status ebm_fit_matched(const ebm_pileup* matched, const ebm_config* c, const ebm_regions* regions,
                                   ebm_model** out);
EBM_API ebm_status ebm_model_load(const char* path, ebm_model** out);
EBM_API ebm_status ebm_model_save(const ebm_model* m, const char* path);
EBM_API void ebm_model_free(ebm_model* m);
EBM_API ebm_status ebm_model_info(const ebm_model* m, size_t* positions, size_t* samples, int* matched);
EBM_API ebm_status ebm_model_sample(const ebm_model* m, size_t j, ebm_sample_params* out);
/* *estimable is 0 where no reference sample had depth; *mu is then NaN. */
EBM_API ebm_status ebm_model_mu(const ebm_model* m, size_t i, double* mu, int* estimable);

/* ---- calling ---------------------------------------------------------- */

typedef struct ebm_record {
    const char* contig; /* owned by the result */
    int64_t pos;
    const char* sample;
    int64_t x; /* -1 in the unmatched design */
    int64_t n;
    int64_t y;
    int64_t m;
    double rate_normal;
    double rate_tumor;
    double r;
    double r_tilde;
    double fdr;
    double delta_hat;
    int defined;
    int called;
    const char* reasons; /* ';'-joined reason codes */
} ebm_record;

typedef struct ebm_detection {
    double fdr_threshold;
    size_t planted;
    size_t true_positives;
    size_t false_positives;
} ebm_detection;

/* model may be NULL (fitted from reference); regions may be NULL. */
EBM_API ebm_status ebm_call_unmatched(const ebm_pileup* reference, const ebm_pileup* clinical, const ebm_config* c,
                                      const ebm_model* model, const ebm_regions* regions, ebm_result** out);
EBM_API ebm_status ebm_call_matched(const ebm_pileup* matched, const ebm_config* c, const ebm_model* model,
                                    const ebm_regions* regions, ebm_result** out);
EBM_API void ebm_result_free(ebm_result* r);
EBM_API ebm_status ebm_result_counts(const ebm_result* r, size_t* records, size_t* called);
EBM_API ebm_status ebm_result_record(const ebm_result* r, size_t k, ebm_record* out);
EBM_API ebm_status ebm_result_note_count(const ebm_result* r, size_t* count);
EBM_API ebm_status ebm_result_note(const ebm_result* r, size_t k, const char** out);
/* QQ slopes of r and r_tilde (1 for a uniform table). */
EBM_API ebm_status ebm_result_qq_slopes(const ebm_result* r, double* slope_r, double* slope_r_tilde);

/* manifest_digest may be NULL; otherwise a header comment line carrying it,
   the config fingerprint and the seed is written first. */
EBM_API ebm_status ebm_result_write_calls(const ebm_result* r, const char* path, const char* manifest_digest);
EBM_API ebm_status ebm_result_write_fdr(const ebm_result* r, const char* path, const char* manifest_digest);
EBM_API ebm_status ebm_result_write_histogram(const ebm_result* r, const char* path, const char* manifest_digest);
EBM_API ebm_status ebm_result_write_qq(const ebm_result* r, const char* path, const char* manifest_digest);
/* Fitted model plus empirical nulls and the marginal density. */
EBM_API ebm_status ebm_result_save_model(const ebm_result* r, const char* path);
/* Scores calls with fdr <= fdr_threshold against a truth CSV. */
EBM_API ebm_status ebm_result_detection(const ebm_result* r, const char* truth_path, double fdr_threshold,
                                        ebm_detection* out);

/* ---- simulation ------------------------------------------------------- */

EBM_API ebm_status ebm_scenario_preset(const char* name, uint64_t seed, ebm_scenario** out);
EBM_API ebm_status ebm_scenario_load(const char* path, uint64_t default_seed, ebm_scenario** out);
EBM_API ebm_status ebm_scenario_to_json(const ebm_scenario* s, char** out);
/* Comma-separated preset names. */
EBM_API const char* ebm_scenario_presets(void);
EBM_API void ebm_scenario_free(ebm_scenario* s);

EBM_API ebm_status ebm_simulate(const ebm_scenario* s, ebm_sim** out);
EBM_API void ebm_sim_free(ebm_sim* sim);
EBM_API ebm_status ebm_sim_is_matched(const ebm_sim* sim, int* matched);
/* Copies out the reference or clinical matrix (unmatched designs). */
EBM_API ebm_status ebm_sim_reference(const ebm_sim* sim, ebm_pileup** out);
EBM_API ebm_status ebm_sim_clinical(const ebm_sim* sim, ebm_pileup** out);
EBM_API ebm_status ebm_sim_matched(const ebm_sim* sim, ebm_pileup** out);
EBM_API ebm_status ebm_sim_truth_count(const ebm_sim* sim, size_t* count);
/* fingerprint names the scenario in the header line; may be NULL. */
EBM_API ebm_status ebm_sim_write_truth(const ebm_sim* sim, const char* path, const char* manifest_digest,
                                       const char* fingerprint, uint64_t seed);

/* ---- diagnostics and theorem checks ---------------------------------- */

/* Reads an fdr CSV and writes histogram and QQ CSVs (either path may be NULL). */
EBM_API ebm_status ebm_diagnose(const char* fdr_path, int bins, const char* histogram_path, const char* qq_path,
                                const char* manifest_digest, const char* fingerprint, uint64_t seed, double* slope_r,
                                double* slope_r_tilde);

typedef struct ebm_theorem {
    double kl_r_uniform;
    double kl_true_assumed;
    double kl_uniform_r;
    double kl_assumed_true;
    double ks_r;
    double ks_assumed_true;
    double max_deviation;
} ebm_theorem;

/* Specs: "poisson:L", "binomial:N:P", "betabinomial:N:A:B", "pmf:p0,p1,...".
   assumed plays the null used for r, truth the law of x. */
EBM_API ebm_status ebm_verify_pair(const char* assumed, const char* truth, ebm_theorem* out);
/* Largest deviation over `count` random finite-support pairs. */
EBM_API ebm_status ebm_verify_suite(uint64_t seed, size_t count, double* max_deviation);

/* ---- digests ---------------------------------------------------------- */

EBM_API ebm_status ebm_digest_file(const char* path, char out[17]);
EBM_API void ebm_digest_bytes(const void* data, size_t len, char out[17]);

#ifdef __cplusplus
}
#endif

#endif

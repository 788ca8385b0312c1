/* C API for the exbehrt library: every pipeline command behind an opaque
 * run handle with key=value configuration and integer status codes. */

#ifndef EXBEHRT_H
#define EXBEHRT_H

#ifdef __cplusplus
extern "C" {
#endif

typedef enum exb_status {
    EXB_OK = 0,
    EXB_USAGE_ERROR = 1, /* bad command, key, or value */
    EXB_DATA_ERROR = 2,  /* unreadable or inconsistent input files */
    EXB_INTERNAL_ERROR = 3
} exb_status;

/* Opaque handle for one configured command run. Not thread-safe; use one
 * handle per thread. */
typedef struct exb_run exb_run;

/* Library version string, e.g. "0.1.0". */
const char* exb_version(void);

/* Space-separated command names. */
const char* exb_commands(void);

/* Creates a handle for a command; NULL when the command is unknown. */
exb_run* exb_run_new(const char* command);

void exb_run_free(exb_run* run);

/* The command's full key set as "key=default" lines. The returned buffer
 * lives until the next exb_run_keys call on this handle or exb_run_free. */
const char* exb_run_keys(exb_run* run);

/* Loads key=value lines from a config file. Precedence: defaults < config
 * file < exb_run_set. Unknown keys fail with EXB_USAGE_ERROR. */
exb_status exb_run_load_config(exb_run* run, const char* path);

/* Overrides a single key. Unknown keys fail with EXB_USAGE_ERROR. */
exb_status exb_run_set(exb_run* run, const char* key, const char* value);

/* Executes the command. Progress lines go to stderr; artifacts and the
 * resolved config are written to the configured output directory. */
exb_status exb_run_exec(exb_run* run);

/* One-line summary of the last successful exec; "" before that. */
const char* exb_run_summary(const exb_run* run);

/* Message of the last error on this handle; "" if none. */
const char* exb_run_error(const exb_run* run);

#ifdef __cplusplus
}
#endif

#endif /* EXBEHRT_H */
